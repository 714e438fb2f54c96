//! Truncated Taylor jets in one spatial direction plus one temporal tangent.
//!
//! A [`FieldJet`] carries `(s, s_x, s_xx, s_xxx, s_t)`. Propagation through
//! affine maps is linear; through `tanh` it follows Faà di Bruno up to third
//! order. Mixed derivatives are never needed by the residuals, so the `t`
//! tangent is first order only.

/// Number of jet components stored per point: value, three x-derivatives, one t-derivative.
pub const COMPONENTS: usize = 5;

pub const VALUE: usize = 0;
pub const DX1: usize = 1;
pub const DX2: usize = 2;
pub const DX3: usize = 3;
pub const DT: usize = 4;

/// Value and derivatives of a scalar field at one space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    /// `[s_x, s_xx, s_xxx]`
    pub dx: [f64; 3],
    pub dt: f64,
}

impl FieldJet {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            ..Self::default()
        }
    }

    pub fn from_components(c: [f64; COMPONENTS]) -> Self {
        Self {
            value: c[VALUE],
            dx: [c[DX1], c[DX2], c[DX3]],
            dt: c[DT],
        }
    }

    pub fn components(&self) -> [f64; COMPONENTS] {
        [self.value, self.dx[0], self.dx[1], self.dx[2], self.dt]
    }
}

/// Derivatives of every network output with respect to one input coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputJet {
    pub value: f64,
    /// `[d1, d2, d3]`; entries above the requested order are zero.
    pub derivs: [f64; 3],
    pub order: usize,
}

impl InputJet {
    pub fn d1(&self) -> f64 {
        self.derivs[0]
    }
    pub fn d2(&self) -> f64 {
        self.derivs[1]
    }
    pub fn d3(&self) -> f64 {
        self.derivs[2]
    }
}

/// `tanh` and its first four derivatives expressed through `y = tanh(z)`.
#[inline]
pub(crate) fn tanh_derivatives(y: f64) -> [f64; 4] {
    let f1 = 1.0 - y * y;
    let f2 = -2.0 * y * f1;
    let f3 = -2.0 * f1 * f1 + 4.0 * y * y * f1;
    let f4 = -4.0 * f1 * f2 + 8.0 * y * f1 * f1 + 4.0 * y * y * f2;
    [f1, f2, f3, f4]
}

/// Pushes a jet through `tanh`.
#[inline]
pub(crate) fn tanh_jet(z: &[f64; COMPONENTS]) -> [f64; COMPONENTS] {
    let y = z[VALUE].tanh();
    let [f1, f2, f3, _] = tanh_derivatives(y);
    let (z1, z2, z3) = (z[DX1], z[DX2], z[DX3]);
    [
        y,
        f1 * z1,
        f2 * z1 * z1 + f1 * z2,
        f3 * z1 * z1 * z1 + 3.0 * f2 * z1 * z2 + f1 * z3,
        f1 * z[DT],
    ]
}

/// Adjoint of [`tanh_jet`]: given the input jet `z`, the output value `y` and
/// the output adjoint `dy`, returns the input adjoint.
#[inline]
pub(crate) fn tanh_jet_backward(
    z: &[f64; COMPONENTS],
    y: f64,
    dy: &[f64; COMPONENTS],
) -> [f64; COMPONENTS] {
    let [f1, f2, f3, f4] = tanh_derivatives(y);
    let (z1, z2, z3, zt) = (z[DX1], z[DX2], z[DX3], z[DT]);
    let dz0 = dy[VALUE] * f1
        + dy[DX1] * f2 * z1
        + dy[DX2] * (f3 * z1 * z1 + f2 * z2)
        + dy[DX3] * (f4 * z1 * z1 * z1 + 3.0 * f3 * z1 * z2 + f2 * z3)
        + dy[DT] * f2 * zt;
    let dz1 = dy[DX1] * f1 + dy[DX2] * 2.0 * f2 * z1 + dy[DX3] * (3.0 * f3 * z1 * z1 + 3.0 * f2 * z2);
    let dz2 = dy[DX2] * f1 + dy[DX3] * 3.0 * f2 * z1;
    let dz3 = dy[DX3] * f1;
    let dzt = dy[DT] * f1;
    [dz0, dz1, dz2, dz3, dzt]
}

/// Leibniz product of two jets.
#[inline]
pub(crate) fn mul_jet(a: &[f64; COMPONENTS], b: &[f64; COMPONENTS]) -> [f64; COMPONENTS] {
    [
        a[0] * b[0],
        a[1] * b[0] + a[0] * b[1],
        a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
        a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
        a[4] * b[0] + a[0] * b[4],
    ]
}

/// Adjoint of [`mul_jet`], accumulated into `da` and `db`.
#[inline]
pub(crate) fn mul_jet_backward(
    a: &[f64; COMPONENTS],
    b: &[f64; COMPONENTS],
    dc: &[f64; COMPONENTS],
    da: &mut [f64; COMPONENTS],
    db: &mut [f64; COMPONENTS],
) {
    da[0] += dc[0] * b[0] + dc[1] * b[1] + dc[2] * b[2] + dc[3] * b[3] + dc[4] * b[4];
    da[1] += dc[1] * b[0] + 2.0 * dc[2] * b[1] + 3.0 * dc[3] * b[2];
    da[2] += dc[2] * b[0] + 3.0 * dc[3] * b[1];
    da[3] += dc[3] * b[0];
    da[4] += dc[4] * b[0];

    db[0] += dc[0] * a[0] + dc[1] * a[1] + dc[2] * a[2] + dc[3] * a[3] + dc[4] * a[4];
    db[1] += dc[1] * a[0] + 2.0 * dc[2] * a[1] + 3.0 * dc[3] * a[2];
    db[2] += dc[2] * a[0] + 3.0 * dc[3] * a[1];
    db[3] += dc[3] * a[0];
    db[4] += dc[4] * a[0];
}
