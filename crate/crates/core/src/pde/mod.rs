//! The four benchmark problems: residuals, initial and boundary terms, and
//! collocation sampling.

mod collocation;
mod field;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use collocation::{sample_collocation, sample_residual_points, CollocationBatch, CollocationCounts};
pub use field::{ClosureField, DifferentiableField, ModelField};

use crate::autodiff::jet::{DT, DX1, DX2, DX3, VALUE};
use crate::autodiff::FieldJet;
use crate::models::FunctionSample;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PdeKind {
    Advection,
    DiffusionReaction,
    Burgers,
    Kdv,
}

impl PdeKind {
    pub const ALL: [PdeKind; 4] = [PdeKind::Advection, PdeKind::DiffusionReaction, PdeKind::Burgers, PdeKind::Kdv];

    pub fn name(self) -> &'static str {
        match self {
            PdeKind::Advection => "advection",
            PdeKind::DiffusionReaction => "diffusion_reaction",
            PdeKind::Burgers => "burgers",
            PdeKind::Kdv => "kdv",
        }
    }

    /// Numeric tag used in the dataset header.
    pub fn tag(self) -> u32 {
        match self {
            PdeKind::Advection => 0,
            PdeKind::DiffusionReaction => 1,
            PdeKind::Burgers => 2,
            PdeKind::Kdv => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        PdeKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown equation tag {tag}")))
    }

    pub fn is_periodic(self) -> bool {
        matches!(self, PdeKind::Burgers | PdeKind::Kdv)
    }

    /// Highest spatial derivative order the residual uses.
    pub fn spatial_order(self) -> usize {
        match self {
            PdeKind::Advection => 1,
            PdeKind::DiffusionReaction | PdeKind::Burgers => 2,
            PdeKind::Kdv => 3,
        }
    }
}

impl fmt::Display for PdeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PdeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown equation '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// `s(t, 0) = sin(πt/2)`.
    Inflow,
    /// `s(t, 0) = s(t, L) = 0`.
    DirichletZero,
    /// Enforced by the periodic embedding; no boundary term.
    PeriodicImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec {
    pub kind: PdeKind,
    /// `D`, diffusion–reaction only.
    pub diffusion: Option<f64>,
    /// `k`, diffusion–reaction only.
    pub reaction: Option<f64>,
    /// `ν`, Burgers only.
    pub viscosity: Option<f64>,
    /// `δ`, KdV only.
    pub dispersion: Option<f64>,
    /// Spatial domain `[0, L]`; time domain is `[0, 1]`.
    pub length: f64,
    pub boundary: Boundary,
}

impl PdeSpec {
    fn base(kind: PdeKind, length: f64, boundary: Boundary) -> Self {
        Self {
            kind,
            diffusion: None,
            reaction: None,
            viscosity: None,
            dispersion: None,
            length,
            boundary,
        }
    }

    pub fn advection() -> Self {
        Self::base(PdeKind::Advection, 1.0, Boundary::Inflow)
    }

    pub fn diffusion_reaction(diffusion: f64, reaction: f64) -> Self {
        Self {
            diffusion: Some(diffusion),
            reaction: Some(reaction),
            ..Self::base(PdeKind::DiffusionReaction, 1.0, Boundary::DirichletZero)
        }
    }

    pub fn burgers(viscosity: f64) -> Self {
        Self {
            viscosity: Some(viscosity),
            ..Self::base(PdeKind::Burgers, 1.0, Boundary::PeriodicImplicit)
        }
    }

    pub fn kdv(dispersion: f64) -> Self {
        Self {
            dispersion: Some(dispersion),
            ..Self::base(PdeKind::Kdv, 2.0 * PI, Boundary::PeriodicImplicit)
        }
    }

    /// Default coefficients: `D = k = 0.01`, `ν = 1e-2`, `δ = 0.1`.
    pub fn default_for(kind: PdeKind) -> Self {
        match kind {
            PdeKind::Advection => Self::advection(),
            PdeKind::DiffusionReaction => Self::diffusion_reaction(0.01, 0.01),
            PdeKind::Burgers => Self::burgers(1e-2),
            PdeKind::Kdv => Self::kdv(0.1),
        }
    }

    /// `(D, k, ν, δ)` with zeros for coefficients the kind does not use.
    pub fn coefficient_array(&self) -> [f64; 4] {
        [
            self.diffusion.unwrap_or(0.0),
            self.reaction.unwrap_or(0.0),
            self.viscosity.unwrap_or(0.0),
            self.dispersion.unwrap_or(0.0),
        ]
    }

    /// Rebuilds a spec from its kind and the header coefficient array.
    pub fn from_coefficients(kind: PdeKind, c: [f64; 4]) -> Self {
        match kind {
            PdeKind::Advection => Self::advection(),
            PdeKind::DiffusionReaction => Self::diffusion_reaction(c[0], c[1]),
            PdeKind::Burgers => Self::burgers(c[2]),
            PdeKind::Kdv => Self::kdv(c[3]),
        }
    }

    /// Checks that exactly the coefficients of the kind are set and finite.
    pub fn validate(&self) -> Result<()> {
        let set = [
            self.diffusion.is_some(),
            self.reaction.is_some(),
            self.viscosity.is_some(),
            self.dispersion.is_some(),
        ];
        let expected = match self.kind {
            PdeKind::Advection => [false; 4],
            PdeKind::DiffusionReaction => [true, true, false, false],
            PdeKind::Burgers => [false, false, true, false],
            PdeKind::Kdv => [false, false, false, true],
        };
        if set != expected {
            return Err(Error::Config(format!("coefficients do not match equation {}", self.kind)));
        }
        if self.coefficient_array().iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("coefficients must be finite and non-negative".into()));
        }
        let want_length = if self.kind == PdeKind::Kdv { 2.0 * PI } else { 1.0 };
        if self.length != want_length {
            return Err(Error::Config(format!("domain length for {} must be {want_length}", self.kind)));
        }
        Ok(())
    }

    /// PDE residual from the field jet and the interpolated `u(x)`.
    pub fn residual_from_jet(&self, s: &FieldJet, u: f64) -> f64 {
        let [sx, sxx, sxxx] = s.dx;
        match self.kind {
            PdeKind::Advection => s.dt + u * sx,
            PdeKind::DiffusionReaction => {
                let (d, k) = (self.diffusion.unwrap_or(0.0), self.reaction.unwrap_or(0.0));
                s.dt - d * sxx - k * s.value * s.value - u
            }
            PdeKind::Burgers => s.dt + s.value * sx - self.viscosity.unwrap_or(0.0) * sxx,
            PdeKind::Kdv => {
                let delta = self.dispersion.unwrap_or(0.0);
                s.dt + s.value * sx + delta * delta * sxxx
            }
        }
    }

    /// Partial derivatives of [`Self::residual_from_jet`] with respect to the
    /// jet components `(s, s_x, s_xx, s_xxx, s_t)`.
    pub fn residual_partials(&self, s: &FieldJet, u: f64) -> [f64; 5] {
        let mut p = [0.0; 5];
        p[DT] = 1.0;
        match self.kind {
            PdeKind::Advection => p[DX1] = u,
            PdeKind::DiffusionReaction => {
                p[VALUE] = -2.0 * self.reaction.unwrap_or(0.0) * s.value;
                p[DX2] = -self.diffusion.unwrap_or(0.0);
            }
            PdeKind::Burgers => {
                p[VALUE] = s.dx[0];
                p[DX1] = s.value;
                p[DX2] = -self.viscosity.unwrap_or(0.0);
            }
            PdeKind::Kdv => {
                let delta = self.dispersion.unwrap_or(0.0);
                p[VALUE] = s.dx[0];
                p[DX1] = s.value;
                p[DX3] = delta * delta;
            }
        }
        p
    }

    /// Target of the initial condition at `x` given `u(x)`.
    pub fn initial_target(&self, u: f64, x: f64) -> f64 {
        match self.kind {
            PdeKind::Advection => (PI * x).sin(),
            PdeKind::DiffusionReaction => 0.0,
            PdeKind::Burgers | PdeKind::Kdv => u,
        }
    }

    /// Boundary locations and target values at time `t`.
    pub fn boundary_targets(&self, t: f64) -> Result<Vec<(f64, f64)>> {
        match self.boundary {
            Boundary::Inflow => Ok(vec![(0.0, inflow(t))]),
            Boundary::DirichletZero => Ok(vec![(0.0, 0.0), (self.length, 0.0)]),
            Boundary::PeriodicImplicit => Err(Error::Contract(format!(
                "equation {} has no explicit boundary term",
                self.kind
            ))),
        }
    }
}

/// Advection inflow `g(t) = sin(πt/2)`.
pub fn inflow(t: f64) -> f64 {
    (0.5 * PI * t).sin()
}

/// Advection initial profile `f(x) = sin(πx)`.
pub fn advection_initial(x: f64) -> f64 {
    (PI * x).sin()
}

/// Left-hand-side residual of the equation at `(t, x)`.
pub fn residual<F: DifferentiableField + ?Sized>(
    spec: &PdeSpec,
    field: &F,
    sample: &FunctionSample,
    t: f64,
    x: f64,
) -> Result<f64> {
    let needed = spec.kind.spatial_order();
    if field.max_x_order() < needed {
        return Err(Error::Contract(format!(
            "{} residual needs x-derivatives of order {needed}, field provides {}",
            spec.kind,
            field.max_x_order()
        )));
    }
    let jet = field.jet(t, x)?;
    Ok(spec.residual_from_jet(&jet, sample.u_at(x).0))
}

/// `s(0, x) − target(x)`.
pub fn initial_term<F: DifferentiableField + ?Sized>(
    spec: &PdeSpec,
    field: &F,
    sample: &FunctionSample,
    x: f64,
) -> Result<f64> {
    let s = field.jet(0.0, x)?.value;
    Ok(s - spec.initial_target(sample.u_at(x).0, x))
}

/// Boundary mismatches at time `t`: one entry for advection, two for
/// diffusion–reaction.
pub fn boundary_term<F: DifferentiableField + ?Sized>(
    spec: &PdeSpec,
    field: &F,
    _sample: &FunctionSample,
    t: f64,
) -> Result<Vec<f64>> {
    spec.boundary_targets(t)?
        .into_iter()
        .map(|(x, target)| Ok(field.jet(t, x)?.value - target))
        .collect()
}

#[cfg(test)]
mod tests;
