//! Fourier pseudo-spectral ETDRK4 for the periodic Burgers and KdV problems.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{SolverMeta, SolverOutput};
use crate::{Error, Result};

/// Contour points used to evaluate the ETDRK4 coefficient functions.
pub const CONTOUR_POINTS: usize = 32;
/// Blow-up threshold on `max |s|`.
pub const BLOW_UP: f64 = 1e6;

/// Which periodic equation to integrate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralKind {
    /// `s_t + s s_x = ν s_xx`
    Burgers { viscosity: f64 },
    /// `s_t + s s_x + δ² s_xxx = 0`
    Kdv { dispersion: f64 },
}

/// How the fine solution is reduced to the stored spatial grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Downsample {
    /// Trigonometric interpolation onto `points` equispaced points covering
    /// `[0, L]` inclusive.
    Interpolate { points: usize },
    /// Every `stride`-th fine point, then the left endpoint repeated at `x = L`.
    StridePlusEndpoint { stride: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSettings {
    /// Fine grid size `s` (power of two recommended).
    pub size: usize,
    pub dt: f64,
    /// Stored time levels over `[0, 1]`.
    pub n_t: usize,
    pub length: f64,
    pub downsample: Downsample,
}

impl SpectralSettings {
    /// `s = 4096`, `dt = 1e-4`, 101 time levels, 101 interpolated points on `[0, 1]`.
    pub fn burgers_default() -> Self {
        Self {
            size: 4096,
            dt: 1e-4,
            n_t: 101,
            length: 1.0,
            downsample: Downsample::Interpolate { points: 101 },
        }
    }

    /// `s = 4096`, `dt = 1e-4`, 101 time levels, every 32nd point plus the endpoint (129).
    pub fn kdv_default() -> Self {
        Self {
            size: 4096,
            dt: 1e-4,
            n_t: 101,
            length: 2.0 * PI,
            downsample: Downsample::StridePlusEndpoint { stride: 32 },
        }
    }

    pub fn output_points(&self) -> usize {
        match self.downsample {
            Downsample::Interpolate { points } => points,
            Downsample::StridePlusEndpoint { stride } => self.size / stride + 1,
        }
    }
}

/// Signed wavenumber index of FFT bin `j`, with the Nyquist bin mapped to 0.
fn wavenumber(j: usize, n: usize) -> f64 {
    if j < n / 2 {
        j as f64
    } else if j == n / 2 {
        0.0
    } else {
        j as f64 - n as f64
    }
}

/// Per-mode ETDRK4 coefficients for linear symbol `c` and step `h`.
#[derive(Clone, Copy, Debug)]
struct Coefficients {
    e: Complex64,
    e2: Complex64,
    q: Complex64,
    f1: Complex64,
    f2: Complex64,
    f3: Complex64,
}

fn etdrk4_coefficients(c: Complex64, h: f64, real_symbol: bool) -> Coefficients {
    let hl = c * h;
    let mut q = Complex64::new(0.0, 0.0);
    let mut f1 = q;
    let mut f2 = q;
    let mut f3 = q;
    for j in 1..=CONTOUR_POINTS {
        let theta = PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64 * 2.0;
        let lr = hl + Complex64::from_polar(1.0, theta);
        let e = lr.exp();
        let lr2 = lr * lr;
        let lr3 = lr2 * lr;
        q += ((lr / 2.0).exp() - 1.0) / lr;
        f1 += (-4.0 - lr + e * (4.0 - 3.0 * lr + lr2)) / lr3;
        f2 += (2.0 + lr + e * (lr - 2.0)) / lr3;
        f3 += (-4.0 - 3.0 * lr - lr2 + e * (4.0 - lr)) / lr3;
    }
    let m = h / CONTOUR_POINTS as f64;
    let mut out = Coefficients {
        e: hl.exp(),
        e2: (hl / 2.0).exp(),
        q: q * m,
        f1: f1 * m,
        f2: f2 * m,
        f3: f3 * m,
    };
    if real_symbol {
        // the exact values are real; drop contour round-off
        for v in [&mut out.q, &mut out.f1, &mut out.f2, &mut out.f3] {
            v.im = 0.0;
        }
    }
    out
}

struct Workspace {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `−(i q / 2)` masked by the 2/3 rule.
    nonlinear: Vec<Complex64>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let cutoff = n as f64 / 3.0;
        let nonlinear = (0..n)
            .map(|j| {
                let k = wavenumber(j, n);
                if k.abs() >= cutoff {
                    Complex64::new(0.0, 0.0)
                } else {
                    let q = 2.0 * PI * k / length;
                    Complex64::new(0.0, -0.5 * q)
                }
            })
            .collect();
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            nonlinear,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            buf: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Physical-space values of the spectrum `v`; returns the largest imaginary residue.
    fn to_physical(&mut self, v: &[Complex64], out: &mut [f64]) -> f64 {
        self.buf.copy_from_slice(v);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        let mut imag: f64 = 0.0;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re * scale;
            imag = imag.max((b.im * scale).abs());
        }
        imag
    }

    /// `N(v) = −(1/2) ∂_x (s²)`, dealiased.
    fn nonlinear_term(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        self.buf.copy_from_slice(v);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for b in self.buf.iter_mut() {
            let s = b.re * scale;
            *b = Complex64::new(s * s, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        for ((o, b), g) in out.iter_mut().zip(&self.buf).zip(&self.nonlinear) {
            *o = b * g;
        }
    }
}

/// Integrates from the initial condition `ic`, sampled on the periodic fine
/// grid `x_j = jL/s`, `j < s`, to `t = 1` and stores `n_t` time levels.
pub fn solve_spectral_etdrk4(ic: &[f64], kind: SpectralKind, settings: &SpectralSettings) -> Result<SolverOutput> {
    let n = settings.size;
    if ic.len() != n {
        return Err(Error::Dimension {
            context: "spectral initial condition",
            expected: n,
            got: ic.len(),
        });
    }
    if n < 8 || settings.n_t < 2 || !(settings.dt > 0.0) || !(settings.length > 0.0) {
        return Err(Error::Config("invalid spectral solver settings".into()));
    }
    if let Downsample::StridePlusEndpoint { stride } = settings.downsample {
        if stride == 0 || n % stride != 0 {
            return Err(Error::Config(format!("stride {stride} does not divide grid size {n}")));
        }
    }
    if ic.iter().any(|v| !v.is_finite()) {
        return Err(Error::Generation("initial condition is not finite".into()));
    }

    let dt_out = 1.0 / (settings.n_t - 1) as f64;
    let steps_per_output = (dt_out / settings.dt - 1e-9).ceil().max(1.0) as usize;
    let h = dt_out / steps_per_output as f64;

    let length = settings.length;
    let (symbol, real_symbol): (Box<dyn Fn(f64) -> Complex64>, bool) = match kind {
        SpectralKind::Burgers { viscosity } => (Box::new(move |q: f64| Complex64::new(-viscosity * q * q, 0.0)), true),
        SpectralKind::Kdv { dispersion } => {
            let d2 = dispersion * dispersion;
            (Box::new(move |q: f64| Complex64::new(0.0, d2 * q * q * q)), false)
        }
    };
    let coeffs: Vec<Coefficients> = (0..n)
        .map(|j| etdrk4_coefficients(symbol(2.0 * PI * wavenumber(j, n) / length), h, real_symbol))
        .collect();

    let mut ws = Workspace::new(n, length);
    let mut v: Vec<Complex64> = ic.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    ws.forward.process_with_scratch(&mut v, &mut ws.scratch);

    let out_points = settings.output_points();
    let mut solution = Array2::zeros((settings.n_t, out_points));
    let sampler = Sampler::new(settings);
    let mut physical = vec![0.0; n];
    let mut max_imag: f64 = 0.0;
    sampler.store(&v, &mut ws, &mut physical, solution.row_mut(0).as_slice_mut().unwrap(), &mut max_imag);

    let zero = Complex64::new(0.0, 0.0);
    let (mut nv, mut na, mut nb, mut nc) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let (mut a, mut b, mut c) = (vec![zero; n], vec![zero; n], vec![zero; n]);

    for out in 1..settings.n_t {
        for _ in 0..steps_per_output {
            ws.nonlinear_term(&v, &mut nv);
            for j in 0..n {
                a[j] = coeffs[j].e2 * v[j] + coeffs[j].q * nv[j];
            }
            ws.nonlinear_term(&a, &mut na);
            for j in 0..n {
                b[j] = coeffs[j].e2 * v[j] + coeffs[j].q * na[j];
            }
            ws.nonlinear_term(&b, &mut nb);
            for j in 0..n {
                c[j] = coeffs[j].e2 * a[j] + coeffs[j].q * (2.0 * nb[j] - nv[j]);
            }
            ws.nonlinear_term(&c, &mut nc);
            for j in 0..n {
                let k = &coeffs[j];
                v[j] = k.e * v[j] + nv[j] * k.f1 + 2.0 * (na[j] + nb[j]) * k.f2 + nc[j] * k.f3;
            }
        }
        let row = solution.row_mut(out);
        let peak = sampler.store(&v, &mut ws, &mut physical, row.into_slice().unwrap(), &mut max_imag);
        if !(peak <= BLOW_UP) {
            return Err(Error::Generation(format!(
                "spectral solution blew up at t = {:.3} (max |s| = {peak:e})",
                out as f64 * dt_out
            )));
        }
    }
    Ok(SolverOutput {
        solution,
        meta: SolverMeta {
            spectral_size: Some(n),
            internal_dt: h,
            substeps: steps_per_output,
            max_imaginary: max_imag,
        },
    })
}

/// Writes one stored row from the spectrum.
struct Sampler {
    downsample: Downsample,
    /// `e^{2πi k x_p / L}` for interpolation, `[points × n]` over signed `k`.
    basis: Vec<Complex64>,
    n: usize,
}

impl Sampler {
    fn new(settings: &SpectralSettings) -> Self {
        let n = settings.size;
        let basis = match settings.downsample {
            Downsample::Interpolate { points } => {
                let mut basis = Vec::with_capacity(points * n);
                for p in 0..points {
                    let x = if p + 1 == points {
                        settings.length
                    } else {
                        p as f64 * settings.length / (points - 1) as f64
                    };
                    for j in 0..n {
                        let k = wavenumber(j, n);
                        basis.push(Complex64::from_polar(1.0, 2.0 * PI * k * x / settings.length));
                    }
                }
                basis
            }
            Downsample::StridePlusEndpoint { .. } => Vec::new(),
        };
        Self {
            downsample: settings.downsample,
            basis,
            n,
        }
    }

    /// Returns `max |s|` over the fine grid.
    fn store(&self, v: &[Complex64], ws: &mut Workspace, physical: &mut [f64], row: &mut [f64], max_imag: &mut f64) -> f64 {
        *max_imag = max_imag.max(ws.to_physical(v, physical));
        let peak = physical.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
        match self.downsample {
            Downsample::StridePlusEndpoint { stride } => {
                let m = self.n / stride;
                for p in 0..m {
                    row[p] = physical[p * stride];
                }
                row[m] = row[0];
            }
            Downsample::Interpolate { .. } => {
                let scale = 1.0 / self.n as f64;
                for (p, r) in row.iter_mut().enumerate() {
                    let basis = &self.basis[p * self.n..(p + 1) * self.n];
                    let acc: f64 = v.iter().zip(basis).map(|(c, e)| c.re * e.re - c.im * e.im).sum();
                    *r = acc * scale;
                }
            }
        }
        peak
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, length: f64) -> Vec<f64> {
        (0..n).map(|j| j as f64 * length / n as f64).collect()
    }

    fn small(size: usize, dt: f64, length: f64, downsample: Downsample) -> SpectralSettings {
        SpectralSettings {
            size,
            dt,
            n_t: 11,
            length,
            downsample,
        }
    }

    fn mean(row: &[f64]) -> f64 {
        row[..row.len() - 1].iter().sum::<f64>() / (row.len() - 1) as f64
    }

    #[test]
    fn contour_coefficients_match_series_near_zero() {
        // at symbol 0: Q = h/2, f1 = f3 = h/6, f2 = h/6 (limits of the phi-functions)
        let h = 1e-3;
        let k = etdrk4_coefficients(Complex64::new(0.0, 0.0), h, true);
        assert!((k.q.re - h / 2.0).abs() < 1e-15);
        for f in [k.f1, k.f2, k.f3] {
            assert!((f.re - h / 6.0).abs() < 1e-15, "{f}");
        }
        // a large stiff symbol: compare to the direct formulas
        let c = Complex64::new(-5e4, 0.0);
        let k = etdrk4_coefficients(c, h, true);
        let z = c * h;
        let direct_q = h * ((z / 2.0).exp() - 1.0) / z;
        let direct_f1 = h * (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / (z * z * z);
        assert!((k.q - direct_q).norm() < 1e-12);
        assert!((k.f1 - direct_f1).norm() < 1e-12);
    }

    #[test]
    fn burgers_small_amplitude_decays_like_heat_equation() {
        let nu = 1e-2;
        let s = 256;
        let settings = small(s, 1e-3, 1.0, Downsample::Interpolate { points: 101 });
        let ic: Vec<f64> = grid(s, 1.0).iter().map(|x| 1e-6 * (2.0 * PI * x).sin()).collect();
        let out = solve_spectral_etdrk4(&ic, SpectralKind::Burgers { viscosity: nu }, &settings).unwrap();
        for i in 0..11 {
            let t = i as f64 / 10.0;
            let want = 1e-6 * (-nu * 4.0 * PI * PI * t).exp();
            let got = out.solution[[i, 25]];
            assert!(((got - want) / want).abs() < 1e-3, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn mean_is_conserved_and_output_periodic() {
        let s = 512;
        for (kind, length, downsample) in [
            (SpectralKind::Burgers { viscosity: 1e-2 }, 1.0, Downsample::Interpolate { points: 101 }),
            (SpectralKind::Kdv { dispersion: 0.1 }, 2.0 * PI, Downsample::StridePlusEndpoint { stride: 4 }),
        ] {
            let settings = small(s, 1e-4, length, downsample);
            let ic: Vec<f64> = grid(s, length)
                .iter()
                .map(|x| 0.3 + 0.5 * (2.0 * PI * x / length).sin() - 0.2 * (4.0 * PI * x / length).cos())
                .collect();
            let out = solve_spectral_etdrk4(&ic, kind, &settings).unwrap();
            let m0 = mean(out.solution.row(0).as_slice().unwrap());
            assert!((m0 - 0.3).abs() < 1e-12);
            for row in out.solution.rows() {
                let r = row.as_slice().unwrap();
                assert!((mean(r) - m0).abs() < 1e-8, "{:?}", kind);
                assert!((r[0] - r[r.len() - 1]).abs() < 1e-8);
            }
            assert!(out.meta.max_imaginary < 1e-10);
        }
    }

    #[test]
    fn halving_the_step_changes_little() {
        let s = 256;
        let length = 2.0 * PI;
        let ic: Vec<f64> = grid(s, length).iter().map(|x| 0.8 * x.sin() - 0.4 * x.cos()).collect();
        let run = |dt: f64| {
            let settings = small(s, dt, length, Downsample::StridePlusEndpoint { stride: 2 });
            solve_spectral_etdrk4(&ic, SpectralKind::Kdv { dispersion: 0.1 }, &settings).unwrap().solution
        };
        let (a, b) = (run(2e-4), run(1e-4));
        let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn blow_up_is_reported() {
        let s = 64;
        let settings = small(s, 1e-3, 1.0, Downsample::Interpolate { points: 11 });
        let ic: Vec<f64> = grid(s, 1.0).iter().map(|x| 1e7 * (2.0 * PI * x).sin()).collect();
        let r = solve_spectral_etdrk4(&ic, SpectralKind::Burgers { viscosity: 1e-2 }, &settings);
        assert!(matches!(r, Err(Error::Generation(_))));
    }

    #[test]
    fn default_output_widths() {
        assert_eq!(SpectralSettings::burgers_default().output_points(), 101);
        assert_eq!(SpectralSettings::kdv_default().output_points(), 129);
    }
}
