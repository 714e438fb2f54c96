//! Input-function generators.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::models::UniformGrid;
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

/// Gaussian random field families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GrfSpec {
    /// Squared-exponential covariance `scale²·exp(−(x−x')²/(2l²))`.
    Rbf { length_scale: f64, scale: f64 },
    /// Periodic field with mode variances
    /// `σ_k² = amplitude²·(4π²k²/L² + shift)^(−power)`.
    PeriodicSpectral { amplitude: f64, shift: f64, power: f64 },
}

impl GrfSpec {
    pub fn rbf_default() -> Self {
        GrfSpec::Rbf {
            length_scale: 0.2,
            scale: 1.0,
        }
    }

    pub fn periodic_default() -> Self {
        GrfSpec::PeriodicSpectral {
            amplitude: 25.0,
            shift: 25.0,
            power: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GrfSpec::Rbf { length_scale, scale } => length_scale > 0.0 && scale >= 0.0 && length_scale.is_finite() && scale.is_finite(),
            GrfSpec::PeriodicSpectral { amplitude, shift, power } => {
                amplitude >= 0.0 && shift > 0.0 && power > 0.0 && amplitude.is_finite() && shift.is_finite() && power.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid random field parameters {self:?}")))
        }
    }
}

/// Variance of Fourier mode `k` of the periodic field on a domain of length `length`.
pub fn spectral_variance(amplitude: f64, shift: f64, power: f64, k: f64, length: f64) -> f64 {
    amplitude * amplitude * (4.0 * PI * PI * k * k / (length * length) + shift).powf(-power)
}

/// A real trigonometric polynomial `Σ_{|k|≤K} c_k e^{2πikx/L}` with
/// `c_{−k} = conj(c_k)`; stores `c_0..c_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPolynomial {
    pub coeffs: Vec<Complex64>,
    pub length: f64,
}

impl TrigPolynomial {
    pub fn eval(&self, x: f64) -> f64 {
        let w = 2.0 * PI * x / self.length;
        let mut acc = self.coeffs[0].re;
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            let (s, co) = (w * k as f64).sin_cos();
            acc += 2.0 * (c.re * co - c.im * s);
        }
        acc
    }

    pub fn eval_grid(&self, grid: &UniformGrid) -> Vec<f64> {
        grid.coords().iter().map(|&x| self.eval(x)).collect()
    }

    /// Values on the periodic grid `x_j = jL/n`, `j < n` (requires `n > 2K`).
    pub fn periodic_samples(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.eval(j as f64 * self.length / n as f64)).collect()
    }
}

/// Draws the Fourier coefficients of a periodic field with modes `0..=max_mode`.
pub fn draw_periodic_field(
    amplitude: f64,
    shift: f64,
    power: f64,
    length: f64,
    max_mode: usize,
    seed: u64,
) -> TrigPolynomial {
    let mut rng = stream_rng(seed, stream::INPUT_FUNCTIONS);
    let mut coeffs = Vec::with_capacity(max_mode + 1);
    let sigma0 = spectral_variance(amplitude, shift, power, 0.0, length).sqrt();
    coeffs.push(Complex64::new(sigma0 * rng.sample::<f64, _>(StandardNormal), 0.0));
    for k in 1..=max_mode {
        let sigma = spectral_variance(amplitude, shift, power, k as f64, length).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        coeffs.push(Complex64::new(re, im) * (sigma / std::f64::consts::SQRT_2));
    }
    TrigPolynomial { coeffs, length }
}

/// Lower Cholesky factor of `cov + jitter·I`, escalating the jitter by ×10
/// from 1e-10 up to 1e-6.
fn jittered_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut jitter = 1e-10;
    while jitter <= 1e-6 * (1.0 + 1e-9) {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.l());
        }
        jitter *= 10.0;
    }
    Err(Error::Generation("covariance is not positive definite even with jitter 1e-6".into()))
}

/// Squared-exponential covariance on the grid.
pub fn rbf_covariance(grid: &UniformGrid, length_scale: f64, scale: f64) -> DMatrix<f64> {
    let x = grid.coords();
    DMatrix::from_fn(x.len(), x.len(), |i, j| {
        let d = x[i] - x[j];
        scale * scale * (-d * d / (2.0 * length_scale * length_scale)).exp()
    })
}

/// Sampler holding the factorised RBF covariance so repeated draws are cheap.
pub struct RbfSampler {
    factor: DMatrix<f64>,
}

impl RbfSampler {
    pub fn new(grid: &UniformGrid, length_scale: f64, scale: f64) -> Result<Self> {
        if scale == 0.0 {
            return Ok(Self {
                factor: DMatrix::zeros(grid.points, grid.points),
            });
        }
        Ok(Self {
            factor: jittered_cholesky(&rbf_covariance(grid, length_scale, scale))?,
        })
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, stream::INPUT_FUNCTIONS);
        let n = self.factor.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z).iter().copied().collect()
    }
}

/// One draw of the field on `grid`.
pub fn sample_grf(spec: &GrfSpec, grid: &UniformGrid, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    match *spec {
        GrfSpec::Rbf { length_scale, scale } => Ok(RbfSampler::new(grid, length_scale, scale)?.sample(seed)),
        GrfSpec::PeriodicSpectral { amplitude, shift, power } => {
            let max_mode = (grid.points - 1) / 2;
            Ok(draw_periodic_field(amplitude, shift, power, grid.length(), max_mode, seed).eval_grid(grid))
        }
    }
}

/// `u = v − min(v) + 1`: strictly positive advection velocity.
pub fn positive_velocity(v: &[f64]) -> Vec<f64> {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    v.iter().map(|x| x - min + 1.0).collect()
}

/// `(a, b)` with `a, b ~ N(0, 1)` for the KdV initial condition.
pub fn kdv_coefficients(seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, stream::INPUT_FUNCTIONS);
    (rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// `a·sin x + b·cos x` on `grid`.
pub fn first_harmonic(a: f64, b: f64, grid: &UniformGrid) -> Vec<f64> {
    grid.coords().iter().map(|x| a * x.sin() + b * x.cos()).collect()
}

/// KdV initial condition on the 257-point grid over `[0, 2π]`.
pub fn kdv_initial_condition(seed: u64) -> Vec<f64> {
    let (a, b) = kdv_coefficients(seed);
    first_harmonic(a, b, &UniformGrid::new(0.0, 2.0 * PI, 257))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fourier_coeffs, one_period};

    #[test]
    fn advection_velocity_minimum_is_one() {
        let grid = UniformGrid::new(0.0, 1.0, 101);
        for seed in 0..5 {
            let u = positive_velocity(&sample_grf(&GrfSpec::rbf_default(), &grid, seed).unwrap());
            let min = u.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(min, 1.0);
        }
    }

    #[test]
    fn zero_scale_is_zero_function() {
        let grid = UniformGrid::new(0.0, 1.0, 101);
        let u = sample_grf(&GrfSpec::Rbf { length_scale: 0.2, scale: 0.0 }, &grid, 3).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rbf_empirical_covariance() {
        let grid = UniformGrid::new(0.0, 1.0, 101);
        let sampler = RbfSampler::new(&grid, 0.2, 1.0).unwrap();
        let n = 20_000;
        let pairs = [(50, 50), (50, 55), (50, 60), (50, 70), (10, 25)];
        let mut acc = [0.0; 5];
        for s in 0..n {
            let u = sampler.sample(s as u64);
            for (a, &(i, j)) in acc.iter_mut().zip(&pairs) {
                *a += u[i] * u[j];
            }
        }
        let cov = rbf_covariance(&grid, 0.2, 1.0);
        for (a, &(i, j)) in acc.iter().zip(&pairs) {
            let emp = a / n as f64;
            let want = cov[(i, j)];
            assert!((emp - want).abs() <= 0.05 * want, "({i},{j}): {emp} vs {want}");
        }
    }

    #[test]
    fn spectral_variances_decay() {
        let v: Vec<f64> = (0..10).map(|k| spectral_variance(25.0, 25.0, 4.0, k as f64, 1.0)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        let field = draw_periodic_field(25.0, 25.0, 4.0, 1.0, 50, 1);
        assert!((field.eval(0.0) - field.eval(1.0)).abs() < 1e-12);
    }

    #[test]
    fn kdv_first_mode_coefficients() {
        let grid = UniformGrid::new(0.0, 2.0 * PI, 257);
        let u = first_harmonic(1.0, 0.0, &grid);
        assert!((u[64] - 1.0).abs() < 1e-15);
        for seed in 0..4 {
            let (a, b) = kdv_coefficients(seed);
            assert_eq!((a, b), kdv_coefficients(seed));
            let u = kdv_initial_condition(seed);
            let c = fourier_coeffs(one_period(&u), &[1]).unwrap();
            assert!((c[0] - b / 2.0).abs() < 1e-12 && (c[1] + a / 2.0).abs() < 1e-12);
        }
    }
}
