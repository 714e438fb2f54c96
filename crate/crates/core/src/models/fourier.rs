use std::f64::consts::PI;

use crate::{Error, Result};

/// Normalised DFT coefficients `û_k = (1/M) Σ_j u_j e^{-2πikj/M}` for each
/// `k` in `modes`, emitted as `(Re û_k, Im û_k)` pairs in the order given.
///
/// `u` must hold exactly one period (no duplicated endpoint).
pub fn fourier_coeffs(u: &[f64], modes: &[usize]) -> Result<Vec<f64>> {
    let m = u.len();
    let limit = m / 2;
    let mut out = Vec::with_capacity(2 * modes.len());
    for &k in modes {
        if k >= limit {
            return Err(Error::Truncation { index: k, limit });
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in u.iter().enumerate() {
            // reduce k·j mod M exactly before forming the angle
            let phase = 2.0 * PI * ((k * j) % m) as f64 / m as f64;
            let (s, c) = phase.sin_cos();
            re += v * c;
            im -= v * s;
        }
        out.push(re / m as f64);
        out.push(im / m as f64);
    }
    Ok(out)
}

/// Drops a duplicated periodic endpoint: a sensor vector sampled on the closed
/// interval `[0, L]` becomes one period.
pub fn one_period(sensors: &[f64]) -> &[f64] {
    &sensors[..sensors.len().saturating_sub(1)]
}
