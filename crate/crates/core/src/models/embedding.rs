//! Fourier feature embeddings of the spatial coordinate.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal, Uniform};

use super::variant::{EmbeddingMode, EmbeddingSpec};
use crate::autodiff::jet::COMPONENTS;
use crate::rng::{stream, stream_rng};

/// An embedding with its frequencies and phases drawn.
///
/// Both deterministic and random modes are stored as `(ω_j, φ_j)` pairs and
/// emit `sin(ω_j x + φ_j), cos(ω_j x + φ_j)` interleaved per `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    spec: EmbeddingSpec,
    freqs: Vec<f64>,
    phases: Vec<f64>,
}

impl Embedding {
    /// Realises `spec`; `seed` only matters for the random mode.
    pub fn new(spec: EmbeddingSpec, seed: u64) -> Self {
        let (freqs, phases) = match spec.mode {
            EmbeddingMode::None => (Vec::new(), Vec::new()),
            EmbeddingMode::Deterministic { max_order } => (
                (1..=max_order).map(|k| 2.0 * PI * k as f64 / spec.length).collect(),
                vec![0.0; max_order],
            ),
            EmbeddingMode::Random { count, scale } => {
                let mut rng = stream_rng(seed, stream::EMBEDDING);
                let omega = Normal::new(0.0, 2.0 * PI * scale).expect("positive scale");
                let phase = Uniform::new(0.0, 2.0 * PI).expect("valid range");
                let freqs: Vec<f64> = (0..count).map(|_| omega.sample(&mut rng)).collect();
                let phases = (0..count).map(|_| phase.sample(&mut rng)).collect();
                (freqs, phases)
            }
        };
        Self { spec, freqs, phases }
    }

    pub fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Feature values at `x`.
    pub fn embed(&self, x: f64) -> Vec<f64> {
        if self.spec.mode == EmbeddingMode::None {
            return vec![x];
        }
        let mut out = Vec::with_capacity(self.dim());
        for (w, p) in self.freqs.iter().zip(&self.phases) {
            let (s, c) = (w * x + p).sin_cos();
            out.push(s);
            out.push(c);
        }
        out
    }

    /// Feature jets `(value, d/dx, d²/dx², d³/dx³, d/dt = 0)` at `x`, written
    /// into `out` (length `dim()`).
    pub fn embed_jets(&self, x: f64, out: &mut [[f64; COMPONENTS]]) {
        debug_assert_eq!(out.len(), self.dim());
        if self.spec.mode == EmbeddingMode::None {
            out[0] = [x, 1.0, 0.0, 0.0, 0.0];
            return;
        }
        for (j, (w, p)) in self.freqs.iter().zip(&self.phases).enumerate() {
            let (s, c) = (w * x + p).sin_cos();
            let (w2, w3) = (w * w, w * w * w);
            out[2 * j] = [s, w * c, -w2 * s, -w3 * c, 0.0];
            out[2 * j + 1] = [c, -w * s, -w2 * c, w3 * s, 0.0];
        }
    }
}

/// Feature vector of `x` under `embedding`.
pub fn embed_coordinates(embedding: &Embedding, x: f64) -> Vec<f64> {
    embedding.embed(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_period() {
        let e = Embedding::new(EmbeddingSpec::deterministic(1, 1.0), 0);
        let v = embed_coordinates(&e, 0.25);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn origin_has_zero_sines_unit_cosines() {
        let e = Embedding::new(EmbeddingSpec::deterministic(4, 1.0), 0);
        let v = e.embed(0.0);
        assert_eq!(v.len(), 8);
        for k in 0..4 {
            assert_eq!(v[2 * k], 0.0);
            assert_eq!(v[2 * k + 1], 1.0);
        }
    }

    #[test]
    fn periodic_wrap() {
        let e = Embedding::new(EmbeddingSpec::deterministic(1, 1.0), 0);
        let (a, b) = (e.embed(0.0), e.embed(1.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn none_is_identity() {
        let e = Embedding::new(EmbeddingSpec::none(1.0), 0);
        assert_eq!(e.embed(0.37), vec![0.37]);
    }

    #[test]
    fn random_draws_are_seeded() {
        let spec = EmbeddingSpec::random(150, 1.0, 1.0);
        let (a, b, c) = (Embedding::new(spec, 4), Embedding::new(spec, 4), Embedding::new(spec, 5));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.embed(0.3).len(), 300);
        assert!(a.phases().iter().all(|p| (0.0..2.0 * PI).contains(p)));
    }

    #[test]
    fn jets_match_finite_differences() {
        let e = Embedding::new(EmbeddingSpec::random(3, 1.0, 1.0), 9);
        let x = 0.41;
        let mut jets = vec![[0.0; COMPONENTS]; e.dim()];
        e.embed_jets(x, &mut jets);
        let h = 1e-4;
        let f = |x: f64| e.embed(x);
        let (p, m, p2, m2) = (f(x + h), f(x - h), f(x + 2.0 * h), f(x - 2.0 * h));
        let c = f(x);
        for i in 0..e.dim() {
            let d1 = (p[i] - m[i]) / (2.0 * h);
            let d2 = (p[i] - 2.0 * c[i] + m[i]) / (h * h);
            let d3 = (p2[i] - 2.0 * p[i] + 2.0 * m[i] - m2[i]) / (2.0 * h * h * h);
            let scale = 1.0 + e.frequencies()[i / 2].abs().powi(3);
            assert!((jets[i][0] - c[i]).abs() < 1e-15);
            assert!((jets[i][1] - d1).abs() < 1e-6 * scale);
            assert!((jets[i][2] - d2).abs() < 1e-4 * scale);
            assert!((jets[i][3] - d3).abs() < 1e-3 * scale);
        }
    }
}
