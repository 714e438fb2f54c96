//! Browser demo: reference solutions, random input fields and the paired
//! equivalence test, exported through `wasm-bindgen`.
//!
//! The plain functions return `Result<_, String>` and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert to JavaScript values.

use wasm_bindgen::prelude::*;

use opnet_core::models::UniformGrid;
use opnet_core::pde::{PdeKind, PdeSpec};
use opnet_core::solvers::{generate_sample, sample_grf, GenerationConfig, GrfSpec, Split};
use opnet_core::stats::{compare, ErrorSequence};

/// A solution on the stored space-time grid, row-major `[n_t × n_x]`.
#[wasm_bindgen]
pub struct Solution {
    n_t: usize,
    n_x: usize,
    length: f64,
    values: Vec<f64>,
    input: Vec<f64>,
}

#[wasm_bindgen]
impl Solution {
    #[wasm_bindgen(getter)]
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    #[wasm_bindgen(getter)]
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[wasm_bindgen(getter)]
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// The input function on the sensor grid.
    pub fn input(&self) -> Vec<f64> {
        self.input.clone()
    }
}

/// Spectral resolution used in the browser; far coarser than the stored
/// datasets but stable and visually indistinguishable at this grid size.
const DEMO_SPECTRAL_SIZE: usize = 1024;
const DEMO_SPECTRAL_DT: f64 = 5e-4;

pub fn solve(equation: &str, seed: u64) -> Result<Solution, String> {
    let kind: PdeKind = equation.parse().map_err(|e: opnet_core::Error| e.to_string())?;
    let pde = PdeSpec::default_for(kind);
    let mut cfg = GenerationConfig::default_for(pde, seed);
    cfg.spectral_size = DEMO_SPECTRAL_SIZE;
    cfg.spectral_dt = DEMO_SPECTRAL_DT;
    cfg.jobs = 1;
    let (input, s) = generate_sample(&cfg, Split::Test, 0).map_err(|e| e.to_string())?;
    let (n_t, n_x) = s.dim();
    Ok(Solution {
        n_t,
        n_x,
        length: pde.length,
        values: s.iter().copied().collect(),
        input,
    })
}

pub fn random_field(length_scale: f64, points: usize, seed: u64) -> Result<Vec<f64>, String> {
    if !(3..=1001).contains(&points) {
        return Err(format!("points must lie in 3..=1001, got {points}"));
    }
    let grid = UniformGrid::new(0.0, 1.0, points);
    sample_grf(&GrfSpec::Rbf { length_scale, scale: 1.0 }, &grid, seed).map_err(|e| e.to_string())
}

fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("'{s}' is not a number")))
        .collect()
}

/// Paired comparison of two whitespace- or comma-separated error lists; a
/// non-positive `margin` selects the default margin rule. Returns JSON.
pub fn equivalence(variant: &str, baseline: &str, margin: f64) -> Result<String, String> {
    let v = ErrorSequence::new("variant", 0, parse_numbers(variant)?).map_err(|e| e.to_string())?;
    let b = ErrorSequence::new("baseline", 0, parse_numbers(baseline)?).map_err(|e| e.to_string())?;
    let margin = (margin > 0.0).then_some(margin);
    compare(&v, &b, margin).map(|r| r.to_json()).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = solve)]
pub fn solve_js(equation: &str, seed: u32) -> Result<Solution, JsError> {
    solve(equation, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = randomField)]
pub fn random_field_js(length_scale: f64, points: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    random_field(length_scale, points, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = equivalence)]
pub fn equivalence_js(variant: &str, baseline: &str, margin: f64) -> Result<String, JsError> {
    equivalence(variant, baseline, margin).map_err(|e| JsError::new(&e))
}
