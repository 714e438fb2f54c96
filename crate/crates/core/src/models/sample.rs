use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// `points` equally spaced coordinates covering the closed interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl UniformGrid {
    pub fn new(start: f64, end: f64, points: usize) -> Self {
        assert!(points >= 2, "a grid needs at least two points");
        assert!(end > start, "grid end must exceed start");
        Self { start, end, points }
    }

    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / (self.points - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.end
        } else {
            self.start + i as f64 * self.spacing()
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Piecewise-linear interpolant of `values` at `x` and its slope.
    /// Points outside the grid are clamped to the boundary cells.
    pub fn interpolate(&self, values: &[f64], x: f64) -> (f64, f64) {
        debug_assert_eq!(values.len(), self.points);
        let h = self.spacing();
        let s = ((x - self.start) / h).clamp(0.0, (self.points - 1) as f64);
        let i = (s.floor() as usize).min(self.points - 2);
        let frac = s - i as f64;
        let slope = (values[i + 1] - values[i]) / h;
        (values[i] + frac * (values[i + 1] - values[i]), slope)
    }
}

/// One input function on the sensor grid and, when available, its reference
/// solution on the `(t, x)` output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionSample {
    pub sensors: Vec<f64>,
    pub sensor_grid: UniformGrid,
    /// `[n_t × n_x]`
    pub solution: Option<Array2<f64>>,
    pub t_axis: UniformGrid,
    pub x_axis: UniformGrid,
}

impl FunctionSample {
    /// A sample without a reference solution; output axes default to 101 points.
    pub fn from_sensors(sensors: Vec<f64>, sensor_grid: UniformGrid) -> Self {
        Self {
            sensors,
            sensor_grid,
            solution: None,
            t_axis: UniformGrid::new(0.0, 1.0, 101),
            x_axis: UniformGrid::new(sensor_grid.start, sensor_grid.end, 101),
        }
    }

    /// `u(x)` by linear interpolation, with its slope.
    pub fn u_at(&self, x: f64) -> (f64, f64) {
        self.sensor_grid.interpolate(&self.sensors, x)
    }
}
