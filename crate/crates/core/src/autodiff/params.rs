use super::network::DenseNetwork;

/// All trainable networks of one model, in a fixed order defined by the model
/// (branch, trunk, then encoders when present).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub nets: Vec<DenseNetwork>,
}

impl ModelParams {
    pub fn new(nets: Vec<DenseNetwork>) -> Self {
        Self { nets }
    }

    pub fn num_params(&self) -> usize {
        self.nets.iter().map(DenseNetwork::num_params).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.nets.iter().flat_map(DenseNetwork::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.nets.iter_mut().flat_map(DenseNetwork::values_mut)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        for (p, v) in self.values_mut().zip(flat) {
            *p = *v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

/// Gradient of a scalar loss, shape-congruent with [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub nets: Vec<DenseNetwork>,
}

impl ParamGradient {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            nets: params.nets.iter().map(DenseNetwork::zeros_like).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.nets.iter().flat_map(DenseNetwork::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.nets.iter_mut().flat_map(DenseNetwork::values_mut)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn norm_squared(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    /// Directional derivative along `direction` (flat, canonical order).
    pub fn dot_flat(&self, direction: &[f64]) -> f64 {
        self.values().zip(direction).map(|(g, d)| g * d).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &ParamGradient) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }
}
