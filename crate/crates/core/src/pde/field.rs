use crate::autodiff::FieldJet;
use crate::models::{FunctionSample, FunctionTable, OperatorModel, PointBatch};
use crate::Result;

/// A scalar field `s(t, x)` that can report `(s, s_x, s_xx, s_xxx, s_t)`.
pub trait DifferentiableField {
    fn jet(&self, t: f64, x: f64) -> Result<FieldJet>;

    /// Highest x-derivative order the field provides.
    fn max_x_order(&self) -> usize {
        3
    }
}

/// A field given by a closure returning its jet; handy for closed-form fields.
pub struct ClosureField<F> {
    f: F,
    order: usize,
}

impl<F: Fn(f64, f64) -> FieldJet> ClosureField<F> {
    pub fn new(f: F) -> Self {
        Self { f, order: 3 }
    }

    /// A field that only guarantees x-derivatives up to `order`.
    pub fn with_order(f: F, order: usize) -> Self {
        Self { f, order }
    }
}

impl<F: Fn(f64, f64) -> FieldJet> DifferentiableField for ClosureField<F> {
    fn jet(&self, t: f64, x: f64) -> Result<FieldJet> {
        Ok((self.f)(t, x))
    }

    fn max_x_order(&self) -> usize {
        self.order
    }
}

/// An operator model conditioned on one input function.
pub struct ModelField<'a> {
    model: &'a OperatorModel,
    table: FunctionTable,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a OperatorModel, sample: &FunctionSample) -> Result<Self> {
        let table = FunctionTable::from_samples(model, std::slice::from_ref(sample))?;
        Ok(Self { model, table })
    }
}

impl DifferentiableField for ModelField<'_> {
    fn jet(&self, t: f64, x: f64) -> Result<FieldJet> {
        let points = PointBatch::from_points([(0, t, x)]);
        Ok(self.model.predict_jets(&self.table, &points)?[0])
    }
}
