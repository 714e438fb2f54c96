use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{}", divergence_message(*.iteration, *.loss, *.last_finite_loss))]
    Divergence {
        iteration: Option<usize>,
        loss: f64,
        last_finite_loss: Option<f64>,
    },

    #[error("evaluation of variant {variant} produced a non-finite value: {detail}")]
    Evaluation { variant: String, detail: String },

    #[error("Fourier index {index} is not below M/2 = {limit} (aliasing)")]
    Truncation { index: usize, limit: usize },

    #[error("data generation failed: {0}")]
    Generation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: need at least {needed} paired values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate dispersion: baseline median absolute deviation is zero")]
    DegenerateDispersion,

    #[error("undefined correlation: a rank sequence has zero variance")]
    UndefinedCorrelation,

    #[error("unpaired sequences: {0}")]
    Pairing(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn divergence_message(iteration: Option<usize>, loss: f64, last: Option<f64>) -> String {
    let mut msg = format!("training diverged: non-finite loss {loss}");
    if let Some(it) = iteration {
        msg.push_str(&format!(" at iteration {it}"));
    }
    if let Some(last) = last {
        msg.push_str(&format!(" (last finite loss {last:e})"));
    }
    msg
}
