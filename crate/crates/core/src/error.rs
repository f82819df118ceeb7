use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("integration budget exhausted after {evals} evaluations at t = {t}")]
    Budget { evals: usize, t: f64 },
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("degenerate singularity: {0}")]
    Degenerate(String),
    #[error("eigenvalue collision in main-term matrix")]
    EigenCollision,
    #[error("Stokes decomposition undefined: {0}")]
    DecompositionUndefined(String),
    #[error("q-point computation failed: {0}")]
    QPoint(String),
    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("trajectory left the chart: {0}")]
    LeftChart(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}
