use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("basis is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("probe needs both classes present, got only label {0}")]
    SingleClass(i8),

    #[error("ledger is at step {ledger} but gradient prefactors belong to step {gradient}")]
    StepMismatch { ledger: usize, gradient: usize },

    #[error("training diverged at step {step}: loss {loss}, max |w| = {max_abs_weight}")]
    Diverged {
        step: usize,
        loss: f64,
        max_abs_weight: f64,
    },

    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { what, expected, found });
    }
    Ok(())
}
