use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("momentum must lie in [0, 1), got {0}")]
    Momentum(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite value encountered at iteration {k}")]
    NonFinite { k: usize },
    #[error("diverged at iteration {k}: |beta| = {norm:e} exceeds bound {bound:e}")]
    Diverged { k: usize, norm: f64, bound: f64 },
    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),
    #[error("counter-term order {sigma} exceeds the generic recursion cap {cap}")]
    UnsupportedOrder { sigma: usize, cap: usize },
    #[error("gradient norm {0:e} is below 1e-12; quantity undefined")]
    VanishingGradient(f64),
    #[error("zero components at indices {0:?}")]
    SingularComponents(Vec<usize>),
    #[error("too few valid points for an order fit ({0} < 3)")]
    TooFewPoints(usize),
    #[error("run did not converge: {0}")]
    NotConverged(String),
    #[error("data matrix is rank deficient or degenerate: {0}")]
    Degenerate(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if (0.0..1.0).contains(&mu) {
        Ok(())
    } else {
        Err(Error::Momentum(mu))
    }
}
