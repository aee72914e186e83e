use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    /// The posterior precision `Σp⁻¹ − 2βQ^(uu)` lost positive definiteness.
    #[error("infeasible step t={t}: {detail}")]
    Infeasible { t: usize, detail: String },

    #[error("policy iteration at t={t} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        t: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate transition: all risky positions below {eps:e} dollars")]
    DegenerateTransition { eps: f64 },

    #[error("solver failed under theta {theta}: {source}")]
    Solver {
        theta: String,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite objective while differencing coordinate {coord} ({name})")]
    Gradient { coord: usize, name: &'static str },

    #[error("optimizer diverged: loss increased for {streak} consecutive iterations")]
    Divergence { streak: usize, loss_path: Vec<f64> },

    #[error("Sharpe ratio undefined: zero return variance")]
    UndefinedSharpe,

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
