use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pressure constraint violated: rho = {rho}, p = {p} (admissible [{lo}, {hi}])")]
    PressureConstraint { rho: f64, p: f64, lo: f64, hi: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("mass constant bracket search failed: achievable mass range [{mass_lo}, {mass_hi}]")]
    MassBracket { mass_lo: f64, mass_hi: f64 },

    #[error("CFL violation at step {step}: {detail}")]
    Cfl { step: usize, detail: String },

    #[error("step did not converge: optimality residual {residual} after {iterations} iterations")]
    StepNotConverged {
        residual: f64,
        iterations: usize,
        /// Best iterate reached, for post-mortem inspection.
        best: Box<crate::jko::JkoStepResult>,
    },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
