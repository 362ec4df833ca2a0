use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grids do not match")]
    GridMismatch,

    #[error("inadmissible profile: {0}")]
    InadmissibleProfile(String),

    #[error("normalization violated: |int e^-f dV - V|/V = {defect:.3e}")]
    NormalizationViolated { defect: f64 },

    #[error("entropy solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("flow step rejected: admissibility lost")]
    StepRejected,

    #[error("CFL violation: dt = {dt:.3e} exceeds limit {dt_max:.3e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("flow blow-up at t = {t}: admissibility irrecoverably lost")]
    BlowUp { t: f64, profile_csv: String },

    #[error("dissipation tail not resolved: H(t_end) = {h_end:.3e}")]
    TailNotResolved { h_end: f64 },

    #[error("no [t, t+2] window available in the record")]
    WindowUnavailable,

    #[error("fit window too short: {points} usable points")]
    WindowTooShort { points: usize },

    #[error("entropy series has not settled")]
    NotSettled,

    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config validation error for key '{key}': {msg}")]
    Validation { key: String, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } => 2,
            Error::Io(_) | Error::Json(_) => 4,
            _ => 3,
        }
    }
}
