use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("enumeration would visit {count} trajectories, above the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("moment matrix is not rank one: best rank-1 residual {residual:e} exceeds {tolerance:e}")]
    RankDeficient { residual: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("episode already used all {horizon} steps; reset required")]
    SteppedPastHorizon { horizon: usize },

    #[error("environment must be reset before stepping")]
    ResetRequired,

    #[error("magnitude LP is infeasible; irreducible constraints: {}", .witness.join("; "))]
    Infeasible { witness: Vec<String> },

    #[error("sign constraints are unsatisfiable (odd cycle through x={variable})")]
    Unsatisfiable { variable: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
