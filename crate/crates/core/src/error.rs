use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("occupancy vector is not on the simplex: {0}")]
    InvalidOccupancy(String),

    #[error("control is outside the feasible set: {0}")]
    InfeasibleControl(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("simplex exceeded {0} iterations")]
    LpIterationLimit(usize),

    #[error("singular basis while refining the simplex solution")]
    SingularBasis,

    #[error("fixed point is degenerate: {0}")]
    Degenerate(String),

    #[error("k = {k} exceeds the enumeration limit k_max = {k_max}")]
    KTooLarge { k: usize, k_max: usize },

    #[error("ergodicity coefficient is zero; the bound is undefined")]
    ZeroErgodicity,

    #[error("instance too large for the exact oracle: {0}")]
    OracleTooLarge(String),

    #[error("relative value iteration did not converge after {0} sweeps")]
    OracleNoConvergence(usize),

    #[error("unknown builtin instance '{0}'")]
    UnknownInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
