use std::path::PathBuf;

/// Errors raised anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error{}: `{key}`: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("domain too small on axis {axis}: {cells} cells of edge >= cutoff, need at least 3")]
    DomainTooSmall { axis: usize, cells: usize },

    #[error("overlap between molecules {a} and {b} (r^2 = {r2:e})")]
    Overlap { a: u64, b: u64, r2: f64 },

    #[error("molecule {id} escaped through the wall (z = {z})")]
    EscapedThroughWall { id: u64, z: f64 },

    #[error("molecule {id} at {position:?} lies outside the owned+halo region")]
    OwnershipViolation { id: u64, position: [f64; 3] },

    #[error("numerical blow-up at step {step}: {what}")]
    NumericalBlowUp { step: u64, what: String },

    #[error("cannot rescale velocities: kinetic energy is zero")]
    CannotRescale,

    #[error("temperature undefined for {n} molecules")]
    UndefinedTemperature { n: usize },

    #[error("partition infeasible: {0}")]
    PartitionInfeasible(String),

    #[error("topology violation: {0}")]
    TopologyViolation(String),

    #[error("worker failure: {0}")]
    WorkerFailure(String),

    #[error("partition inconsistency: {0}")]
    PartitionInconsistency(String),

    #[error("cannot generate scenario: {message} (nearest achievable density {nearest_density})")]
    Generation { message: String, nearest_density: f64 },

    #[error("energy bookkeeping drift: incremental {incremental} vs recomputed {recomputed}")]
    BookkeepingDrift { incremental: f64, recomputed: f64 },

    #[error("ell exponent undefined: {0}")]
    EllUndefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::DomainTooSmall { .. } | Error::Generation { .. } => 2,
            Error::PartitionInfeasible(_) => 2,
            Error::NumericalBlowUp { .. }
            | Error::Overlap { .. }
            | Error::EscapedThroughWall { .. }
            | Error::CannotRescale => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
