use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Pitch is inside the guard band where the Euler-rate map blows up.
    #[error("Euler-angle map near singular: |cos(theta)| = {cos_theta:e}")]
    NearSingular { cos_theta: f64 },

    #[error("wrench map is rank deficient: sigma_min = {sigma_min:e}")]
    RankDeficient { sigma_min: f64 },

    #[error("thruster directions cancel: |sum F_i| = {norm:e}")]
    DegenerateDirection { norm: f64 },

    /// The auxiliary-thruster moment equation has a component along F_a.
    #[error("auxiliary thruster moment equation inconsistent: residual along F_a = {residual:e}")]
    Unsolvable { residual: f64 },

    #[error("clearance solver did not converge from any start")]
    NoConvergence,

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("effectiveness estimate {index} = {value} left the projection band")]
    EstimateOutOfRange { index: usize, value: f64 },

    #[error("pattern search found no feasible point from an infeasible start")]
    NoFeasibleStart,

    #[error("no feasible design within the evaluation budget")]
    NoFeasibleDesign,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
