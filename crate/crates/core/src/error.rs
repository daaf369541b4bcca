use std::path::PathBuf;

use nalgebra::DVector;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index error: {0}")]
    Index(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("format error in {path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("mesh generation produced no labeled element (resolution {0} m)")]
    EmptyMesh(f64),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("electrode error: {0}")]
    Electrode(String),
    #[error("location error: {0}")]
    Location(String),
    #[error("preconditioner is singular: row {0} has zero absolute sum")]
    SingularPreconditioner(usize),
    #[error("PCG did not converge{}: {iterations} iterations, relative residual {residual:e}", column.map(|c| format!(" (column {c})")).unwrap_or_default())]
    Convergence {
        iterations: usize,
        residual: f64,
        column: Option<usize>,
        best: Box<DVector<f64>>,
    },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("current pattern does not sum to zero (sum {sum:e}, norm {norm:e})")]
    CurrentPattern { sum: f64, norm: f64 },
    #[error("DOF error: {0}")]
    Dof(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("region of interest contains no DOF")]
    Roi,
    #[error("decomposition error: {0}")]
    Decomposition(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("anomaly intersects no element")]
    EmptyAnomaly,
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for
    /// configuration and I/O problems, 3 for runtime/numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. }
            | Error::Io { .. }
            | Error::Config(_)
            | Error::Index(_)
            | Error::Topology(_) => 2,
            _ => 3,
        }
    }
}
