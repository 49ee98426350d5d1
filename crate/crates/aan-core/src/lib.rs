//! Assist-as-needed control for a 1-DOF knee exoskeleton, in simulation.
//!
//! The crate closes the loop of a rehabilitation controller around a
//! simulated human-exoskeleton plant:
//!
//! ```text
//! reference --> MPC --> plant (exo + human)
//!      ^         ^          |
//!      |         m          v
//!  adaptation   FLA <-- torque estimate <-- synthetic EMG
//! ```
//!
//! * [`plant`] — rigid-coupled joint dynamics, scripted human behaviour and
//!   synthetic EMG generation.
//! * [`emg`] — EMG envelope extraction and the linear agonist-antagonist
//!   human torque estimation model with its least-squares calibration.
//! * [`fuzzy`] — assistance-mode inference from estimated human torque and
//!   reference velocity.
//! * [`mpc`] — constrained receding-horizon controller (augmented Lagrangian
//!   with projected-gradient inner iterations).
//! * [`sysid`] — excitation trials and least-squares identification of the
//!   joint model parameters.
//! * [`harness`] — trial orchestration, metrics and CSV/report export.
//! * [`config`] — flat key-value configuration files shared by the CLI.

pub mod config;
pub mod emg;
pub mod fuzzy;
pub mod harness;
pub mod mpc;
pub mod plant;
pub mod sysid;

mod linalg;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input that must be finite was NaN or infinite.
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    /// A parameter or configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Paired signals whose lengths must agree did not.
    #[error("length mismatch: {context} ({left} vs {right})")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// The least-squares design matrix does not determine every parameter.
    #[error("rank-deficient regression: {column} is not identifiable from the data")]
    RankDeficient { column: &'static str },

    /// A solver or simulation produced a non-finite quantity.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file (CSV or key-value config).
    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
