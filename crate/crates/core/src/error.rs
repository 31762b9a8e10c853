use thiserror::Error;

use crate::hum::HumSolution;

/// Errors raised by the numerical pipeline.
///
/// Variant names double as the error identifiers printed by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("DegeneracyOutOfRange: K = {k} lies outside (0, 2)")]
    DegeneracyOutOfRange { k: f64 },

    #[error("InvalidProfile: {0}")]
    InvalidProfile(String),

    #[error("GridTooCoarse: N = {n_cells} but at least {min} cells are required")]
    GridTooCoarse { n_cells: usize, min: usize },

    #[error("SingularAtOrigin: vector value {value:e} at x = 0 is not integrable against 1/a")]
    SingularAtOrigin { value: f64 },

    #[error("InternalSolverFailure: {0}")]
    InternalSolverFailure(String),

    #[error("TimeGridMismatch: {0}")]
    TimeGridMismatch(String),

    #[error("ZeroEnergyData: initial data has zero energy")]
    ZeroEnergyData,

    #[error("TooManyModes: requested {requested}, at most {available} available")]
    TooManyModes { requested: usize, available: usize },

    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    #[error("ControlSynthesisFailed: CG stopped after {} iterations at relative residual {:e}", .best.iterations, .best.cg_residual)]
    ControlSynthesisFailed { best: Box<HumSolution> },

    #[error("ConfigError: {0}")]
    Config(String),

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DegeneracyOutOfRange { .. }
                | Error::InvalidProfile(_)
                | Error::GridTooCoarse { .. }
                | Error::TimeGridMismatch(_)
                | Error::TooManyModes { .. }
                | Error::InvalidParameter(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
