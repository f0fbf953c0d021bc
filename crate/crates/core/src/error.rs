//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("time {t} μs outside pulse interval [{lo}, {hi}] μs")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("integration failed at t = {t} μs: {msg}")]
    IntegrationFailure { t: f64, msg: String },

    #[error("relative rail phase undefined: overlap sum is zero")]
    UndefinedPhase,

    #[error("heralding probability {p:.3e} too small for a conditional fidelity")]
    HeraldStarved { p: f64 },

    #[error("effective herald weight vanishes in readout adjustment")]
    NoHerald,

    #[error("scaling fit needs at least {need} usable points, found {found}")]
    FitInsufficient { need: usize, found: usize },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors arising from numerical evaluation rather than from
    /// malformed inputs. The CLI maps these to a distinct exit status.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. }
                | Error::UndefinedPhase
                | Error::HeraldStarved { .. }
                | Error::NoHerald
                | Error::FitInsufficient { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
