use std::io;

use thiserror::Error;

/// Failures surfaced by the library.
///
/// Variants fall into three broad classes (see [`Error::class`]): malformed
/// input or configuration, numerical aborts, and I/O or format errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("negative weight {weight} on edge ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("self-loop ({i}, {i}) not enabled for this topology")]
    SelfLoop { i: usize },

    #[error("index {index} out of range for {len} users")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} lies outside [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },

    #[error("inconsistent data: {0}")]
    DataInconsistency(String),

    #[error("event explosion: more than {max_events} events by t = {t} (spectral radius of branching matrix ~ {spectral_radius:.4})")]
    Explosion {
        max_events: usize,
        t: f64,
        spectral_radius: f64,
    },

    #[error("mean intensity diverged at t = {t} (spectral radius of branching matrix ~ {spectral_radius:.4}, must be < 1)")]
    Divergence { t: f64, spectral_radius: f64 },

    #[error(
        "Riccati blow-up at t = {t}: |v11|_F = {norm:.3e}; shrink the horizon or increase rho"
    )]
    RiccatiBlowUp { t: f64, norm: f64 },

    #[error("adaptive step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of integrator steps ({max_steps}) exceeded at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} (seed {seed}): {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error classification, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Explosion { .. }
            | Error::Divergence { .. }
            | Error::RiccatiBlowUp { .. }
            | Error::StepUnderflow { .. }
            | Error::TooManySteps { .. }
            | Error::NonFinite { .. } => ErrorClass::Numerical,
            Error::Run { source, .. } | Error::Stage { source, .. } => source.class(),
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Config,
        }
    }

    pub(crate) fn in_run(self, run: usize) -> Error {
        Error::Run {
            run,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, seed: u64) -> Error {
        Error::Stage {
            stage,
            seed,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
