use std::fmt;

use coded_unlearning::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// Bad flags or config that clap could not catch on its own.
#[derive(Debug)]
pub struct Usage(pub String);

/// Session directory problems: missing, locked, or tampered with.
#[derive(Debug)]
pub enum SessionError {
    NotFound(String),
    Stale(String),
    Locked(String),
}

/// The retrain-from-scratch check disagreed with the stored model.
#[derive(Debug)]
pub struct VerificationFailed(pub f64);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "usage error: {}", self.0)
    }
}

impl fmt::Display for SessionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionError::NotFound(p) => write!(f, "session not found: {p}"),
            SessionError::Stale(why) => write!(f, "stale session: {why}"),
            SessionError::Locked(p) => write!(f, "session is locked by another invocation: {p}"),
        }
    }
}

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: max relative discrepancy {:.3e}", self.0)
    }
}

impl std::error::Error for Usage {}
impl std::error::Error for SessionError {}
impl std::error::Error for VerificationFailed {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<VerificationFailed>() {
            return EXIT_VERIFY;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidSpec(_)
                | Error::BadSplitSize { .. }
                | Error::DensityOutOfRange { .. }
                | Error::TooFewSamples { .. }
                | Error::NonTermination { .. } => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}
