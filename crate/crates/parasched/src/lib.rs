//! Market-oriented scheduling of pleasingly parallel jobs on rented cloud
//! instances.
//!
//! A SaaS provider rents instances from an IaaS catalog (each purchase lives
//! for a fixed number of slots) and decides, as jobs arrive, whether to admit
//! each job and how fast to run it.  The crate provides:
//!
//! * [`model`] - jobs, instance catalog, capacity ledger, schedules, outcomes
//! * [`workload`] - synthetic workload generation and trace ingestion
//! * [`online`] - the online admission/scheduling algorithm with cost sharing
//! * [`baselines`] - posted-price, EDF, random, SJF and spread baselines
//! * [`oracle`] - schedule auditor, exact branch-and-bound solver, LP bound
//! * [`harness`] - metrics, theoretical bounds, experiment drivers

pub mod baselines;
pub mod harness;
pub mod model;
pub mod online;
pub mod oracle;
pub mod workload;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration, job data or file contents.
    Validation(String),
    /// An argument fell outside its documented range.
    Range(String),
    /// Jobs were fed to the scheduler out of arrival order.
    Ordering(String),
    /// All candidate weights are zero while cost is positive, so the
    /// sharing rule has no denominator.
    DegenerateWeights,
    /// An instance was too large for the exact solver or LP.
    LimitsExceeded(String),
    /// A theoretical bound does not exist for these constants.
    BoundUndefined(String),
    /// A ratio or estimate has a zero denominator.
    Degenerate(String),
    /// A text record could not be parsed.
    Parse { line: usize, msg: String },
    /// The LP solver failed (unbounded or exceeded its pivot budget).
    Lp(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Range(msg) => write!(f, "out of range: {msg}"),
            Error::Ordering(msg) => write!(f, "ordering error: {msg}"),
            Error::DegenerateWeights => {
                write!(f, "all weights are zero while cost is positive")
            }
            Error::LimitsExceeded(msg) => write!(f, "instance exceeds limits: {msg}"),
            Error::BoundUndefined(msg) => write!(f, "bound undefined: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Lp(msg) => write!(f, "lp error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
