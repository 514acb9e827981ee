//! Crate-wide error type.
//!
//! One enum for every failure mode in the solver stack. Variants carry the
//! numbers a caller needs to print a useful message (offending time, expected
//! vs actual mode count) rather than pre-rendered strings, except where the
//! failure is a configuration problem and the message is the payload.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A state or buffer has a different number of modes than the operation expects.
    #[error("mode count mismatch: got {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Invalid spectral discretization parameters (mode count, domain length).
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    /// The delay horizon is not an integer multiple of the step size.
    #[error("delay horizon r = {r} is not an integer multiple of dt = {dt}")]
    NonDivisibleDelay { r: f64, dt: f64 },

    /// A history lookup outside the stored window.
    #[error("query time {t} outside history window [{lo}, {hi}]")]
    QueryOutsideWindow { t: f64, lo: f64, hi: f64 },

    /// A pushed state does not sit one step after the current head.
    #[error("pushed state at t = {got}, expected t = {expected}")]
    NonContiguousPush { expected: f64, got: f64 },

    /// An operation needs the derivative buffer and the segment has none.
    #[error("history segment carries no derivative buffer")]
    MissingDerivatives,

    /// Non-finite coefficients produced during time stepping.
    #[error("state blew up at t = {t}: non-finite coefficient")]
    BlowUp { t: f64 },

    /// Model or run parameters that fail validation. The message names the field.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A parameter outside its admissible range. The message names the parameter.
    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    /// A point cloud with no points, or with inconsistent coordinate counts.
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    /// An epsilon ladder that cannot support a fit.
    #[error("degenerate epsilon ladder: {0}")]
    DegenerateLadder(String),

    /// A fit window with too few samples or no spread.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A trajectory that keeps growing where a settled tail is required.
    #[error("trajectory does not settle: {0}")]
    NonDissipative(String),

    /// Malformed snapshot or checkpoint data.
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
