use core::fmt;

use alloc::boxed::Box;
use alloc::vec::Vec;

/// Failures raised by the potential and the classical flow.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point left the declared working box.
    OutOfBox { x: Vec<f64> },
    /// `|g(x)|` is below `g_zero_tol`; the smooth formulas do not apply.
    OnSingularSet { x: Vec<f64>, g_norm: f64 },
    /// A point of `S` with `|dg(x) xi|` below `sstar_tol` (outside `S*`).
    NonGenericPoint { x: Vec<f64>, xi: Vec<f64> },
    /// A trajectory reached `S` outside `S*`; continuation is not unique.
    NonGenericCrossing { t: f64, x: Vec<f64>, xi: Vec<f64> },
    /// The incoming-side sign test `(dg xi) . g < 0` failed just before a crossing.
    IncomingSignViolated { t: f64 },
    /// The desingularized launch never contracted, even after halving the window.
    LaunchWindowTooLarge { tau: f64 },
    /// Adaptive step size fell below the floor.
    StepSizeUnderflow { t: f64, h: f64 },
    /// The step budget was exhausted.
    MaxStepsExceeded { t: f64 },
    DimensionMismatch { expected: usize, found: usize },
    /// `dg` lost rank somewhere on the sampling lattice.
    RankDeficient { x: Vec<f64>, sigma_min: f64 },
    /// `w <= 0` at a lattice point while crossings are expected.
    NonPositiveWeight { x: Vec<f64>, w: f64 },
    InvalidArgument(&'static str),
    /// An initial-state kind that cannot be turned into a particle measure.
    SpecUnsupported(&'static str),
    /// Pushing particle `index` forward failed.
    Particle { index: usize, cause: Box<Error> },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::OutOfBox { x } => write!(f, "point {x:?} is outside the working box"),
            Error::OnSingularSet { x, g_norm } => {
                write!(f, "point {x:?} lies on the singular set (|g| = {g_norm:e})")
            }
            Error::NonGenericPoint { x, xi } => {
                write!(f, "({x:?}, {xi:?}) is on S but not in S* (dg(x) xi vanishes)")
            }
            Error::NonGenericCrossing { t, x, xi } => write!(
                f,
                "trajectory reaches S outside S* at t = {t} (x = {x:?}, xi = {xi:?}); continuation is not unique"
            ),
            Error::IncomingSignViolated { t } => {
                write!(f, "incoming sign test failed before the crossing at t = {t}")
            }
            Error::LaunchWindowTooLarge { tau } => {
                write!(f, "launch from S* did not contract down to window {tau:e}")
            }
            Error::StepSizeUnderflow { t, h } => write!(f, "step size underflow (h = {h:e}) at t = {t}"),
            Error::MaxStepsExceeded { t } => write!(f, "step budget exhausted at t = {t}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::RankDeficient { x, sigma_min } => {
                write!(f, "dg is rank deficient at {x:?} (smallest singular value {sigma_min:e})")
            }
            Error::NonPositiveWeight { x, w } => write!(f, "w = {w} <= 0 at {x:?}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::SpecUnsupported(msg) => write!(f, "unsupported initial state: {msg}"),
            Error::Particle { index, cause } => write!(f, "particle {index}: {cause}"),
        }
    }
}

impl core::error::Error for Error {}
