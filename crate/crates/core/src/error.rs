//! Error type shared by the solver library.

use thiserror::Error;

/// Errors produced by grid construction, the elliptic solver, the time
/// stepper and the run drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("equilibrium-hold boundary closure requires frozen boundary data")]
    MissingFrozen,

    #[error(
        "stabilisation strength eta = {eta} fails eta > 15/8 * max(h) = {threshold}; \
         no admissible time step exists"
    )]
    NonpositiveDt { eta: f64, threshold: f64 },

    #[error("linear system is not strictly diagonally dominant (margin {margin:.3e})")]
    DominanceViolation { margin: f64 },

    #[error(
        "linear solve did not converge within {iterations} sweeps \
         (relative residual {residual:.3e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("water height non-positive at {count} cell(s), first {first:?}")]
    PositivityFailure {
        count: usize,
        first: Vec<(usize, usize, f64)>,
    },

    #[error(
        "height bracket 3/4 h <= h' <= 5/4 h violated at cell ({i}, {j}): \
         h = {h_old}, h' = {h_new} (after {retries} dt retries)"
    )]
    BracketViolation {
        i: usize,
        j: usize,
        h_old: f64,
        h_new: f64,
        retries: u32,
    },

    #[error(
        "flux-form height disagrees with recovered height beyond tolerance: \
         max diff {max_diff:.3e} > {tolerance:.3e} (assembly inconsistency)"
    )]
    MassBalanceMismatch { max_diff: f64, tolerance: f64 },

    #[error(
        "total energy increased on a periodic domain: {before} -> {after} \
         (slack {slack:.3e})"
    )]
    EnergyIncrease { before: f64, after: f64, slack: f64 },

    #[error("field shape mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("dimensions {nx}x{ny} not divisible by coarsening factor {factor}")]
    IndivisibleDims { nx: usize, ny: usize, factor: usize },

    #[error("solution ensemble is empty")]
    EmptyEnsemble,

    #[error("empty sample list")]
    EmptySamples,

    #[error("error values must be positive for EOC computation, got {0}")]
    NonpositiveError(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonpositiveDt { .. }
                | Error::DominanceViolation { .. }
                | Error::NonConvergence { .. }
                | Error::PositivityFailure { .. }
                | Error::BracketViolation { .. }
                | Error::MassBalanceMismatch { .. }
                | Error::EnergyIncrease { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
