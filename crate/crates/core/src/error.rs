use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular period matrix (det = 0)")]
    SingularPeriods,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configurations live on different period lattices")]
    LatticeMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrator step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    #[error("no start converged to a critical point")]
    NoConvergence,

    #[error("Morse approximation failed after {attempts} draws; last near-degenerate eigenvalue {eigenvalue:.3e}")]
    MorseRetriesExhausted { attempts: usize, eigenvalue: f64 },

    #[error("action is degenerate at a catalog point (min |eig| = {0:.3e}); apply a Morse approximation first")]
    Degenerate(f64),

    #[error("catalog incomplete: {0}")]
    CatalogIncomplete(String),

    #[error("Aubry ordering violated: translates of the generator cross")]
    AubryViolation,

    #[error("configuration lies outside the order interval")]
    OutsideInterval,

    #[error("cannot locate xi = {0} on the ghost circle")]
    Locate(f64),

    #[error("stationarity polish failed: {0}")]
    Polish(String),
}

pub type Result<T> = std::result::Result<T, Error>;
