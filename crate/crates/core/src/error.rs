use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("single-atom operators must be 3x3, got {0}x{0}")]
    NotSingleAtom(usize),

    #[error("atom index {atom} out of range for {n_atoms} atoms")]
    AtomOutOfRange { atom: usize, n_atoms: usize },

    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("atoms {i} and {j} coincide; van der Waals shift is singular")]
    CoincidentAtoms { i: usize, j: usize },

    #[error("steady state is not unique (null space dimension {dimension})")]
    NonUniqueSteadyState { dimension: usize },

    #[error("generator has no stationary state within tolerance")]
    NoSteadyState,

    #[error("steady state has negative eigenvalue {min_eigenvalue:e}")]
    NegativeSteadyState { min_eigenvalue: f64 },

    #[error("integrator failed: step size underflow at tau = {tau_reached}")]
    IntegratorFailure { tau_reached: f64 },

    #[error("detector direction must be a nonzero vector off the probe axis")]
    OnAxisDetector,

    #[error("invalid tau grid: {0}")]
    InvalidTauGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough clicks: {0}")]
    InsufficientClicks(String),

    #[error("malformed click record at line {line}: {message}")]
    ClickFormat { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
