use thiserror::Error;

/// Errors produced by basis construction, operator assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("site count must be even, got {0}")]
    OddSiteCount(usize),

    #[error("particle count {n_particles} outside 0..={n_sites}")]
    BadFilling { n_sites: usize, n_particles: usize },

    #[error("sector dimension {dim} exceeds the memory budget of {budget} states")]
    DimensionBudget { dim: u128, budget: usize },

    #[error("bitstring {bits:#x} is not a member of the sector")]
    StateNotFound { bits: u64 },

    #[error("site {site} outside the lattice range {lo}..={hi}")]
    SiteOutOfRange { site: i64, lo: i64, hi: i64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense solver capped at dimension {cap}, got {dim}")]
    OracleCap { dim: usize, cap: usize },

    #[error("LAPACK {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("tolerance {tol:.3e} is below what the expansion can certify in f64")]
    ToleranceUnachievable { tol: f64 },

    #[error("energy filter annihilated the state (norm {norm:.3e}); move E or widen sigma")]
    FilterAnnihilated { norm: f64 },

    #[error(
        "initial state carries weight {weight:.3e} on the detector subspace; \
         the no-detection series requires a Q-subspace initial state"
    )]
    SignalComponentInInitialState { weight: f64 },

    #[error("trajectory {index} took a numerically impossible branch at step {step} (norm {norm:.3e})")]
    ImpossibleBranch { index: usize, step: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{failed} of {total} sweep point(s) failed; partial results kept")]
    SweepFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 for configuration/feasibility problems the user
    /// can fix, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::OddSiteCount(_)
            | Error::BadFilling { .. }
            | Error::SiteOutOfRange { .. }
            | Error::DimensionBudget { .. }
            | Error::OracleCap { .. }
            | Error::ToleranceUnachievable { .. }
            | Error::FilterAnnihilated { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
