//! Stroboscopic detection statistics for a single-impurity interacting
//! fermion chain.
//!
//! The crate builds fixed-filling Fock bases, assembles the chain Hamiltonian
//! and its cut variants as sparse operators, propagates states with a
//! Chebyshev expansion, and drives three kinds of measured-evolution
//! calculations on top of that stack:
//!
//! * repeated projective no-detection cycles and the resulting survival
//!   series R_k ([`detection`]),
//! * the leading eigenvalue of the sub-unitary step operator via
//!   Krylov–Schur-restarted Arnoldi iteration ([`krylov`]),
//! * Monte Carlo single-run detector trajectories ([`trajectories`]).
//!
//! Small-system dense oracles (full eigendecompositions through LAPACK) back
//! every approximate path with an independent check.

pub mod config;
pub mod detection;
pub mod error;
pub mod fock;
pub mod krylov;
pub mod lapack;
pub mod operators;
pub mod plot;
pub mod propagator;
pub mod spectra;
pub mod state;
pub mod sweep;
pub mod trajectories;

pub use detection::{no_detection_series, DetectionConfig, DetectionSeries};
pub use error::{Error, Result};
pub use fock::{binomial, FockSector, RightCountMask};
pub use krylov::{arnoldi_leading, ArnoldiOptions, SpectralEstimate};
pub use operators::{
    build_h1, build_hamiltonian, build_spin_equivalent, observable_diag, projector_mask,
    DiagonalMask, HamiltonianParams, Observable, SparseOperator,
};
pub use propagator::{evolve, make_plan, ChebyshevPlan};
pub use spectra::{FilterEnergy, FilterSpec, SectorEigensystem, VvptGapTable};
pub use state::StateVector;
pub use trajectories::{run_trajectory, trajectory_ensemble, TrajectoryRecord};
