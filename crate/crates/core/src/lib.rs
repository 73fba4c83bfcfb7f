//! Selective laser field design and dipole-operator identification for
//! finite-level quantum systems driven as `i dψ/dt = (H + ε(t) μ) ψ`.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: Hermitian operators, spectral decompositions, states.
//! - [`propagator`]: Strang time stepping and its tangent and adjoint.
//! - [`functionals`]: the measurement, the selectivity functional and the
//!   least-squares fitting cost.
//! - [`optimizers`]: the monotonic field optimizer and multistart BFGS.
//! - [`greedy`]: the greedy selective-field loop and the identification solve.

pub mod error;
pub mod functionals;
pub mod greedy;
pub mod linalg;
pub mod optimizers;
pub mod propagator;

pub use error::{Error, Result};
pub use functionals::{
    fitting_cost, fitting_gradient, measure_phi, selectivity_increment_identity, selectivity_j, DipoleCoefficients,
    IncrementIdentity, MeasurementFit, ProblemContext,
};
pub use greedy::{
    fit_alpha, gauge_relative_error, greedy_fields, identify, measurement_gauge_indices, relative_error, FitOutcome, GreedySettings, GreedyStep,
    IdentificationResult, MeasurementRecord, SelectiveFieldSet,
};
pub use linalg::{
    eigendecompose, expi_scale, inner, make_hermitian, random_hermitian_basis, CMatrix, CVector, HermitianOperator,
    SpectralDecomposition, StateVector,
};
pub use optimizers::{
    discriminate, maximize_transfer, multistart_lsq, MonotonicSettings, MultistartSettings, OptimizerTrace,
    UpdateRule,
};
pub use propagator::{mu_delta_t, propagate, propagate_adjoint, propagate_tangent, ControlField, StrangPropagator, TimeGrid, Trajectory};
