//! Numerical engines: the monotonic discriminatory scheme and the
//! multistart least-squares driver.

mod monotonic;
mod multistart;

pub use monotonic::{
    discriminate, maximize_transfer, newton_field_update, theta_update, MonotonicSettings, StepTerm,
    UpdateRule, MONOTONICITY_HARD_LIMIT,
};
pub use multistart::{multistart_lsq, MultistartSettings};

/// Record of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTrace {
    /// Objective after each iteration, starting with the initial value.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest per-step increment term accepted by a monotonic sweep.
    pub min_step_term: Option<f64>,
    /// Final cost of every restart of a multistart run.
    pub restart_costs: Vec<f64>,
}

impl OptimizerTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }

    /// Whether the history never decreases by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objective_history.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}
