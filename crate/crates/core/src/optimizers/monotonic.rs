//! Monotonic field optimization for the discrete selectivity functional
//!
//! ```text
//! J(ε) = |⟨ψ₁, ψ_A(T) - ψ_B(T)⟩|² - β Δt Σ_j ε_j²
//! ```
//!
//! Each iteration propagates the costates of both systems backward with the
//! current field, then sweeps forward choosing every new sample `ε'_j` so
//! that its term of the exact increment identity is non-negative. The
//! objective therefore never decreases.

use num_complex::Complex64;

use super::OptimizerTrace;
use crate::error::{Error, Result};
use crate::functionals::ProblemContext;
use crate::linalg::{CVector, HermitianOperator};
use crate::propagator::{phase_divided, ControlField, StrangPropagator};

/// Objective drops larger than this abort the run; they indicate a bug.
pub const MONOTONICITY_HARD_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// One safeguarded Newton step on the per-step increment term.
    NewtonStep,
    /// Affine solve of the θ-relaxed update with the state frozen.
    ThetaImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicSettings {
    /// Penalty weight on `∫ ε²`.
    pub beta: f64,
    /// Relaxation parameter of the θ-rule (also the Newton fallback).
    pub theta: f64,
    /// Stop once the discrete `L²` change of the field drops below this.
    pub tol: f64,
    pub max_iters: usize,
    pub update_rule: UpdateRule,
}

impl Default for MonotonicSettings {
    fn default() -> Self {
        Self {
            beta: 1e-2,
            theta: 1.0,
            tol: 1e-4,
            max_iters: 200,
            update_rule: UpdateRule::NewtonStep,
        }
    }
}

impl MonotonicSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSettings(format!("{name} must be positive, got {v}")))
            }
        };
        positive("beta", self.beta)?;
        positive("theta", self.theta)?;
        positive("tol", self.tol)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidSettings("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Coupling overlap `X(ε') = ⟨ξ, μ_Δt(ε', ε) ψ'⟩` of one system at one step,
/// stored in the eigenbasis of its dipole operator.
#[derive(Debug, Clone)]
struct CouplingOverlap {
    // conj(a_k) b_k e^{-iελ_kΔt} λ_k
    weights: Vec<Complex64>,
    // λ_k Δt
    rates: Vec<f64>,
}

impl CouplingOverlap {
    fn new(prop: &StrangPropagator) -> Self {
        let n = prop.dim();
        Self { weights: vec![Complex64::default(); n], rates: prop.rates().to_vec() }
    }

    /// Refills the weights from the rotated costate `a` and rotated state `b`.
    fn fill(&mut self, prop: &StrangPropagator, eps_old: f64, costate: &[Complex64], rotated_state: &[Complex64]) {
        let lambdas = prop.coupling().eigenvalues();
        for ((((w, a), b), &l), &r) in self
            .weights
            .iter_mut()
            .zip(costate)
            .zip(rotated_state)
            .zip(lambdas)
            .zip(&self.rates)
        {
            *w = a.conj() * b * Complex64::from_polar(1.0, -eps_old * r) * l;
        }
    }

    fn value(&self, delta: f64) -> Complex64 {
        self.weights
            .iter()
            .zip(&self.rates)
            .map(|(w, r)| w * phase_divided(r * delta))
            .sum()
    }

    /// `dX/dε'` at `ε' = ε`.
    fn slope(&self) -> Complex64 {
        self.weights
            .iter()
            .zip(&self.rates)
            .map(|(w, r)| w * Complex64::new(0.0, -0.5 * r))
            .sum()
    }
}

/// Scalar problem for a single time step of the forward sweep:
///
/// ```text
/// g(ε') = (ε' - ε)(2 Im X_A(ε') - 2 Im X_B(ε') - β(ε' + ε))
/// ```
///
/// with `X` built from the costate `e^{+iHΔt} χ_{j+1}` of the previous field
/// and the current trial state `ψ'_j`. `Δt·g(ε'_j)` is the contribution of
/// step `j` to `J(ε') - J(ε)`.
#[derive(Debug, Clone)]
pub struct StepTerm {
    a: CouplingOverlap,
    b: CouplingOverlap,
    eps_old: f64,
    beta: f64,
}

impl StepTerm {
    /// Builds the term from the costates `χ_{j+1}` and trial states `ψ'_j` of
    /// both systems.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        prop_a: &StrangPropagator,
        prop_b: &StrangPropagator,
        chi_a_next: &CVector,
        chi_b_next: &CVector,
        psi_a: &CVector,
        psi_b: &CVector,
        eps_old: f64,
        beta: f64,
    ) -> Self {
        let n = prop_a.dim();
        let mut costate_a = vec![Complex64::default(); n];
        let mut costate_b = vec![Complex64::default(); n];
        let mut state_a = vec![Complex64::default(); n];
        let mut state_b = vec![Complex64::default(); n];
        prop_a.enter_adjoint_into(chi_a_next.as_slice(), &mut costate_a);
        prop_b.enter_adjoint_into(chi_b_next.as_slice(), &mut costate_b);
        prop_a.enter_into(psi_a.as_slice(), &mut state_a);
        prop_b.enter_into(psi_b.as_slice(), &mut state_b);
        let mut term = Self::empty(prop_a, prop_b, beta);
        term.fill(prop_a, prop_b, &costate_a, &costate_b, &state_a, &state_b, eps_old);
        term
    }

    fn empty(prop_a: &StrangPropagator, prop_b: &StrangPropagator, beta: f64) -> Self {
        Self { a: CouplingOverlap::new(prop_a), b: CouplingOverlap::new(prop_b), eps_old: 0.0, beta }
    }

    #[allow(clippy::too_many_arguments)]
    fn fill(
        &mut self,
        prop_a: &StrangPropagator,
        prop_b: &StrangPropagator,
        costate_a: &[Complex64],
        costate_b: &[Complex64],
        state_a: &[Complex64],
        state_b: &[Complex64],
        eps_old: f64,
    ) {
        self.a.fill(prop_a, eps_old, costate_a, state_a);
        self.b.fill(prop_b, eps_old, costate_b, state_b);
        self.eps_old = eps_old;
    }

    pub fn eps_old(&self) -> f64 {
        self.eps_old
    }

    /// `2 Im X_A - 2 Im X_B` at the confluent point `ε' = ε`.
    pub fn coupling_difference(&self) -> f64 {
        2.0 * (self.a.value(0.0).im - self.b.value(0.0).im)
    }

    /// `g(ε')`.
    pub fn gain(&self, eps_new: f64) -> f64 {
        let delta = eps_new - self.eps_old;
        if delta == 0.0 {
            return 0.0;
        }
        let bracket = 2.0 * (self.a.value(delta).im - self.b.value(delta).im) - self.beta * (eps_new + self.eps_old);
        delta * bracket
    }

    /// `g'(ε)` and `g''(ε)` at the current sample.
    fn newton_derivatives(&self) -> (f64, f64) {
        let first = self.coupling_difference() - 2.0 * self.beta * self.eps_old;
        let slope = 2.0 * (self.a.slope().im - self.b.slope().im) - self.beta;
        (first, 2.0 * slope)
    }
}

/// Explicit solution of the θ-relaxed update with frozen state:
/// `ε' = [ε(1 - θ) + (θ/β) D] / (1 + θ)`.
pub fn theta_update(term: &StepTerm, settings: &MonotonicSettings) -> f64 {
    let eps = term.eps_old;
    let theta = settings.theta;
    (eps * (1.0 - theta) + theta / settings.beta * term.coupling_difference()) / (1.0 + theta)
}

fn guarded(term: &StepTerm, candidate: f64) -> Option<f64> {
    (candidate.is_finite() && term.gain(candidate) >= 0.0).then_some(candidate)
}

/// θ-rule value if it keeps `g ≥ 0`, otherwise the old sample.
fn safeguarded_theta(term: &StepTerm, settings: &MonotonicSettings) -> f64 {
    guarded(term, theta_update(term, settings)).unwrap_or(term.eps_old)
}

/// One Newton step on `g` started at `ε_j`.
///
/// The Newton value is kept only when `g` is locally concave and the step
/// does not decrease `g`; otherwise the θ-rule is used, and if that also
/// fails the sample is left unchanged. The returned value always satisfies
/// `g(ε'_j) ≥ 0`.
pub fn newton_field_update(term: &StepTerm, settings: &MonotonicSettings) -> f64 {
    let (first, second) = term.newton_derivatives();
    if second < 0.0 {
        if let Some(eps) = guarded(term, term.eps_old - first / second) {
            return eps;
        }
    }
    safeguarded_theta(term, settings)
}

fn choose(term: &StepTerm, settings: &MonotonicSettings) -> f64 {
    match settings.update_rule {
        UpdateRule::NewtonStep => newton_field_update(term, settings),
        UpdateRule::ThetaImplicit => safeguarded_theta(term, settings),
    }
}

/// Runs the monotonic scheme maximizing the measurement gap between
/// `mu_a` and `mu_b` with penalty `settings.beta`.
///
/// Returns the last (and best) field. Runs that hit `max_iters` are
/// reported with `converged = false`.
pub fn discriminate(
    ctx: &ProblemContext,
    mu_a: &HermitianOperator,
    mu_b: &HermitianOperator,
    init_field: &ControlField,
    settings: &MonotonicSettings,
) -> Result<(ControlField, OptimizerTrace)> {
    settings.validate()?;
    if init_field.grid() != &ctx.grid {
        return Err(Error::GridMismatch);
    }
    let prop_a = ctx.propagator(mu_a)?;
    let prop_b = ctx.propagator(mu_b)?;
    let psi0 = ctx.psi0.amplitudes();
    let beta = settings.beta;

    let mut field = init_field.clone();
    let mut gap = ctx.project((prop_a.propagate_final(&field, psi0)? - prop_b.propagate_final(&field, psi0)?).as_slice());
    let mut objective = gap.norm_sqr() - beta * field.energy();
    let mut history = vec![objective];
    let mut min_gain = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        iterations += 1;
        let terminal = ctx.psi1.amplitudes() * gap;
        let chi_a = prop_a.propagate_adjoint(&field, &terminal)?;
        let chi_b = prop_b.propagate_adjoint(&field, &terminal)?;

        let n = ctx.dim();
        let zero = Complex64::default();
        let mut psi_a = psi0.as_slice().to_vec();
        let mut psi_b = psi_a.clone();
        let (mut state_a, mut state_b) = (vec![zero; n], vec![zero; n]);
        let (mut costate_a, mut costate_b) = (vec![zero; n], vec![zero; n]);
        let mut term = StepTerm::empty(&prop_a, &prop_b, beta);
        let mut samples = Vec::with_capacity(field.samples().len());
        for (j, &eps_old) in field.samples().iter().enumerate() {
            prop_a.enter_into(&psi_a, &mut state_a);
            prop_b.enter_into(&psi_b, &mut state_b);
            prop_a.enter_adjoint_into(chi_a.state(j + 1), &mut costate_a);
            prop_b.enter_adjoint_into(chi_b.state(j + 1), &mut costate_b);
            term.fill(&prop_a, &prop_b, &costate_a, &costate_b, &state_a, &state_b, eps_old);
            let eps_new = choose(&term, settings);
            min_gain = min_gain.min(term.gain(eps_new));
            prop_a.finish_into(eps_new, &mut state_a, &mut psi_a);
            prop_b.finish_into(eps_new, &mut state_b, &mut psi_b);
            samples.push(eps_new);
        }
        let next = ControlField::new(ctx.grid, samples)?;
        let next_gap = ctx.project(&psi_a.iter().zip(&psi_b).map(|(a, b)| a - b).collect::<Vec<_>>());
        let next_objective = next_gap.norm_sqr() - beta * next.energy();
        if next_objective < objective - MONOTONICITY_HARD_LIMIT {
            return Err(Error::MonotonicityViolation { iteration: iterations, drop: objective - next_objective });
        }
        let change = next.l2_distance(&field);
        field = next;
        gap = next_gap;
        objective = next_objective;
        history.push(objective);
        if change <= settings.tol {
            converged = true;
            break;
        }
    }

    log::debug!(
        "monotonic run: {iterations} iterations, J {:.6e} -> {:.6e}, converged={converged}",
        history[0],
        objective
    );
    let trace = OptimizerTrace {
        objective_history: history,
        iterations,
        converged,
        min_step_term: Some(if min_gain.is_finite() { min_gain } else { 0.0 }),
        restart_costs: Vec::new(),
    };
    Ok((field, trace))
}

/// Maximizes `|⟨ψ₁, ψ(T)⟩ - ⟨ψ₁, e^{-iHT} ψ₀⟩|² - β ∫ ε²` by running
/// [`discriminate`] against the uncoupled system `μ = 0`.
///
/// When `ψ₁` is orthogonal to the free evolution of `ψ₀` (as for an
/// eigenstate `ψ₀` of `H` and orthogonal target) this is the transfer
/// yield `|φ(μ, ε)|²` minus the penalty.
pub fn maximize_transfer(
    ctx: &ProblemContext,
    mu: &HermitianOperator,
    init_field: &ControlField,
    settings: &MonotonicSettings,
) -> Result<(ControlField, OptimizerTrace)> {
    discriminate(ctx, mu, &HermitianOperator::zeros(mu.dim()), init_field, settings)
}
