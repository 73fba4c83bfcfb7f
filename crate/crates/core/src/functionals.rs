//! Scalar objectives: the measurement `φ(μ, ε) = ⟨ψ₁, ψ(T)⟩`, the discrete
//! selectivity functional, and the least-squares fitting cost with its
//! gradient.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{HermitianOperator, StateVector};
use crate::propagator::{ControlField, StrangPropagator, TimeGrid};

/// Known part of the experiment: internal Hamiltonian, initial and target
/// states, time grid and the field penalty weight.
#[derive(Debug, Clone)]
pub struct ProblemContext {
    pub h: HermitianOperator,
    pub psi0: StateVector,
    pub psi1: StateVector,
    pub grid: TimeGrid,
    pub beta: f64,
}

impl ProblemContext {
    pub fn new(
        h: HermitianOperator,
        psi0: StateVector,
        psi1: StateVector,
        grid: TimeGrid,
        beta: f64,
    ) -> Result<Self> {
        for s in [&psi0, &psi1] {
            if s.dim() != h.dim() {
                return Err(Error::DimensionMismatch { expected: h.dim(), found: s.dim() });
            }
            if (s.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::NotNormalized(s.norm()));
            }
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidSettings(format!("beta must be non-negative, got {beta}")));
        }
        Ok(Self { h, psi0, psi1, grid, beta })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn propagator(&self, mu: &HermitianOperator) -> Result<StrangPropagator> {
        StrangPropagator::new(&self.h, mu, &self.grid)
    }

    /// `ψ₁^† v`.
    pub fn project(&self, v: &[Complex64]) -> Complex64 {
        self.psi1.amplitudes().iter().zip(v).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_field(&self, field: &ControlField) -> Result<()> {
        if field.grid() != &self.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }
}

/// Real coefficients `α` of a combination `Σ_j α_j μ^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleCoefficients(pub Vec<f64>);

impl DipoleCoefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSettings("non-finite dipole coefficient".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ_j α_j μ^j` over the leading basis elements.
    pub fn operator(&self, basis: &[HermitianOperator]) -> Result<HermitianOperator> {
        if self.0.len() > basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), found: self.0.len() });
        }
        HermitianOperator::combination(&self.0, &basis[..self.0.len()])
    }
}

/// Measurement `φ(μ, ε) = ⟨ψ₁, ψ_M⟩`.
pub fn measure_phi(ctx: &ProblemContext, mu: &HermitianOperator, field: &ControlField) -> Result<Complex64> {
    ctx.check_field(field)?;
    let final_state = ctx.propagator(mu)?.propagate_final(field, ctx.psi0.amplitudes())?;
    Ok(ctx.project(final_state.as_slice()))
}

/// Discrete selectivity `|⟨ψ₁, ψ_A(T) - ψ_B(T)⟩|² - β Δt Σ ε_j²`.
pub fn selectivity_j(
    ctx: &ProblemContext,
    mu_a: &HermitianOperator,
    mu_b: &HermitianOperator,
    field: &ControlField,
) -> Result<f64> {
    let gap = measure_phi(ctx, mu_a, field)? - measure_phi(ctx, mu_b, field)?;
    Ok(gap.norm_sqr() - ctx.beta * field.energy())
}

/// Right-hand side of the exact increment identity of the discrete
/// selectivity functional between fields `old` and `new`.
#[derive(Debug, Clone)]
pub struct IncrementIdentity {
    /// `|⟨ψ₁, δψ'_M - δψ_M⟩|²`
    pub quadratic: f64,
    /// Per-step contributions, already multiplied by `Δt`.
    pub step_terms: Vec<f64>,
}

impl IncrementIdentity {
    pub fn total(&self) -> f64 {
        self.quadratic + self.step_terms.iter().sum::<f64>()
    }
}

/// Evaluates
///
/// ```text
/// |⟨ψ₁, δψ'_M - δψ_M⟩|²
///   + Δt Σ_j (ε'_j - ε_j) (2 Im⟨ξ_A,j | μ_A,Δt(ε'_j, ε_j) | ψ'_A,j⟩
///                          - 2 Im⟨ξ_B,j | μ_B,Δt(ε'_j, ε_j) | ψ'_B,j⟩
///                          - β (ε'_j + ε_j))
/// ```
///
/// where `δψ = ψ_A - ψ_B`, the costates are propagated backward with the old
/// field from `χ_M = ψ₁ψ₁^† δψ_M`, `ξ_j = e^{+iHΔt} χ_{j+1}` and the primed
/// states are propagated with the new field. The total equals
/// `J(new) - J(old)` up to rounding.
pub fn selectivity_increment_identity(
    ctx: &ProblemContext,
    mu_a: &HermitianOperator,
    mu_b: &HermitianOperator,
    old: &ControlField,
    new: &ControlField,
) -> Result<IncrementIdentity> {
    ctx.check_field(old)?;
    ctx.check_field(new)?;
    let prop_a = ctx.propagator(mu_a)?;
    let prop_b = ctx.propagator(mu_b)?;
    let psi0 = ctx.psi0.amplitudes();

    let old_a = prop_a.propagate_final(old, psi0)?;
    let old_b = prop_b.propagate_final(old, psi0)?;
    let terminal = ctx.psi1.amplitudes() * ctx.project((old_a - old_b).as_slice());
    let chi_a = prop_a.propagate_adjoint(old, &terminal)?;
    let chi_b = prop_b.propagate_adjoint(old, &terminal)?;
    let new_a = prop_a.propagate(new, psi0)?;
    let new_b = prop_b.propagate(new, psi0)?;

    let dt = ctx.grid.dt();
    let step_terms = old
        .samples()
        .iter()
        .zip(new.samples())
        .enumerate()
        .map(|(j, (&e_old, &e_new))| {
            let xa = prop_a
                .step_costate(chi_a.state(j + 1))
                .dotc(&(prop_a.mu_delta_t(e_new, e_old) * new_a.state_vector(j)));
            let xb = prop_b
                .step_costate(chi_b.state(j + 1))
                .dotc(&(prop_b.mu_delta_t(e_new, e_old) * new_b.state_vector(j)));
            dt * (e_new - e_old) * (2.0 * xa.im - 2.0 * xb.im - ctx.beta * (e_new + e_old))
        })
        .collect();

    let gap_new = ctx.project((new_a.state_vector(new_a.len() - 1) - new_b.state_vector(new_b.len() - 1)).as_slice());
    let gap_old = ctx.project(terminal.as_slice());
    Ok(IncrementIdentity { quadratic: (gap_new - gap_old).norm_sqr(), step_terms })
}

/// Least-squares problem `min_α Σ_m |target_m - φ(Σ_j α_j μ^j, ε^m)|²`.
///
/// Shared by the fitting step (targets are measurements of another basis
/// element) and the final identification (targets are lab measurements).
#[derive(Debug, Clone)]
pub struct MeasurementFit<'a> {
    ctx: &'a ProblemContext,
    basis: &'a [HermitianOperator],
    fields: &'a [ControlField],
    targets: Vec<Complex64>,
}

impl<'a> MeasurementFit<'a> {
    pub fn new(
        ctx: &'a ProblemContext,
        basis: &'a [HermitianOperator],
        fields: &'a [ControlField],
        targets: Vec<Complex64>,
    ) -> Result<Self> {
        if targets.len() != fields.len() {
            return Err(Error::CountMismatch { measurements: targets.len(), fields: fields.len() });
        }
        if basis.is_empty() {
            return Err(Error::IndexOutOfRange("empty basis".into()));
        }
        for f in fields {
            ctx.check_field(f)?;
        }
        Ok(Self { ctx, basis, fields, targets })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn targets(&self) -> &[Complex64] {
        &self.targets
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.basis.len() {
            return Err(Error::DimensionMismatch { expected: self.basis.len(), found: alpha.len() });
        }
        Ok(())
    }

    /// `target_m - φ(μ_α, ε^m)` for every field.
    pub fn residuals(&self, alpha: &[f64]) -> Result<Vec<Complex64>> {
        self.check_alpha(alpha)?;
        let prop = self.ctx.propagator(&HermitianOperator::combination(alpha, self.basis)?)?;
        self.fields
            .par_iter()
            .zip(&self.targets)
            .map(|(field, target)| {
                let psi = prop.propagate_final(field, self.ctx.psi0.amplitudes())?;
                Ok(target - self.ctx.project(psi.as_slice()))
            })
            .collect()
    }

    pub fn cost(&self, alpha: &[f64]) -> Result<f64> {
        Ok(self.residuals(alpha)?.iter().map(|r| r.norm_sqr()).sum())
    }

    /// Residuals `r_m` and their derivatives `∂r_m/∂α_j = -⟨ψ₁, δψ_j,m(T)⟩`,
    /// one row per field.
    pub fn jacobian(&self, alpha: &[f64]) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
        self.check_alpha(alpha)?;
        let prop = self.ctx.propagator(&HermitianOperator::combination(alpha, self.basis)?)?;
        let rows: Vec<(Complex64, Vec<Complex64>)> = self
            .fields
            .par_iter()
            .zip(&self.targets)
            .map(|(field, target)| {
                let base = prop.propagate(field, self.ctx.psi0.amplitudes())?;
                let residual = target - self.ctx.project(base.final_state());
                let tangents = prop.propagate_tangents(field, &base, self.basis)?;
                Ok((residual, tangents.iter().map(|t| -self.ctx.project(t.as_slice())).collect()))
            })
            .collect::<Result<_>>()?;
        Ok(rows.into_iter().unzip())
    }

    /// `∂/∂α_j Σ_m |r_m|² = 2 Σ_m Re(conj(r_m) ∂r_m/∂α_j)`, with the tangents
    /// `δψ` computed by one linearized propagation per field and basis
    /// direction.
    pub fn gradient(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        let (residuals, rows) = self.jacobian(alpha)?;
        let mut grad = vec![0.0; self.basis.len()];
        for (r, row) in residuals.iter().zip(rows) {
            grad.iter_mut().zip(row).for_each(|(g, d)| *g += 2.0 * (r.conj() * d).re);
        }
        Ok(grad)
    }
}

fn fitting_problem<'a>(
    ctx: &'a ProblemContext,
    basis: &'a [HermitianOperator],
    target: usize,
    alpha_len: usize,
    fields: &'a [ControlField],
) -> Result<MeasurementFit<'a>> {
    if target == 0 || target >= basis.len() {
        return Err(Error::IndexOutOfRange(format!(
            "fitting target {target} must lie in 1..{}",
            basis.len()
        )));
    }
    if alpha_len != target {
        return Err(Error::DimensionMismatch { expected: target, found: alpha_len });
    }
    if fields.len() != target {
        return Err(Error::CountMismatch { measurements: target, fields: fields.len() });
    }
    let targets = fields
        .par_iter()
        .map(|f| measure_phi(ctx, &basis[target], f))
        .collect::<Result<Vec<_>>>()?;
    MeasurementFit::new(ctx, &basis[..target], fields, targets)
}

/// Fitting cost `Σ_m |φ(μ^target, ε^m) - φ(Σ_{j<target} α_j μ^j, ε^m)|²`
/// over the fields computed so far.
///
/// `target` is the zero-based index of the basis element being imitated;
/// `alpha` and `fields` both have length `target`.
pub fn fitting_cost(
    ctx: &ProblemContext,
    basis: &[HermitianOperator],
    target: usize,
    alpha: &DipoleCoefficients,
    fields: &[ControlField],
) -> Result<f64> {
    fitting_problem(ctx, basis, target, alpha.len(), fields)?.cost(alpha.values())
}

/// Gradient of [`fitting_cost`] with respect to `alpha`.
pub fn fitting_gradient(
    ctx: &ProblemContext,
    basis: &[HermitianOperator],
    target: usize,
    alpha: &DipoleCoefficients,
    fields: &[ControlField],
) -> Result<Vec<f64>> {
    fitting_problem(ctx, basis, target, alpha.len(), fields)?.gradient(alpha.values())
}

/// Builds the fitting least-squares problem for basis element `target`.
pub fn fitting_least_squares<'a>(
    ctx: &'a ProblemContext,
    basis: &'a [HermitianOperator],
    target: usize,
    fields: &'a [ControlField],
) -> Result<MeasurementFit<'a>> {
    fitting_problem(ctx, basis, target, target, fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_hermitian_basis;
    use std::f64::consts::PI;

    fn paper_ctx(steps: usize, final_time: f64) -> ProblemContext {
        ProblemContext::new(
            HermitianOperator::from_diagonal(&[0.01, 0.02, 0.04]).unwrap(),
            StateVector::basis(3, 0).unwrap(),
            StateVector::basis(3, 2).unwrap(),
            TimeGrid::new(final_time, steps).unwrap(),
            1e-2,
        )
        .unwrap()
    }

    #[test]
    fn no_field_no_transfer() {
        let ctx = paper_ctx(400, 40.0 * PI);
        let mu = &random_hermitian_basis(3, 1, 0).unwrap()[0];
        let phi = measure_phi(&ctx, mu, &ControlField::zeros(ctx.grid)).unwrap();
        assert!(phi.norm() < 1e-14);
        let phi0 = measure_phi(&ctx, &HermitianOperator::zeros(3), &ControlField::zeros(ctx.grid)).unwrap();
        assert!(phi0.norm() < 1e-14);
    }

    #[test]
    fn identical_systems_leave_only_penalty() {
        let ctx = paper_ctx(200, 30.0);
        let mu = &random_hermitian_basis(3, 1, 1).unwrap()[0];
        let field = ControlField::from_fn(ctx.grid, |t| 0.05 * (0.3 * t).sin()).unwrap();
        let j = selectivity_j(&ctx, mu, mu, &field).unwrap();
        assert!((j + ctx.beta * field.energy()).abs() < 1e-15);
        let zero = selectivity_j(&ctx, mu, &HermitianOperator::zeros(3), &ControlField::zeros(ctx.grid)).unwrap();
        assert!(zero.abs() < 1e-28);
    }

    #[test]
    fn context_validation() {
        let h = HermitianOperator::from_diagonal(&[0.01, 0.02, 0.04]).unwrap();
        let g = TimeGrid::new(1.0, 2).unwrap();
        let e2 = StateVector::basis(2, 0).unwrap();
        let e3 = StateVector::basis(3, 0).unwrap();
        assert!(ProblemContext::new(h.clone(), e2, e3.clone(), g, 0.0).is_err());
        assert!(ProblemContext::new(h, e3.clone(), e3, g, -1.0).is_err());
    }

    #[test]
    fn fitting_exact_representation() {
        let ctx = paper_ctx(300, 60.0);
        let m1 = random_hermitian_basis(3, 1, 2).unwrap().remove(0);
        let basis = vec![m1.clone(), m1];
        let field = ControlField::from_fn(ctx.grid, |t| 0.1 * (0.05 * t).cos()).unwrap();
        let alpha = DipoleCoefficients::new(vec![1.0]).unwrap();
        let k = fitting_cost(&ctx, &basis, 1, &alpha, std::slice::from_ref(&field)).unwrap();
        assert!(k < 1e-28);
        let g = fitting_gradient(&ctx, &basis, 1, &alpha, std::slice::from_ref(&field)).unwrap();
        assert!(g[0].abs() < 1e-10);
    }

    #[test]
    fn fitting_zero_alpha_is_sum_of_target_measurements() {
        let ctx = paper_ctx(300, 60.0);
        let basis = random_hermitian_basis(3, 3, 3).unwrap();
        let fields: Vec<_> = [0.05, -0.08]
            .iter()
            .map(|&a| ControlField::from_fn(ctx.grid, |t| a * (0.02 * t).sin()).unwrap())
            .collect();
        let alpha = DipoleCoefficients::new(vec![0.0, 0.0]).unwrap();
        let k = fitting_cost(&ctx, &basis, 2, &alpha, &fields).unwrap();
        let direct: f64 = fields
            .iter()
            .map(|f| measure_phi(&ctx, &basis[2], f).unwrap().norm_sqr())
            .sum();
        assert!((k - direct).abs() < 1e-14);
    }

    #[test]
    fn fitting_index_errors() {
        let ctx = paper_ctx(10, 1.0);
        let basis = random_hermitian_basis(3, 2, 4).unwrap();
        let alpha = DipoleCoefficients::new(vec![0.0]).unwrap();
        let f = vec![ControlField::zeros(ctx.grid)];
        assert!(matches!(fitting_cost(&ctx, &basis, 0, &alpha, &f), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(fitting_cost(&ctx, &basis, 2, &alpha, &f), Err(Error::IndexOutOfRange(_))));
        let two = DipoleCoefficients::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(fitting_cost(&ctx, &basis, 1, &two, &f), Err(Error::DimensionMismatch { .. })));
    }
}
