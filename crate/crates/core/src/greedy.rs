//! Greedy construction of selective fields and the final identification
//! solve.
//!
//! For a basis `μ^1..μ^L` the first field maximizes the transfer yield of
//! `μ^1`. Every later field `ε^k` is built in two sub-steps: fit the best
//! combination `Σ_{j<k} α_j μ^j` reproducing the measurements of `μ^k` under
//! the fields found so far, then run the monotonic scheme to maximize the
//! measurement gap between `μ^k` and that combination. No measurement of the
//! real system is used until [`identify`].

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::functionals::{fitting_least_squares, measure_phi, DipoleCoefficients, MeasurementFit, ProblemContext};
use crate::linalg::{eigendecompose, spectral_norm, CMatrix, CVector, HermitianOperator};
use crate::optimizers::{discriminate, maximize_transfer, multistart_lsq, MonotonicSettings, MultistartSettings, OptimizerTrace};
use crate::propagator::{ControlField, TimeGrid};

/// Fit costs and gap powers below this count as zero when flagging a
/// selectivity failure.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedySettings {
    pub monotonic: MonotonicSettings,
    pub multistart: MultistartSettings,
    /// Standard deviation of the seeded white-noise initial fields.
    pub init_amplitude: f64,
    pub field_seed: u64,
}

impl Default for GreedySettings {
    fn default() -> Self {
        Self {
            monotonic: MonotonicSettings::default(),
            multistart: MultistartSettings::default(),
            init_amplitude: 1e-2,
            field_seed: 0,
        }
    }
}

/// Mixes a base seed with a step index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Seeded Gaussian white noise with standard deviation `amplitude`.
pub fn noise_field(grid: TimeGrid, amplitude: f64, seed: u64) -> Result<ControlField> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidSettings(format!("noise amplitude must be non-negative, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(ControlField::zeros(grid));
    }
    let normal = Normal::new(0.0, amplitude).map_err(|e| Error::InvalidSettings(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ControlField::new(grid, (0..grid.steps()).map(|_| normal.sample(&mut rng)).collect())
}

/// Result of the fitting sub-step for one basis element.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub alpha: DipoleCoefficients,
    pub cost: f64,
    pub trace: OptimizerTrace,
}

/// Everything recorded while building one selective field.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    /// Absent for the first field.
    pub fit: Option<FitOutcome>,
    pub field_trace: OptimizerTrace,
    /// `|φ(μ^k, ε) - φ(Σ α_j μ^j, ε)|` at the initial field.
    pub initial_gap: f64,
    /// Same gap at the optimized field.
    pub final_gap: f64,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveFieldSet {
    pub basis: Vec<HermitianOperator>,
    pub fields: Vec<ControlField>,
    pub steps: Vec<GreedyStep>,
    pub warnings: Vec<String>,
    pub settings: GreedySettings,
}

impl SelectiveFieldSet {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Least-squares fit of basis element `target` (zero-based) by the preceding
/// elements, measured with `fields` (one per preceding element).
pub fn fit_alpha(
    ctx: &ProblemContext,
    basis: &[HermitianOperator],
    target: usize,
    fields: &[ControlField],
    settings: &MultistartSettings,
) -> Result<FitOutcome> {
    let problem = fitting_least_squares(ctx, basis, target, fields)?;
    solve(&problem, settings)
}

fn solve(problem: &MeasurementFit<'_>, settings: &MultistartSettings) -> Result<FitOutcome> {
    let (alpha, trace) = multistart_lsq(|a| problem.cost(a), |a| problem.gradient(a), problem.dim(), settings)?;
    let cost = trace.final_objective();
    Ok(FitOutcome { alpha: DipoleCoefficients::new(alpha)?, cost, trace })
}

fn gap(ctx: &ProblemContext, a: &HermitianOperator, b: &HermitianOperator, field: &ControlField) -> Result<f64> {
    Ok((measure_phi(ctx, a, field)? - measure_phi(ctx, b, field)?).norm())
}

/// Builds one selective field per basis element.
pub fn greedy_fields(
    ctx: &ProblemContext,
    basis: &[HermitianOperator],
    settings: &GreedySettings,
) -> Result<SelectiveFieldSet> {
    if basis.is_empty() {
        return Err(Error::IndexOutOfRange("basis must contain at least one operator".into()));
    }
    for op in basis {
        if op.dim() != ctx.dim() {
            return Err(Error::DimensionMismatch { expected: ctx.dim(), found: op.dim() });
        }
    }
    settings.monotonic.validate()?;
    settings.multistart.validate()?;

    let zero = HermitianOperator::zeros(ctx.dim());
    let mut fields: Vec<ControlField> = Vec::with_capacity(basis.len());
    let mut steps = Vec::with_capacity(basis.len());
    let mut warnings = Vec::new();

    for k in 0..basis.len() {
        let init_seed = derive_seed(settings.field_seed, k as u64);
        let init = noise_field(ctx.grid, settings.init_amplitude, init_seed)?;
        let (fit, rival) = if k == 0 {
            (None, zero.clone())
        } else {
            let ms = MultistartSettings { seed: derive_seed(settings.multistart.seed, k as u64), ..settings.multistart };
            let outcome = fit_alpha(ctx, basis, k, &fields, &ms)?;
            let rival = outcome.alpha.operator(basis)?;
            log::info!("step {}: fit cost {:.3e}, alpha {:?}", k + 1, outcome.cost, outcome.alpha.values());
            (Some(outcome), rival)
        };
        let (field, field_trace) = if k == 0 {
            maximize_transfer(ctx, &basis[0], &init, &settings.monotonic)?
        } else {
            discriminate(ctx, &basis[k], &rival, &init, &settings.monotonic)?
        };
        let initial_gap = gap(ctx, &basis[k], &rival, &init)?;
        let final_gap = gap(ctx, &basis[k], &rival, &field)?;
        log::info!(
            "step {}: gap {:.3e} -> {:.3e} in {} iterations",
            k + 1,
            initial_gap,
            final_gap,
            field_trace.iterations
        );
        if let Some(fit) = &fit {
            if fit.cost <= DEGENERACY_THRESHOLD && final_gap * final_gap <= DEGENERACY_THRESHOLD {
                let msg = format!(
                    "selectivity failure at step {}: fitted combination reproduces basis element {} \
                     and no discriminating field was found",
                    k + 1,
                    k + 1
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        fields.push(field);
        steps.push(GreedyStep { fit, field_trace, initial_gap, final_gap, init_seed });
    }

    Ok(SelectiveFieldSet { basis: basis.to_vec(), fields, steps, warnings, settings: *settings })
}

/// One laboratory measurement `φ(μ*, ε^k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub field_id: usize,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub alpha: DipoleCoefficients,
    pub mu_hat: HermitianOperator,
    /// `Σ_k |φ(μ̂, ε^k) - m_k|²` at the returned coefficients.
    pub residual: f64,
    pub relative_error: Option<f64>,
    pub trace: OptimizerTrace,
}

/// Solves `φ(Σ_j α_j μ^j, ε^k) = m_k`, `k = 1..L`, in the least-squares
/// sense. The best point found is always returned.
pub fn identify(
    ctx: &ProblemContext,
    fieldset: &SelectiveFieldSet,
    measurements: &[MeasurementRecord],
    settings: &MultistartSettings,
) -> Result<IdentificationResult> {
    if measurements.len() != fieldset.fields.len() {
        return Err(Error::CountMismatch { measurements: measurements.len(), fields: fieldset.fields.len() });
    }
    let mut targets = vec![None; fieldset.fields.len()];
    for m in measurements {
        let slot = targets
            .get_mut(m.field_id)
            .ok_or_else(|| Error::IndexOutOfRange(format!("measurement for unknown field {}", m.field_id)))?;
        if slot.replace(m.value).is_some() {
            return Err(Error::IndexOutOfRange(format!("duplicate measurement for field {}", m.field_id)));
        }
    }
    let targets: Vec<Complex64> = targets.into_iter().map(|t| t.expect("all slots filled")).collect();
    let problem = MeasurementFit::new(ctx, &fieldset.basis, &fieldset.fields, targets)?;
    let outcome = solve(&problem, settings)?;
    let mu_hat = outcome.alpha.operator(&fieldset.basis)?;
    Ok(IdentificationResult {
        alpha: outcome.alpha,
        mu_hat,
        residual: outcome.cost,
        relative_error: None,
        trace: outcome.trace,
    })
}

/// `‖μ* - μ̂‖₂ / ‖μ*‖₂` in the operator 2-norm.
pub fn relative_error(mu_hat: &HermitianOperator, mu_star: &HermitianOperator) -> Result<f64> {
    if mu_hat.dim() != mu_star.dim() {
        return Err(Error::DimensionMismatch { expected: mu_star.dim(), found: mu_hat.dim() });
    }
    let reference = spectral_norm(mu_star.matrix());
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(spectral_norm(&(mu_star.matrix() - mu_hat.matrix())) / reference)
}

/// Weights of `ψ₀` and `ψ₁` below this count as zero when looking for
/// measurement-invariant phases.
const GAUGE_WEIGHT_THRESHOLD: f64 = 1e-12;

/// Eigen-indices of `H` on which neither `ψ₀` nor `ψ₁` has weight.
///
/// A phase change `D` that is diagonal in the eigenbasis of `H` and equal to
/// one outside these indices commutes with `H` and fixes `ψ₀` and `ψ₁`, so
/// `μ` and `D μ D^†` produce identical measurements under every field.
pub fn measurement_gauge_indices(ctx: &ProblemContext) -> Result<Vec<usize>> {
    let dec = eigendecompose(&ctx.h)?;
    let u = dec.eigenvectors();
    let c0 = u.adjoint() * ctx.psi0.amplitudes();
    let c1 = u.adjoint() * ctx.psi1.amplitudes();
    Ok((0..ctx.dim())
        .filter(|&k| c0[k].norm() <= GAUGE_WEIGHT_THRESHOLD && c1[k].norm() <= GAUGE_WEIGHT_THRESHOLD)
        .collect())
}

/// Smallest [`relative_error`] of `D μ̂ D^†` over the measurement-invariant
/// phase changes of [`measurement_gauge_indices`].
///
/// This is the part of the error that measurements can resolve; it equals
/// [`relative_error`] when no free index exists.
pub fn gauge_relative_error(
    ctx: &ProblemContext,
    mu_hat: &HermitianOperator,
    mu_star: &HermitianOperator,
) -> Result<f64> {
    let free = measurement_gauge_indices(ctx)?;
    if free.is_empty() {
        return relative_error(mu_hat, mu_star);
    }
    let u = eigendecompose(&ctx.h)?.eigenvectors().clone();
    let error_at = |phases: &[f64]| -> Result<f64> {
        let mut diag = CVector::from_element(ctx.dim(), Complex64::new(1.0, 0.0));
        for (&k, &theta) in free.iter().zip(phases) {
            diag[k] = Complex64::from_polar(1.0, theta);
        }
        let d = &u * CMatrix::from_diagonal(&diag) * u.adjoint();
        relative_error(&HermitianOperator::new(&d * mu_hat.matrix() * d.adjoint())?, mu_star)
    };
    // coordinate scan on a coarse grid, then golden-section refinement
    const GRID: usize = 256;
    let cell = std::f64::consts::TAU / GRID as f64;
    let mut phases = vec![0.0; free.len()];
    let mut best = error_at(&phases)?;
    for _ in 0..3 {
        for i in 0..free.len() {
            for g in 0..GRID {
                let mut trial = phases.clone();
                trial[i] = g as f64 * cell;
                let e = error_at(&trial)?;
                if e < best {
                    best = e;
                    phases = trial;
                }
            }
        }
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for i in 0..free.len() {
        let (mut lo, mut hi) = (phases[i] - cell, phases[i] + cell);
        let probe = |x: f64| -> Result<f64> {
            let mut trial = phases.clone();
            trial[i] = x;
            error_at(&trial)
        };
        for _ in 0..60 {
            let a = hi - ratio * (hi - lo);
            let b = lo + ratio * (hi - lo);
            if probe(a)? < probe(b)? {
                hi = b;
            } else {
                lo = a;
            }
        }
        let x = 0.5 * (lo + hi);
        let e = probe(x)?;
        if e < best {
            best = e;
            phases[i] = x;
        }
    }
    Ok(best)
}
