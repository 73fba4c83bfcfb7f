//! Strang-split time stepping for `i dψ/dt = (H + ε(t) μ) ψ`.
//!
//! One step with field sample `ε_j` is
//!
//! ```text
//! S_j = A · exp(-i ε_j μ Δt) · A,    A = exp(-i H Δt / 2)
//! ```
//!
//! The tangent and adjoint propagations differentiate and transpose this
//! discrete map itself, so they are exact duals of [`StrangPropagator::step`].
//!
//! Hot loops work on flat row-major buffers; the `nalgebra` types only appear
//! at the API boundary.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{eigendecompose, CMatrix, CVector, HermitianOperator, SpectralDecomposition, StateVector};

/// Uniform grid `t_j = j·Δt`, `j = 0..=M`, with `M·Δt = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("number of steps must be at least 1".into()));
        }
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::InvalidGrid(format!("final time must be positive, got {final_time}")));
        }
        Ok(Self { final_time, steps })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    /// Time of grid point `j`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }
}

/// Piecewise-constant control: sample `ε_j` drives step `j -> j+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: TimeGrid,
    samples: Vec<f64>,
}

impl ControlField {
    pub fn new(grid: TimeGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.steps() {
            return Err(Error::DimensionMismatch { expected: grid.steps(), found: samples.len() });
        }
        if let Some(j) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField(j));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, samples: vec![0.0; grid.steps()] }
    }

    /// Samples `f` at the left end of every step.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: TimeGrid, f: F) -> Result<Self> {
        let samples = (0..grid.steps()).map(|j| f(grid.time(j))).collect();
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Discrete `L²` norm `sqrt(Δt Σ ε_j²)`.
    pub fn l2_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Discrete `L²` distance to another field on the same grid.
    pub fn l2_distance(&self, other: &ControlField) -> f64 {
        let sum: f64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (self.grid.dt() * sum).sqrt()
    }

    /// Left-endpoint quadrature of `∫ ε² dt`.
    pub fn energy(&self) -> f64 {
        self.grid.dt() * self.samples.iter().map(|x| x * x).sum::<f64>()
    }
}

/// States `ψ_0..ψ_M` on the grid points, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    data: Vec<Complex64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn state_vector(&self, j: usize) -> CVector {
        CVector::from_column_slice(self.state(j))
    }

    pub fn initial(&self) -> &[Complex64] {
        self.state(0)
    }

    pub fn final_state(&self) -> &[Complex64] {
        self.state(self.len() - 1)
    }

    /// Number of grid points (`M + 1`).
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.dim)
    }

    /// `max_j |‖ψ_j‖ - reference|`.
    pub fn max_norm_deviation(&self, reference: f64) -> f64 {
        self.iter().map(|s| (norm(s) - reference).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(e^{-iy} - 1) / (-iy) = Σ_n (-iy)^n / (n+1)!`, evaluated without
/// cancellation near `y = 0`.
pub(crate) fn phase_divided(y: f64) -> Complex64 {
    if y.abs() < 0.05 {
        // truncation error below y^8/9! < 1e-16
        let z = Complex64::new(0.0, -y);
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..8 {
            term *= z / (n + 1) as f64;
            sum += term;
        }
        return sum;
    }
    let half = 0.5 * y;
    Complex64::new(y.sin() / y, -2.0 * half.sin() * half.sin() / y)
}

/// Row-major dense matrix for the inner loops.
#[derive(Debug, Clone)]
struct Dense {
    n: usize,
    data: Vec<Complex64>,
}

impl Dense {
    fn from_matrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        let data = (0..n * n).map(|idx| m[(idx / n, idx % n)]).collect();
        Self { n, data }
    }

    #[inline]
    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (row, o) in self.data.chunks_exact(self.n).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Cached Strang stepper for one `(H, μ, grid)` triple.
///
/// The coupling exponential is applied through the eigendecomposition of `μ`,
/// so each step only recomputes diagonal phases.
#[derive(Debug, Clone)]
pub struct StrangPropagator {
    grid: TimeGrid,
    coupling: SpectralDecomposition,
    // λ_k Δt
    rates: Vec<f64>,
    // A·A and its adjoint, used for field-free steps
    free: Dense,
    free_adj: Dense,
    // A·U
    left: Dense,
    // U^†·A
    right: Dense,
    // (A·U)^†
    left_adj: Dense,
    // (U^†·A)^†
    right_adj: Dense,
    half_free: CMatrix,
}

impl StrangPropagator {
    pub fn new(h: &HermitianOperator, mu: &HermitianOperator, grid: &TimeGrid) -> Result<Self> {
        if h.dim() != mu.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: mu.dim() });
        }
        let half_free = eigendecompose(h)?.expi_scale(0.5 * grid.dt());
        let coupling = eigendecompose(mu)?;
        let u = coupling.eigenvectors();
        let left = &half_free * u;
        let right = u.adjoint() * &half_free;
        let free = &half_free * &half_free;
        let rates = coupling.eigenvalues().iter().map(|l| l * grid.dt()).collect();
        Ok(Self {
            grid: *grid,
            rates,
            free: Dense::from_matrix(&free),
            free_adj: Dense::from_matrix(&free.adjoint()),
            left_adj: Dense::from_matrix(&left.adjoint()),
            right_adj: Dense::from_matrix(&right.adjoint()),
            left: Dense::from_matrix(&left),
            right: Dense::from_matrix(&right),
            coupling,
            half_free,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.coupling.dim()
    }

    pub fn coupling(&self) -> &SpectralDecomposition {
        &self.coupling
    }

    /// `λ_k Δt` for the coupling eigenvalues.
    pub(crate) fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `U^†·A·ψ`: the state in the coupling eigenbasis after the first half step.
    pub(crate) fn enter_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        self.right.apply(psi, out);
    }

    /// Completes a step from the rotated half-stepped state; `rotated` is
    /// used as scratch.
    pub(crate) fn finish_into(&self, eps: f64, rotated: &mut [Complex64], out: &mut [Complex64]) {
        for (z, r) in rotated.iter_mut().zip(&self.rates) {
            *z *= Complex64::from_polar(1.0, -eps * r);
        }
        self.left.apply(rotated, out);
    }

    /// `(A·U)^†·χ`: the costate pulled back across the last half step.
    pub(crate) fn enter_adjoint_into(&self, chi: &[Complex64], out: &mut [Complex64]) {
        self.left_adj.apply(chi, out);
    }

    fn step_into(&self, eps: f64, psi: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        if eps == 0.0 {
            self.free.apply(psi, out);
        } else {
            self.right.apply(psi, scratch);
            self.finish_into(eps, scratch, out);
        }
    }

    fn step_adjoint_into(&self, eps: f64, chi: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        if eps == 0.0 {
            self.free_adj.apply(chi, out);
        } else {
            self.left_adj.apply(chi, scratch);
            for (z, r) in scratch.iter_mut().zip(&self.rates) {
                *z *= Complex64::from_polar(1.0, eps * r);
            }
            self.right_adj.apply(scratch, out);
        }
    }

    /// One forward step `S(ε) ψ`.
    pub fn step(&self, eps: f64, psi: &CVector) -> CVector {
        let n = self.dim();
        let mut out = CVector::zeros(n);
        let mut scratch = vec![Complex64::default(); n];
        self.step_into(eps, psi.as_slice(), out.as_mut_slice(), &mut scratch);
        out
    }

    /// One backward step `S(ε)^† χ`.
    pub fn step_adjoint(&self, eps: f64, chi: &CVector) -> CVector {
        let n = self.dim();
        let mut out = CVector::zeros(n);
        let mut scratch = vec![Complex64::default(); n];
        self.step_adjoint_into(eps, chi.as_slice(), out.as_mut_slice(), &mut scratch);
        out
    }

    fn check_field(&self, field: &ControlField) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if let Some(j) = field.samples().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField(j));
        }
        Ok(())
    }

    fn check_vec(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: len });
        }
        Ok(())
    }

    /// Forward trajectory from `psi0`.
    pub fn propagate(&self, field: &ControlField, psi0: &CVector) -> Result<Trajectory> {
        self.check_field(field)?;
        self.check_vec(psi0.len())?;
        let n = self.dim();
        let m = field.samples().len();
        let mut data = vec![Complex64::default(); (m + 1) * n];
        data[..n].copy_from_slice(psi0.as_slice());
        let mut scratch = vec![Complex64::default(); n];
        for (j, &eps) in field.samples().iter().enumerate() {
            let (done, rest) = data.split_at_mut((j + 1) * n);
            self.step_into(eps, &done[j * n..], &mut rest[..n], &mut scratch);
        }
        Ok(Trajectory { dim: n, data })
    }

    /// Final state only; avoids storing the trajectory.
    pub fn propagate_final(&self, field: &ControlField, psi0: &CVector) -> Result<CVector> {
        self.check_field(field)?;
        self.check_vec(psi0.len())?;
        let n = self.dim();
        let mut cur = psi0.clone();
        let mut next = CVector::zeros(n);
        let mut scratch = vec![Complex64::default(); n];
        for &eps in field.samples() {
            self.step_into(eps, cur.as_slice(), next.as_mut_slice(), &mut scratch);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Backward costate `χ_M = terminal`, `χ_j = S_j^† χ_{j+1}`.
    pub fn propagate_adjoint(&self, field: &ControlField, terminal: &CVector) -> Result<Trajectory> {
        self.check_field(field)?;
        self.check_vec(terminal.len())?;
        let n = self.dim();
        let m = field.samples().len();
        let mut data = vec![Complex64::default(); (m + 1) * n];
        data[m * n..].copy_from_slice(terminal.as_slice());
        let mut scratch = vec![Complex64::default(); n];
        for j in (0..m).rev() {
            let (head, tail) = data.split_at_mut((j + 1) * n);
            self.step_adjoint_into(field.samples()[j], &tail[..n], &mut head[j * n..], &mut scratch);
        }
        Ok(Trajectory { dim: n, data })
    }

    /// `δψ_M` for each direction `dmu` in `directions`.
    ///
    /// Differentiates the discrete map with respect to the dipole operator:
    /// `δψ_{j+1} = S_j δψ_j + A · D exp(-i ε_j Δt μ)[dmu] · A ψ_j`, `δψ_0 = 0`,
    /// where the Fréchet derivative of the exponential is evaluated exactly
    /// in the eigenbasis of `μ` via first divided differences.
    pub fn propagate_tangents(
        &self,
        field: &ControlField,
        base: &Trajectory,
        directions: &[HermitianOperator],
    ) -> Result<Vec<CVector>> {
        self.check_field(field)?;
        if base.len() != field.samples().len() + 1 || base.dim() != self.dim() {
            return Err(Error::GridMismatch);
        }
        let n = self.dim();
        for d in directions {
            self.check_vec(d.dim())?;
        }
        let u = self.coupling.eigenvectors();
        let rotated: Vec<Dense> = directions
            .iter()
            .map(|d| Dense::from_matrix(&(u.adjoint() * d.matrix() * u)))
            .collect();
        let lambdas = self.coupling.eigenvalues();
        let dt = self.grid.dt();

        let mut tangents = vec![Complex64::default(); directions.len() * n];
        let mut phases = vec![Complex64::default(); n];
        let mut kernel = vec![Complex64::default(); n * n];
        let mut b = vec![Complex64::default(); n];
        let mut tmp = vec![Complex64::default(); n];
        for (j, &eps) in field.samples().iter().enumerate() {
            let s = eps * dt;
            for (p, l) in phases.iter_mut().zip(lambdas) {
                *p = Complex64::from_polar(1.0, -s * l);
            }
            // first divided differences of x -> exp(-i s x) on the spectrum
            for k in 0..n {
                for l in 0..n {
                    let gap = lambdas[k] - lambdas[l];
                    let y = s * gap;
                    kernel[k * n + l] = if y.abs() < 0.05 {
                        phases[l] * Complex64::new(0.0, -s) * phase_divided(y)
                    } else {
                        (phases[k] - phases[l]) / gap
                    };
                }
            }
            self.right.apply(base.state(j), &mut b);
            for (t, rot) in tangents.chunks_exact_mut(n).zip(&rotated) {
                self.right.apply(t, &mut tmp);
                for k in 0..n {
                    let row = &rot.data[k * n..(k + 1) * n];
                    let kr = &kernel[k * n..(k + 1) * n];
                    let source: Complex64 = (0..n).map(|l| row[l] * kr[l] * b[l]).sum();
                    tmp[k] = tmp[k] * phases[k] + source;
                }
                self.left.apply(&tmp, t);
            }
        }
        Ok(tangents.chunks_exact(n).map(CVector::from_column_slice).collect())
    }

    /// Divided difference `(e^{-iε'μΔt} - e^{-iεμΔt}) / (-iΔt(ε'-ε))` in the
    /// coupling eigenbasis, as eigenvalue weights.
    pub(crate) fn divided_weights(&self, eps_new: f64, eps_old: f64) -> Vec<Complex64> {
        self.coupling
            .eigenvalues()
            .iter()
            .zip(&self.rates)
            .map(|(&l, &r)| Complex64::from_polar(1.0, -eps_old * r) * l * phase_divided(r * (eps_new - eps_old)))
            .collect()
    }

    /// `e^{+iHΔt/2} · D(ε', ε) · e^{-iHΔt/2}` with `D` the divided difference
    /// of the coupling exponential.
    pub fn mu_delta_t(&self, eps_new: f64, eps_old: f64) -> CMatrix {
        let u = self.coupling.eigenvectors();
        let mut scaled = u.clone();
        for (k, w) in self.divided_weights(eps_new, eps_old).into_iter().enumerate() {
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= w);
        }
        self.half_free.adjoint() * scaled * u.adjoint() * &self.half_free
    }

    /// Costate paired with step `j` in the discrete increment identity:
    /// `e^{+iHΔt} χ_{j+1}`.
    pub fn step_costate(&self, chi_next: &[Complex64]) -> CVector {
        let a_adj = self.half_free.adjoint();
        &a_adj * (&a_adj * CVector::from_column_slice(chi_next))
    }
}

/// Forward Strang propagation of `psi0` under `(H, μ, field)`.
pub fn propagate(
    h: &HermitianOperator,
    mu: &HermitianOperator,
    field: &ControlField,
    psi0: &StateVector,
) -> Result<Trajectory> {
    StrangPropagator::new(h, mu, field.grid())?.propagate(field, psi0.amplitudes())
}

/// Derivative of `ψ_M` in the direction `dmu` of the dipole operator,
/// linearized around `base = propagate(h, mu_alpha, field, ψ_0)`.
pub fn propagate_tangent(
    h: &HermitianOperator,
    mu_alpha: &HermitianOperator,
    dmu: &HermitianOperator,
    field: &ControlField,
    base: &Trajectory,
) -> Result<StateVector> {
    let prop = StrangPropagator::new(h, mu_alpha, field.grid())?;
    let mut out = prop.propagate_tangents(field, base, std::slice::from_ref(dmu))?;
    Ok(StateVector::auxiliary(out.pop().unwrap()))
}

/// Backward costate trajectory ending at `terminal`.
pub fn propagate_adjoint(
    h: &HermitianOperator,
    mu: &HermitianOperator,
    field: &ControlField,
    terminal: &StateVector,
) -> Result<Trajectory> {
    StrangPropagator::new(h, mu, field.grid())?.propagate_adjoint(field, terminal.amplitudes())
}

/// Divided-difference surrogate of `μ` for a single step of length `dt`.
///
/// Symmetric in `(eps_new, eps_old)`; for coincident arguments it reduces to
/// `e^{+iHΔt/2} μ e^{-iεμΔt} e^{-iHΔt/2}`.
pub fn mu_delta_t(
    h: &HermitianOperator,
    mu: &HermitianOperator,
    eps_new: f64,
    eps_old: f64,
    dt: f64,
) -> Result<CMatrix> {
    let grid = TimeGrid::new(dt, 1)?;
    Ok(StrangPropagator::new(h, mu, &grid)?.mu_delta_t(eps_new, eps_old))
}
