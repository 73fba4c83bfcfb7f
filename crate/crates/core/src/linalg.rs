//! Small dense complex linear algebra for finite-level systems.
//!
//! Operators are stored as `nalgebra` dynamic matrices. Everything here is a
//! pure function of immutable values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Asymmetry above which [`make_hermitian`] treats its input as corrupted.
pub const DEFAULT_ASYMMETRY_THRESHOLD: f64 = 1e-8;

/// Gram matrices of random bases must stay below this condition number.
pub const MAX_BASIS_CONDITION: f64 = 1e6;

const MAX_BASIS_ATTEMPTS: usize = 100;

/// A complex Hermitian `N x N` operator with `N >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
    asymmetry: f64,
}

impl HermitianOperator {
    /// Symmetrizes `raw` with the default asymmetry threshold.
    pub fn new(raw: CMatrix) -> Result<Self> {
        make_hermitian_with_threshold(raw, DEFAULT_ASYMMETRY_THRESHOLD)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim), asymmetry: 0.0 }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim), asymmetry: 0.0 }
    }

    /// Real diagonal operator.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        check_dim(diag.len())?;
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Ok(Self {
            matrix: CMatrix::from_diagonal(&CVector::from_vec(d)),
            asymmetry: 0.0,
        })
    }

    /// Builds an operator from real row-major rows.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut raw = CMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, cols: row.len() });
            }
            for (j, &x) in row.iter().enumerate() {
                raw[(i, j)] = Complex64::new(x, 0.0);
            }
        }
        Self::new(raw)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Largest `|raw - raw^†|` entry observed when the operator was built.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * c),
            asymmetry: 0.0,
        }
    }

    /// Real linear combination `sum_j coeffs[j] * ops[j]`.
    ///
    /// Real coefficients keep the result exactly Hermitian.
    pub fn combination(coeffs: &[f64], ops: &[HermitianOperator]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| {
            Error::IndexOutOfRange("empty operator list in linear combination".into())
        })?;
        if coeffs.len() != ops.len() {
            return Err(Error::DimensionMismatch { expected: ops.len(), found: coeffs.len() });
        }
        let n = first.dim();
        let mut acc = CMatrix::zeros(n, n);
        for (c, op) in coeffs.iter().zip(ops) {
            if op.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: op.dim() });
            }
            acc += op.matrix.map(|z| z * *c);
        }
        Ok(Self { matrix: acc, asymmetry: 0.0 })
    }

    /// Real Frobenius inner product `Re tr(A^† B)`.
    pub fn frobenius_inner(&self, other: &HermitianOperator) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    /// Maximum absolute entry of `A - A^†`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::DimensionTooSmall(n))
    } else {
        Ok(())
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Returns `(raw + raw^†) / 2`, rejecting inputs whose asymmetry exceeds
/// [`DEFAULT_ASYMMETRY_THRESHOLD`].
pub fn make_hermitian(raw: CMatrix) -> Result<HermitianOperator> {
    make_hermitian_with_threshold(raw, DEFAULT_ASYMMETRY_THRESHOLD)
}

pub fn make_hermitian_with_threshold(raw: CMatrix, threshold: f64) -> Result<HermitianOperator> {
    let (rows, cols) = raw.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    check_dim(rows)?;
    let adj = raw.adjoint();
    let asymmetry = max_abs(&(&raw - &adj));
    if !(asymmetry <= threshold) {
        return Err(Error::Asymmetric { found: asymmetry, threshold });
    }
    let matrix = (raw + adj).map(|z| z * 0.5);
    Ok(HermitianOperator { matrix, asymmetry })
}

/// Eigen-decomposition `U diag(eigenvalues) U^†` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unitary matrix whose columns are the eigenvectors.
    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(lambda_k)) U^†`.
    pub fn apply_function<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let fk = f(lambda);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= fk);
        }
        scaled * u.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_function(|l| Complex64::new(l, 0.0))
    }

    /// `exp(-i s A)` for the decomposed operator `A`.
    pub fn expi_scale(&self, s: f64) -> CMatrix {
        self.apply_function(|l| Complex64::from_polar(1.0, -s * l))
    }
}

pub fn eigendecompose(op: &HermitianOperator) -> Result<SpectralDecomposition> {
    let eig = SymmetricEigen::try_new(op.matrix.clone(), 1e-15, 10_000)
        .ok_or(Error::EigenSolverFailure)?;
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::EigenSolverFailure);
    }
    let n = op.dim();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// `U diag(exp(-i s lambda_k)) U^†`.
pub fn expi_scale(dec: &SpectralDecomposition, s: f64) -> CMatrix {
    dec.expi_scale(s)
}

/// Whether a state is a physical (unit-norm) state or an auxiliary vector such
/// as a tangent or a costate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRole {
    Physical,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    role: StateRole,
}

impl StateVector {
    /// Unit-norm state; rejects vectors whose norm deviates from 1 by more
    /// than `1e-10`.
    pub fn physical(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes, role: StateRole::Physical })
    }

    pub fn auxiliary(amplitudes: CVector) -> Self {
        Self { amplitudes, role: StateRole::Auxiliary }
    }

    /// Canonical basis vector `e_k` (zero-based).
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::IndexOutOfRange(format!("basis index {k} for dimension {dim}")));
        }
        let mut v = CVector::zeros(dim);
        v[k] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes: v, role: StateRole::Physical })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn role(&self) -> StateRole {
        self.role
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }
}

/// Hermitian product `sum_k conj(a_k) b_k`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    inner_raw(a.amplitudes(), b.amplitudes())
}

pub(crate) fn inner_raw(a: &CVector, b: &CVector) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.dotc(b))
}

/// Draws `count` random Hermitian operators of dimension `dim`.
///
/// Real and imaginary parts are i.i.d. standard normal before symmetrization.
/// The whole basis is redrawn until its Frobenius Gram matrix has condition
/// number below [`MAX_BASIS_CONDITION`].
pub fn random_hermitian_basis(dim: usize, count: usize, seed: u64) -> Result<Vec<HermitianOperator>> {
    check_dim(dim)?;
    let max = dim * dim;
    if count == 0 || count > max {
        return Err(Error::BasisTooLarge { requested: count, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_BASIS_ATTEMPTS {
        let basis: Vec<HermitianOperator> = (0..count)
            .map(|_| {
                let raw = CMatrix::from_fn(dim, dim, |_, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                });
                let adj = raw.adjoint();
                HermitianOperator {
                    matrix: (raw + adj).map(|z| z * 0.5),
                    asymmetry: 0.0,
                }
            })
            .collect();
        if gram_condition(&basis) < MAX_BASIS_CONDITION {
            return Ok(basis);
        }
    }
    Err(Error::IllConditionedBasis(MAX_BASIS_ATTEMPTS))
}

/// Real Gram matrix of Frobenius inner products.
pub fn gram_matrix(ops: &[HermitianOperator]) -> DMatrix<f64> {
    let n = ops.len();
    DMatrix::from_fn(n, n, |a, b| ops[a].frobenius_inner(&ops[b]))
}

/// Condition number of the Gram matrix; infinite for a singular family.
pub fn gram_condition(ops: &[HermitianOperator]) -> f64 {
    let eig = SymmetricEigen::new(gram_matrix(ops));
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}
