//! On-disk formats. Every file is JSON with a `format` tag and a `version`;
//! floats are written in shortest round-trip form, so reading and writing a
//! file again reproduces it byte for byte.

use dipole_ident::{CMatrix, CVector, ControlField, HermitianOperator, StateVector, TimeGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::settings::Settings;

pub const FORMAT_VERSION: u32 = 1;
pub const PROBLEM_FORMAT: &str = "dipole-ident/problem";
pub const ORACLE_FORMAT: &str = "dipole-ident/oracle";
pub const ARCHIVE_FORMAT: &str = "dipole-ident/field-archive";
pub const TRACE_FORMAT: &str = "dipole-ident/trace-log";
pub const MEASUREMENTS_FORMAT: &str = "dipole-ident/measurements";
pub const REPORT_FORMAT: &str = "dipole-ident/report";

/// Complex matrix as separate real and imaginary row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    pub fn to_matrix(&self) -> Result<CMatrix, CliError> {
        let n = self.re.len();
        let square = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if n == 0 || !square(&self.re) || !square(&self.im) {
            return Err(CliError::usage("matrix entries must form two equal square arrays"));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(self.re[i][j], self.im[i][j])))
    }

    pub fn to_operator(&self) -> Result<HermitianOperator, CliError> {
        Ok(HermitianOperator::new(self.to_matrix()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVector {
    pub fn from_vector(v: &CVector) -> Self {
        Self { re: v.iter().map(|z| z.re).collect(), im: v.iter().map(|z| z.im).collect() }
    }

    pub fn to_state(&self) -> Result<StateVector, CliError> {
        if self.re.len() != self.im.len() {
            return Err(CliError::usage("state vector has mismatched real and imaginary parts"));
        }
        let v = CVector::from_iterator(self.re.len(), self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)));
        Ok(StateVector::physical(v)?)
    }
}

fn check_header(kind: &str, format: &str, version: u32) -> Result<(), CliError> {
    if format != kind {
        return Err(CliError::usage(format!("expected a {kind} file, found {format}")));
    }
    if version != FORMAT_VERSION {
        return Err(CliError::usage(format!("unsupported {kind} version {version}")));
    }
    Ok(())
}

/// Public description of an experiment. Never contains the true operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub format: String,
    pub version: u32,
    pub paper_instance: bool,
    pub hamiltonian: ComplexMatrix,
    pub psi0: ComplexVector,
    pub psi1: ComplexVector,
    pub final_time: f64,
    pub steps: usize,
    pub basis_size: usize,
    pub basis_seed: u64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub settings: Settings,
}

impl ProblemFile {
    pub fn check(&self) -> Result<(), CliError> {
        check_header(PROBLEM_FORMAT, &self.format, self.version)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.final_time, self.steps)?)
    }

    pub fn context(&self) -> Result<dipole_ident::ProblemContext, CliError> {
        Ok(dipole_ident::ProblemContext::new(
            self.hamiltonian.to_operator()?,
            self.psi0.to_state()?,
            self.psi1.to_state()?,
            self.grid()?,
            self.settings.beta,
        )?)
    }
}

/// The hidden operator, kept apart from the problem so that precomputation
/// cannot see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub format: String,
    pub version: u32,
    pub mu_star: ComplexMatrix,
    /// Coefficients in the problem basis when the operator was drawn there.
    pub coefficients: Option<Vec<f64>>,
}

impl OracleFile {
    pub fn check(&self) -> Result<(), CliError> {
        check_header(ORACLE_FORMAT, &self.format, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    /// SHA-256 of the problem file bytes.
    pub problem_hash: String,
    /// SHA-256 of the effective settings in canonical JSON.
    pub settings_hash: String,
    pub basis_seed: u64,
    pub field_seed: u64,
    pub multistart_seed: u64,
}

/// Per-step summary stored with the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub k: usize,
    pub fit_cost: Option<f64>,
    pub fit_alpha: Option<Vec<f64>>,
    pub initial_gap: f64,
    pub final_gap: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldArchive {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub settings: Settings,
    pub final_time: f64,
    pub steps: usize,
    pub basis: Vec<ComplexMatrix>,
    pub fields: Vec<Vec<f64>>,
    pub summary: Vec<StepSummary>,
    pub warnings: Vec<String>,
}

impl FieldArchive {
    pub fn check(&self) -> Result<(), CliError> {
        check_header(ARCHIVE_FORMAT, &self.format, self.version)?;
        if self.fields.len() != self.basis.len() || self.summary.len() != self.basis.len() {
            return Err(CliError::usage("archive lists differ in length"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.final_time, self.steps)?)
    }

    /// Fails unless the archive was computed on the grid of `problem`.
    pub fn check_grid(&self, problem: &ProblemFile) -> Result<(), CliError> {
        if self.final_time.to_bits() != problem.final_time.to_bits() || self.steps != problem.steps {
            return Err(CliError::usage(format!(
                "archive grid (T = {}, M = {}) does not match problem grid (T = {}, M = {})",
                self.final_time, self.steps, problem.final_time, problem.steps
            )));
        }
        Ok(())
    }

    pub fn basis_operators(&self) -> Result<Vec<HermitianOperator>, CliError> {
        self.basis.iter().map(ComplexMatrix::to_operator).collect()
    }

    pub fn control_fields(&self) -> Result<Vec<ControlField>, CliError> {
        let grid = self.grid()?;
        self.fields.iter().map(|f| Ok(ControlField::new(grid, f.clone())?)).collect()
    }
}

/// Optimizer histories of one precomputation, one entry per greedy step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub format: String,
    pub version: u32,
    pub settings_hash: String,
    pub steps: Vec<StepTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub k: usize,
    pub init_seed: u64,
    pub objective_history: Vec<f64>,
    pub min_step_term: Option<f64>,
    pub fit_restart_costs: Vec<f64>,
    pub fit_objective_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub field_id: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementsFile {
    pub format: String,
    pub version: u32,
    /// SHA-256 of the archive the fields were taken from.
    pub archive_hash: String,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub records: Vec<Measurement>,
}

impl MeasurementsFile {
    pub fn check(&self) -> Result<(), CliError> {
        check_header(MEASUREMENTS_FORMAT, &self.format, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub archive_hash: String,
    pub measurements_hash: String,
    pub alpha: Vec<f64>,
    pub mu_hat: ComplexMatrix,
    /// Sum of squared measurement residuals.
    pub residual: f64,
    pub converged: bool,
    pub restart_costs: Vec<f64>,
    /// Present only when a truth file was supplied for scoring.
    pub relative_error: Option<f64>,
    /// Error after removing phase changes no measurement can detect; present
    /// only with a truth file.
    pub gauge_relative_error: Option<f64>,
}

impl Report {
    pub fn check(&self) -> Result<(), CliError> {
        check_header(REPORT_FORMAT, &self.format, self.version)
    }
}
