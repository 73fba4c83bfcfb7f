//! Subcommand implementations.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use dipole_ident::greedy::derive_seed;
use dipole_ident::{
    gauge_relative_error, greedy_fields, identify, measure_phi, random_hermitian_basis, relative_error, CVector,
    HermitianOperator, MeasurementRecord, SelectiveFieldSet, StateVector,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::cli::{Command, ExportArgs, GenerateArgs, IdentifyArgs, MeasureArgs, PrecomputeArgs};
use crate::error::CliError;
use crate::formats::*;
use crate::io::{read_json, sibling, write_atomic, write_json};
use crate::settings::{ConfigFile, Settings};

/// Published three-level dipole.
pub const PAPER_MU_STAR: [[f64; 3]; 3] = [
    [2.4154, 1.9335, 1.5822],
    [1.9335, 1.4366, 1.5991],
    [1.5822, 1.5991, 1.9843],
];
pub const PAPER_ENERGIES: [f64; 3] = [0.01, 0.02, 0.04];
pub const PAPER_FINAL_TIME: f64 = 4000.0 * PI;
pub const PAPER_STEPS: usize = 40000;
pub const DEFAULT_FINAL_TIME: f64 = 400.0 * PI;
pub const DEFAULT_STEPS: usize = 4000;
pub const DEFAULT_DIM: usize = 3;

// seed streams derived from the master seed
const BASIS_STREAM: u64 = 0;
const DIPOLE_STREAM: u64 = 1;
const FIELD_STREAM: u64 = 2;
const MULTISTART_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 4;
const STATE_STREAM: u64 = 5;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenerateProblem(a) => generate_problem(&a),
        Command::Precompute(a) => precompute(&a),
        Command::Measure(a) => measure(&a),
        Command::Identify(a) => identify_cmd(&a),
        Command::ExportFields(a) => export_fields(&a),
    }
}

#[derive(Serialize)]
struct Timing<'a> {
    command: &'a str,
    wall_seconds: f64,
}

/// Wall time goes to a sidecar so that the main outputs stay reproducible.
fn record_time(out: &Path, command: &str, start: Instant) -> Result<(), CliError> {
    let wall_seconds = start.elapsed().as_secs_f64();
    log::info!("{command}: {wall_seconds:.2} s");
    write_json(&sibling(out, "timing.json"), &Timing { command, wall_seconds })?;
    Ok(())
}

fn random_state(dim: usize, seed: u64) -> Result<StateVector, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let v = CVector::from_fn(dim, |_, _| Complex64::new(draw(), draw()));
    let n = v.norm();
    Ok(StateVector::physical(v / Complex64::new(n, 0.0))?)
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{name} must be positive, got {v}")))
    }
}

pub fn generate_problem(a: &GenerateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(a.config.as_deref())?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let paper = a.paper || cfg.paper.unwrap_or(false);
    let dim = a.dim.or(cfg.dim).unwrap_or(DEFAULT_DIM);
    if paper && dim != 3 {
        return Err(CliError::usage("the published instance has dimension 3"));
    }
    if dim < 2 {
        return Err(CliError::usage("dimension must be at least 2"));
    }
    let basis_size = a.basis_size.or(cfg.basis_size).unwrap_or(dim * dim);
    let (default_time, default_steps) =
        if paper { (PAPER_FINAL_TIME, PAPER_STEPS) } else { (DEFAULT_FINAL_TIME, DEFAULT_STEPS) };
    let final_time = a.final_time.or(cfg.final_time).unwrap_or(default_time);
    let steps = a.steps.or(cfg.steps).unwrap_or(default_steps);
    let noise_sigma = a.noise_sigma.or(cfg.noise_sigma).unwrap_or(0.0);
    check_positive("final time", final_time)?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(CliError::usage("noise sigma must be non-negative"));
    }

    let mut settings = Settings::with_seeds(derive_seed(seed, FIELD_STREAM), derive_seed(seed, MULTISTART_STREAM));
    settings.apply(&cfg.settings);
    settings.apply(&a.tuning.overlay());
    settings.validate()?;

    let basis_seed = derive_seed(seed, BASIS_STREAM);
    let basis = random_hermitian_basis(dim, basis_size, basis_seed)?;
    let (h, psi0, psi1, mu_star, coefficients) = if paper {
        let rows: Vec<Vec<f64>> = PAPER_MU_STAR.iter().map(|r| r.to_vec()).collect();
        (
            HermitianOperator::from_diagonal(&PAPER_ENERGIES)?,
            StateVector::basis(3, 0)?,
            StateVector::basis(3, 2)?,
            HermitianOperator::from_real_rows(&rows)?,
            None,
        )
    } else {
        // distinct Bohr frequencies; generic states so that no phase change
        // of the dipole is invisible to the measurements
        let energies: Vec<f64> = (0..dim).map(|k| 1e-2 * 2f64.powi(k as i32)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DIPOLE_STREAM));
        let alpha: Vec<f64> = (0..basis_size).map(|_| StandardNormal.sample(&mut rng)).collect();
        let state_seed = derive_seed(seed, STATE_STREAM);
        (
            HermitianOperator::from_diagonal(&energies)?,
            random_state(dim, state_seed)?,
            random_state(dim, derive_seed(state_seed, 1))?,
            HermitianOperator::combination(&alpha, &basis)?,
            Some(alpha),
        )
    };

    let problem = ProblemFile {
        format: PROBLEM_FORMAT.into(),
        version: FORMAT_VERSION,
        paper_instance: paper,
        hamiltonian: ComplexMatrix::from_matrix(h.matrix()),
        psi0: ComplexVector::from_vector(psi0.amplitudes()),
        psi1: ComplexVector::from_vector(psi1.amplitudes()),
        final_time,
        steps,
        basis_size,
        basis_seed,
        noise_sigma,
        noise_seed: derive_seed(seed, NOISE_STREAM),
        settings,
    };
    // validates the grid and the states before anything is written
    problem.context()?;
    let oracle = OracleFile {
        format: ORACLE_FORMAT.into(),
        version: FORMAT_VERSION,
        mu_star: ComplexMatrix::from_matrix(mu_star.matrix()),
        coefficients,
    };
    let oracle_path = a.oracle_out.clone().unwrap_or_else(|| sibling(&a.out, "oracle.json"));
    write_json(&a.out, &problem)?;
    write_json(&oracle_path, &oracle)?;
    log::info!("wrote {} and {}", a.out.display(), oracle_path.display());
    Ok(())
}

fn load_problem(path: &Path) -> Result<(ProblemFile, String), CliError> {
    let (problem, hash): (ProblemFile, String) = read_json(path)?;
    problem.check()?;
    Ok((problem, hash))
}

fn load_archive(path: &Path) -> Result<(FieldArchive, String), CliError> {
    let (archive, hash): (FieldArchive, String) = read_json(path)?;
    archive.check()?;
    Ok((archive, hash))
}

fn load_oracle(path: &Path) -> Result<HermitianOperator, CliError> {
    let (oracle, _): (OracleFile, String) = read_json(path)?;
    oracle.check()?;
    oracle.mu_star.to_operator()
}

/// Builds the selective fields. Takes no oracle: the true dipole cannot
/// reach this code path.
pub fn precompute(a: &PrecomputeArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = ConfigFile::load(a.config.as_deref())?;
    let (mut problem, problem_hash) = load_problem(&a.problem)?;
    problem.settings.apply(&cfg.settings);
    problem.settings.apply(&a.tuning.overlay());
    problem.settings.validate()?;
    let settings = problem.settings;
    let ctx = problem.context()?;
    let basis = random_hermitian_basis(ctx.dim(), problem.basis_size, problem.basis_seed)?;
    let set = greedy_fields(&ctx, &basis, &settings.greedy())?;
    for w in &set.warnings {
        log::warn!("{w}");
    }

    let summary = set
        .steps
        .iter()
        .zip(&set.fields)
        .enumerate()
        .map(|(k, (step, field))| StepSummary {
            k: k + 1,
            fit_cost: step.fit.as_ref().map(|f| f.cost),
            fit_alpha: step.fit.as_ref().map(|f| f.alpha.values().to_vec()),
            initial_gap: step.initial_gap,
            final_gap: step.final_gap,
            final_objective: step.field_trace.final_objective(),
            iterations: step.field_trace.iterations,
            converged: step.field_trace.converged,
            l2_norm: field.l2_norm(),
        })
        .collect();
    let archive = FieldArchive {
        format: ARCHIVE_FORMAT.into(),
        version: FORMAT_VERSION,
        provenance: Provenance {
            code_version: env!("CARGO_PKG_VERSION").into(),
            problem_hash,
            settings_hash: settings.hash(),
            basis_seed: problem.basis_seed,
            field_seed: settings.field_seed,
            multistart_seed: settings.multistart_seed,
        },
        settings,
        final_time: problem.final_time,
        steps: problem.steps,
        basis: set.basis.iter().map(|b| ComplexMatrix::from_matrix(b.matrix())).collect(),
        fields: set.fields.iter().map(|f| f.samples().to_vec()).collect(),
        summary,
        warnings: set.warnings.clone(),
    };
    let trace = TraceLog {
        format: TRACE_FORMAT.into(),
        version: FORMAT_VERSION,
        settings_hash: settings.hash(),
        steps: set
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| StepTrace {
                k: k + 1,
                init_seed: s.init_seed,
                objective_history: s.field_trace.objective_history.clone(),
                min_step_term: s.field_trace.min_step_term,
                fit_restart_costs: s.fit.as_ref().map(|f| f.trace.restart_costs.clone()).unwrap_or_default(),
                fit_objective_history: s.fit.as_ref().map(|f| f.trace.objective_history.clone()).unwrap_or_default(),
            })
            .collect(),
    };
    write_json(&a.out, &archive)?;
    write_json(&a.trace_out.clone().unwrap_or_else(|| sibling(&a.out, "trace.json")), &trace)?;
    record_time(&a.out, "precompute", start)
}

pub fn measure(a: &MeasureArgs) -> Result<(), CliError> {
    let (problem, _) = load_problem(&a.problem)?;
    let (archive, archive_hash) = load_archive(&a.archive)?;
    archive.check_grid(&problem)?;
    let mu_star = load_oracle(&a.oracle)?;
    let ctx = problem.context()?;
    if mu_star.dim() != ctx.dim() {
        return Err(CliError::usage("oracle dimension does not match the problem"));
    }
    let sigma = a.noise_sigma.unwrap_or(problem.noise_sigma);
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CliError::usage("noise sigma must be non-negative"));
    }
    let noise_seed = a.seed.unwrap_or(problem.noise_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| CliError::usage(e.to_string()))?;
    let mut records = Vec::with_capacity(archive.fields.len());
    for (k, field) in archive.control_fields()?.iter().enumerate() {
        let phi = measure_phi(&ctx, &mu_star, field).map_err(|e| CliError::from(e).context(format!("field {}", k + 1)))?;
        let (nr, ni) = if sigma > 0.0 { (normal.sample(&mut rng), normal.sample(&mut rng)) } else { (0.0, 0.0) };
        records.push(Measurement { field_id: k, re: phi.re + nr, im: phi.im + ni });
    }
    let file = MeasurementsFile {
        format: MEASUREMENTS_FORMAT.into(),
        version: FORMAT_VERSION,
        archive_hash,
        noise_sigma: sigma,
        noise_seed,
        records,
    };
    write_json(&a.out, &file)?;
    Ok(())
}

pub fn identify_cmd(a: &IdentifyArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = ConfigFile::load(a.config.as_deref())?;
    let (problem, _) = load_problem(&a.problem)?;
    let (archive, archive_hash) = load_archive(&a.archive)?;
    archive.check_grid(&problem)?;
    let (measurements, measurements_hash): (MeasurementsFile, String) = read_json(&a.measurements)?;
    measurements.check()?;
    if measurements.archive_hash != archive_hash {
        return Err(CliError::usage("measurements were taken with a different archive"));
    }
    let mut settings = archive.settings;
    settings.apply(&cfg.settings);
    if let Some(r) = a.restarts {
        settings.restarts = r;
    }
    if let Some(s) = a.seed {
        settings.multistart_seed = s;
    }
    settings.validate()?;

    let ctx = problem.context()?;
    let set = SelectiveFieldSet {
        basis: archive.basis_operators()?,
        fields: archive.control_fields()?,
        steps: Vec::new(),
        warnings: archive.warnings.clone(),
        settings: settings.greedy(),
    };
    let records: Vec<MeasurementRecord> = measurements
        .records
        .iter()
        .map(|m| MeasurementRecord { field_id: m.field_id, value: Complex64::new(m.re, m.im) })
        .collect();
    let result = identify(&ctx, &set, &records, &settings.multistart())?;
    let (rel, gauge) = match &a.truth {
        Some(path) => {
            let mu_star = load_oracle(path)?;
            (Some(relative_error(&result.mu_hat, &mu_star)?), Some(gauge_relative_error(&ctx, &result.mu_hat, &mu_star)?))
        }
        None => (None, None),
    };
    let report = Report {
        format: REPORT_FORMAT.into(),
        version: FORMAT_VERSION,
        archive_hash,
        measurements_hash,
        alpha: result.alpha.values().to_vec(),
        mu_hat: ComplexMatrix::from_matrix(result.mu_hat.matrix()),
        residual: result.residual,
        converged: result.trace.converged,
        restart_costs: result.trace.restart_costs.clone(),
        relative_error: rel,
        gauge_relative_error: gauge,
    };
    write_json(&a.out, &report)?;
    if let Some(r) = rel {
        log::info!("relative error {r:e}");
    }
    record_time(&a.out, "identify", start)
}

pub fn export_fields(a: &ExportArgs) -> Result<(), CliError> {
    let (archive, _) = load_archive(&a.archive)?;
    let grid = archive.grid()?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut summary = String::from("k,l2_norm,final_objective\n");
    for (k, field) in archive.control_fields()?.iter().enumerate() {
        let mut table = String::from("t,epsilon\n");
        for (j, e) in field.samples().iter().enumerate() {
            writeln!(table, "{:e},{:e}", grid.time(j), e).expect("string write");
        }
        write_atomic(&a.out.join(format!("field_{}.csv", k + 1)), table.as_bytes())?;
        writeln!(summary, "{},{:e},{:e}", k + 1, field.l2_norm(), archive.summary[k].final_objective).expect("string write");
    }
    write_atomic(&a.out.join("summary.csv"), summary.as_bytes())
}

