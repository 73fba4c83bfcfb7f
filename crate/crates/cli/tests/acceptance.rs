//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line with the measured quantity before asserting.
//!
//! Run with `cargo test -p dipole-ident-cli --test acceptance -- --nocapture`
//! to see the lines; the full-grid reproduction is `#[ignore]`d.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use dipole_ident::{
    fitting_cost, fitting_gradient, propagate, random_hermitian_basis, selectivity_increment_identity,
    selectivity_j, CVector, ControlField, DipoleCoefficients, HermitianOperator, ProblemContext, StateVector,
    TimeGrid,
};
use dipole_ident_cli::formats::{FieldArchive, Report, TraceLog};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;

const MONOTONE_SLACK: f64 = 1e-10;
const IN_SPAN_SEEDS: [u64; 5] = [11, 12, 13, 14, 15];
/// Field penalty for the in-span runs. At 1e-2 the fields saturate the
/// measurement gap and the identification solve stalls in local minima; at
/// 1e3 most fields collapse to zero and the data no longer fix the dipole.
const IN_SPAN_BETA: &str = "300";

fn verdict(criterion: u32, pass: bool, detail: impl std::fmt::Display) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---- random instances -------------------------------------------------------

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_state(dim: usize, r: &mut ChaCha8Rng) -> StateVector {
    let v = CVector::from_fn(dim, |_, _| {
        Complex64::new(r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal))
    });
    let n = v.norm();
    StateVector::physical(v / Complex64::new(n, 0.0)).unwrap()
}

fn random_operator(seed: u64) -> HermitianOperator {
    random_hermitian_basis(3, 1, seed).unwrap().remove(0)
}

fn random_ctx(seed: u64, final_time: f64, steps: usize, beta: f64) -> ProblemContext {
    let mut r = rng(seed);
    let h = random_operator(seed.wrapping_mul(31).wrapping_add(7)).scaled(0.3);
    let psi0 = random_state(3, &mut r);
    let psi1 = random_state(3, &mut r);
    ProblemContext::new(h, psi0, psi1, TimeGrid::new(final_time, steps).unwrap(), beta).unwrap()
}

fn random_field(grid: TimeGrid, amplitude: f64, r: &mut ChaCha8Rng) -> ControlField {
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (r.random_range(-1.0..1.0), r.random_range(0.0..2.0), r.random_range(0.0..6.3)))
        .collect();
    let samples = (0..grid.steps())
        .map(|j| {
            let t = grid.time(j);
            let smooth: f64 = modes.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum();
            amplitude * (smooth + 0.3 * r.sample::<f64, _>(StandardNormal))
        })
        .collect();
    ControlField::new(grid, samples).unwrap()
}

// ---- pipeline through the binary ---------------------------------------------

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_dipole-ident")).args(args).output().expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

struct PipelineRun {
    dir: TempDir,
    report: Report,
    trace: TraceLog,
    archive: FieldArchive,
}

impl PipelineRun {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// generate-problem -> precompute -> measure -> identify in a fresh directory.
fn pipeline(generate: &[&str], identify_flags: &[&str]) -> PipelineRun {
    let dir = TempDir::new().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let mut args = vec!["generate-problem", "--out"];
    let problem = p("problem.json");
    args.push(&problem);
    args.extend_from_slice(generate);
    run_cli(&args);
    let (archive, oracle, meas, report) = (p("archive.json"), p("problem.oracle.json"), p("measurements.json"), p("report.json"));
    run_cli(&["precompute", &problem, "--out", &archive]);
    run_cli(&["measure", &problem, "--archive", &archive, "--oracle", &oracle, "--out", &meas]);
    let mut args = vec!["identify", &problem, "--archive", &archive, "--measurements", &meas, "--truth", &oracle, "--out", &report];
    args.extend_from_slice(identify_flags);
    run_cli(&args);
    PipelineRun {
        report: read(&dir.path().join("report.json")),
        trace: read(&dir.path().join("archive.trace.json")),
        archive: read(&dir.path().join("archive.json")),
        dir,
    }
}

fn reduced_paper_run() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let time = (400.0 * PI).to_string();
        pipeline(
            &["--paper", "--seed", "1", "--L", "9", "--steps", "4000", "--final-time", &time, "--beta", "1e-2", "--restarts", "10"],
            &[],
        )
    })
}

fn in_span_runs() -> &'static Vec<PipelineRun> {
    static RUNS: OnceLock<Vec<PipelineRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        IN_SPAN_SEEDS
            .iter()
            .map(|s| pipeline(&["--seed", &s.to_string(), "--dim", "3", "--L", "9", "--beta", IN_SPAN_BETA, "--restarts", "10"], &[]))
            .collect()
    })
}

// ---- criteria ------------------------------------------------------------------

#[test]
fn criterion_1_discrete_identity_is_exact() {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let ctx = random_ctx(seed, 20.0, 200, 0.05);
        let (mu_a, mu_b) = (random_operator(100 + seed), random_operator(200 + seed));
        let mut r = rng(300 + seed);
        let old = random_field(ctx.grid, 0.3, &mut r);
        let new = random_field(ctx.grid, 0.3, &mut r);
        let lhs = selectivity_j(&ctx, &mu_a, &mu_b, &new).unwrap() - selectivity_j(&ctx, &mu_a, &mu_b, &old).unwrap();
        let rhs = selectivity_increment_identity(&ctx, &mu_a, &mu_b, &old, &new).unwrap().total();
        worst = worst.max((lhs - rhs).abs());
    }
    verdict(1, worst <= 1e-9, format!("max identity defect {worst:e} over 20 instances (tolerance 1e-9)"));
}

#[test]
fn criterion_2_norm_is_conserved() {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let ctx = random_ctx(seed, 50.0, 500, 0.0);
        let mu = random_operator(400 + seed);
        let field = random_field(ctx.grid, 1.0, &mut rng(500 + seed));
        worst = worst.max(propagate(&ctx.h, &mu, &field, &ctx.psi0).unwrap().max_norm_deviation(1.0));
    }
    // optimized fields are the strongest drives the suite produces
    let run = reduced_paper_run();
    let basis = run.archive.basis_operators().unwrap();
    let psi0 = StateVector::basis(3, 0).unwrap();
    let h = HermitianOperator::from_diagonal(&[0.01, 0.02, 0.04]).unwrap();
    for field in run.archive.control_fields().unwrap() {
        for mu in &basis {
            worst = worst.max(propagate(&h, mu, &field, &psi0).unwrap().max_norm_deviation(1.0));
        }
    }
    verdict(2, worst <= 1e-10, format!("max norm drift {worst:e} (tolerance 1e-10)"));
}

fn smooth_field(grid: TimeGrid) -> ControlField {
    let dt = grid.dt();
    let samples = (0..grid.steps())
        .map(|j| {
            let t = (j as f64 + 0.5) * dt;
            0.4 * (0.3 * t).sin() + 0.2 * (0.11 * t + 1.0).cos()
        })
        .collect();
    ControlField::new(grid, samples).unwrap()
}

#[test]
fn criterion_3_strang_order() {
    let coarse = [400usize, 800, 1600, 3200];
    let mu = random_operator(78);
    let final_state = |steps: usize| {
        let ctx = random_ctx(77, 100.0, steps, 0.0);
        let t = propagate(&ctx.h, &mu, &smooth_field(ctx.grid), &ctx.psi0).unwrap();
        t.state_vector(t.len() - 1)
    };
    let reference = final_state(64 * coarse[coarse.len() - 1]);
    let points: Vec<(f64, f64)> =
        coarse.iter().map(|&m| ((100.0 / m as f64).ln(), (final_state(m) - &reference).norm().ln())).collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    verdict(3, (1.8..=2.2).contains(&slope), format!("convergence slope {slope:.4} (band [1.8, 2.2])"));
}

#[test]
fn criterion_4_fitting_gradient() {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, &k) in [2usize, 3, 5].iter().cycle().take(20).enumerate() {
        let seed = i as u64;
        let ctx = random_ctx(seed, 20.0, 200, 0.0);
        let basis = random_hermitian_basis(3, k, 900 + seed).unwrap();
        let mut r = rng(1000 + seed);
        let fields: Vec<ControlField> = (0..k - 1).map(|_| random_field(ctx.grid, 0.5, &mut r)).collect();
        let alpha: Vec<f64> = (0..k - 1).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let cost = |a: Vec<f64>| fitting_cost(&ctx, &basis, k - 1, &DipoleCoefficients::new(a).unwrap(), &fields).unwrap();
        let grad = fitting_gradient(&ctx, &basis, k - 1, &DipoleCoefficients::new(alpha.clone()).unwrap(), &fields).unwrap();
        let mut diff = 0.0;
        let mut norm = 0.0;
        for j in 0..alpha.len() {
            let (mut up, mut down) = (alpha.clone(), alpha.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (cost(up) - cost(down)) / (2.0 * h);
            diff += (grad[j] - fd).powi(2);
            norm += fd * fd;
        }
        worst = worst.max((diff / norm).sqrt());
    }
    verdict(4, worst <= 1e-6, format!("max gradient relative error {worst:e} over 20 instances (tolerance 1e-6)"));
}

#[test]
fn criterion_5_objective_histories_never_decrease() {
    let mut traces: Vec<(String, &TraceLog)> = vec![("reduced paper".into(), &reduced_paper_run().trace)];
    for (s, run) in IN_SPAN_SEEDS.iter().zip(in_span_runs()) {
        traces.push((format!("seed {s}"), &run.trace));
    }
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut min_step_term = f64::INFINITY;
    for (label, trace) in &traces {
        for step in &trace.steps {
            runs += 1;
            for w in step.objective_history.windows(2) {
                worst = worst.max(w[0] - w[1]);
            }
            if let Some(m) = step.min_step_term {
                min_step_term = min_step_term.min(m);
            }
            assert!(!step.objective_history.is_empty(), "{label}: empty history at k = {}", step.k);
        }
    }
    verdict(
        5,
        worst <= MONOTONE_SLACK,
        format!("{runs} field optimizations, largest decrease {worst:e} (slack 1e-10), smallest step term {min_step_term:e}"),
    );
}

fn pipeline_summary(run: &PipelineRun) -> String {
    format!(
        "relative error {:.4e}, gauge-reduced {:.4e}, residual {:.3e}",
        run.report.relative_error.unwrap(),
        run.report.gauge_relative_error.unwrap(),
        run.report.residual
    )
}

#[test]
fn criterion_6_reduced_paper_reproduction() {
    let run = reduced_paper_run();
    let rel = run.report.relative_error.expect("truth supplied");
    verdict(6, rel <= 1e-2, format!("reduced grid (T = 400 pi, M = 4000): {} (tolerance 1e-2)", pipeline_summary(run)));
}

#[test]
#[ignore = "full grid, about an hour on one core"]
fn criterion_6_full_paper_reproduction() {
    let run = pipeline(&["--paper", "--seed", "1", "--L", "9", "--beta", "1e-2", "--restarts", "10"], &[]);
    let rel = run.report.relative_error.expect("truth supplied");
    verdict(6, rel <= 1e-2, format!("full grid (T = 4000 pi, M = 40000): {} (tolerance 1e-2)", pipeline_summary(&run)));
}

#[test]
fn criterion_7_in_span_round_trip() {
    let runs = in_span_runs();
    let mut passed = 0;
    for (s, run) in IN_SPAN_SEEDS.iter().zip(runs) {
        let rel = run.report.relative_error.expect("truth supplied");
        if rel <= 1e-2 {
            passed += 1;
        }
        println!("  seed {s}: {}", pipeline_summary(run));
    }
    verdict(7, passed >= 4, format!("{passed} of {} seeds within 1e-2 (need 4)", runs.len()));
}

#[test]
fn criterion_8_pipeline_is_byte_identical() {
    let generate = ["--seed", "3", "--L", "3", "--steps", "600", "--final-time", "60", "--noise-sigma", "1e-3", "--restarts", "3"];
    let a = pipeline(&generate, &[]);
    let b = pipeline(&generate, &[]);
    let files = ["problem.json", "problem.oracle.json", "archive.json", "archive.trace.json", "measurements.json", "report.json"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path(f)).unwrap() != std::fs::read(b.path(f)).unwrap())
        .collect();
    verdict(
        8,
        differing.is_empty(),
        if differing.is_empty() { format!("{} output files identical across two runs", files.len()) } else { format!("differing files {differing:?}") },
    );
}
