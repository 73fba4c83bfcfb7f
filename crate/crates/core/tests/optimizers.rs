mod common;

use common::{random_ctx, random_field, random_operator, rng, three_level_ctx};
use dipole_ident::{
    discriminate, fit_alpha, maximize_transfer, measure_phi, multistart_lsq, ControlField, HermitianOperator,
    MonotonicSettings, MultistartSettings, UpdateRule,
};

fn settings(rule: UpdateRule, iters: usize) -> MonotonicSettings {
    MonotonicSettings { max_iters: iters, update_rule: rule, ..MonotonicSettings::default() }
}

#[test]
fn monotonic_runs_never_decrease_and_every_step_gains() {
    for seed in 0..6 {
        let ctx = random_ctx(seed, 30.0, 300, 1e-2);
        let mu_a = random_operator(3, 40 + seed);
        let mu_b = random_operator(3, 50 + seed);
        let init = random_field(ctx.grid, 0.05, &mut rng(60 + seed));
        for rule in [UpdateRule::NewtonStep, UpdateRule::ThetaImplicit] {
            let (_, trace) = discriminate(&ctx, &mu_a, &mu_b, &init, &settings(rule, 30)).unwrap();
            assert!(trace.is_monotone(1e-10), "seed {seed} {rule:?}: {:?}", trace.objective_history);
            assert!(trace.min_step_term.unwrap() >= -1e-12);
        }
    }
}

#[test]
fn discrimination_amplifies_the_measurement_gap() {
    for seed in 0..5 {
        let ctx = three_level_ctx(200.0, 400);
        let mu_a = random_operator(3, 70 + seed);
        let mu_b = random_operator(3, 80 + seed);
        let init = random_field(ctx.grid, 1e-3, &mut rng(90 + seed));
        let gap = |f: &ControlField| {
            (measure_phi(&ctx, &mu_a, f).unwrap() - measure_phi(&ctx, &mu_b, f).unwrap()).norm()
        };
        let (field, trace) = discriminate(&ctx, &mu_a, &mu_b, &init, &settings(UpdateRule::NewtonStep, 50)).unwrap();
        assert!(trace.is_monotone(1e-10));
        assert!(gap(&field) > 10.0 * gap(&init), "seed {seed}: {} vs {}", gap(&field), gap(&init));
    }
}

#[test]
fn identical_operators_shrink_the_field() {
    let ctx = random_ctx(3, 20.0, 200, 1e-2);
    let mu = random_operator(3, 4);
    let init = random_field(ctx.grid, 0.2, &mut rng(5));
    let (field, trace) = discriminate(&ctx, &mu, &mu, &init, &settings(UpdateRule::NewtonStep, 5)).unwrap();
    assert!(trace.is_monotone(1e-10));
    assert!(field.l2_norm() < 1e-3 * init.l2_norm(), "{}", field.l2_norm());
}

#[test]
fn transfer_improves_on_three_level_system() {
    let ctx = three_level_ctx(200.0, 400);
    let mu = random_operator(3, 12);
    let init = random_field(ctx.grid, 1e-3, &mut rng(13));
    let (field, trace) = maximize_transfer(&ctx, &mu, &init, &settings(UpdateRule::NewtonStep, 40)).unwrap();
    assert!(trace.is_monotone(1e-10));
    let yield_of = |f: &ControlField| measure_phi(&ctx, &mu, f).unwrap().norm_sqr();
    assert!(yield_of(&field) > yield_of(&init));
    assert!(yield_of(&field) > 0.5);
}

#[test]
fn uncoupled_system_has_nothing_to_transfer() {
    let ctx = three_level_ctx(100.0, 200);
    let zero = HermitianOperator::zeros(3);
    let init = random_field(ctx.grid, 0.1, &mut rng(14));
    let (field, trace) = maximize_transfer(&ctx, &zero, &init, &settings(UpdateRule::NewtonStep, 5)).unwrap();
    assert!(trace.is_monotone(1e-10));
    assert!(field.l2_norm() < init.l2_norm());
    assert_eq!(measure_phi(&ctx, &zero, &field).unwrap().norm(), 0.0);
}

/// Basis element 3 is an exact combination of elements 1 and 2, so the
/// fitting problem has a zero-residual solution.
fn solvable_instance(scale: f64) -> (dipole_ident::ProblemContext, Vec<HermitianOperator>, Vec<ControlField>) {
    let ctx = three_level_ctx(60.0, 300);
    let a = random_operator(3, 21);
    let b = random_operator(3, 22);
    let c = HermitianOperator::combination(&[0.7, -0.4], &[a.clone(), b.clone()]).unwrap();
    let mut r = rng(23);
    let fields = (0..2).map(|_| random_field(ctx.grid, 0.05, &mut r)).collect();
    (ctx, vec![a.scaled(scale), b, c], fields)
}

#[test]
fn multistart_solves_a_solvable_fitting_problem() {
    let (ctx, basis, fields) = solvable_instance(1.0);
    let outcome = fit_alpha(&ctx, &basis, 2, &fields, &MultistartSettings::default()).unwrap();
    assert!(outcome.cost <= 1e-12, "cost {}", outcome.cost);
    let solved = outcome.trace.restart_costs.iter().filter(|&&c| c <= 1e-10).count();
    assert!(solved >= 9, "restart costs {:?}", outcome.trace.restart_costs);
    assert!((outcome.alpha.values()[0] - 0.7).abs() < 1e-6);
    assert!((outcome.alpha.values()[1] + 0.4).abs() < 1e-6);
}

#[test]
fn rescaling_a_basis_element_rescales_its_coefficient() {
    let c = 2.5;
    let (ctx, basis, fields) = solvable_instance(c);
    let outcome = fit_alpha(&ctx, &basis, 2, &fields, &MultistartSettings::default()).unwrap();
    assert!(outcome.cost <= 1e-12);
    assert!((outcome.alpha.values()[0] - 0.7 / c).abs() < 1e-6, "{:?}", outcome.alpha.values());
}

#[test]
fn multistart_is_deterministic_and_handles_quadratics() {
    let target = [1.5, -2.0, 0.25];
    let cost = |x: &[f64]| Ok(x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum());
    let grad = |x: &[f64]| Ok(x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect());
    let s = MultistartSettings { seed: 9, ..MultistartSettings::default() };
    let (x, trace) = multistart_lsq(cost, grad, 3, &s).unwrap();
    assert!(x.iter().zip(&target).all(|(a, b)| (a - b).abs() < 1e-8));
    let (y, again) = multistart_lsq(cost, grad, 3, &s).unwrap();
    assert_eq!(x, y);
    assert_eq!(trace, again);
}
