#![allow(dead_code)]

use dipole_ident::{
    random_hermitian_basis, CVector, ControlField, HermitianOperator, ProblemContext, StateVector, TimeGrid,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> StateVector {
    let v = CVector::from_fn(dim, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let n = v.norm();
    StateVector::physical(v / Complex64::new(n, 0.0)).unwrap()
}

pub fn random_operator(dim: usize, seed: u64) -> HermitianOperator {
    random_hermitian_basis(dim, 1, seed).unwrap().remove(0)
}

/// Sum of a few random sinusoids plus white noise, sampled per step.
pub fn random_field(grid: TimeGrid, amplitude: f64, rng: &mut ChaCha8Rng) -> ControlField {
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0), rng.random_range(0.0..6.3)))
        .collect();
    let samples = (0..grid.steps())
        .map(|j| {
            let t = grid.time(j);
            let smooth: f64 = modes.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum();
            amplitude * (smooth + 0.3 * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    ControlField::new(grid, samples).unwrap()
}

/// Random `N = 3` problem with a non-degenerate random `H`.
pub fn random_ctx(seed: u64, final_time: f64, steps: usize, beta: f64) -> ProblemContext {
    let mut r = rng(seed);
    let h = random_operator(3, seed.wrapping_mul(31).wrapping_add(7)).scaled(0.3);
    let psi0 = random_state(3, &mut r);
    let psi1 = random_state(3, &mut r);
    ProblemContext::new(h, psi0, psi1, TimeGrid::new(final_time, steps).unwrap(), beta).unwrap()
}

/// The three-level test system: `H = 1e-2 diag(1, 2, 4)`, `e1 -> e3`.
pub fn three_level_ctx(final_time: f64, steps: usize) -> ProblemContext {
    ProblemContext::new(
        HermitianOperator::from_diagonal(&[0.01, 0.02, 0.04]).unwrap(),
        StateVector::basis(3, 0).unwrap(),
        StateVector::basis(3, 2).unwrap(),
        TimeGrid::new(final_time, steps).unwrap(),
        1e-2,
    )
    .unwrap()
}

pub fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
