//! Multistart BFGS for small least-squares problems.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::OptimizerTrace;
use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Longest step a single line search may try.
const MAX_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultistartSettings {
    pub restarts: usize,
    /// Standard deviation of the Gaussian starting points.
    pub init_scale: f64,
    /// Gradient norm at which a run is declared converged.
    pub convergence_tol: f64,
    /// Budget of cost plus gradient evaluations per restart.
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for MultistartSettings {
    fn default() -> Self {
        Self {
            restarts: 10,
            init_scale: 1.0,
            convergence_tol: 1e-10,
            max_evals: 600,
            seed: 0,
        }
    }
}

impl MultistartSettings {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidSettings("restarts must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidSettings("init_scale must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidSettings("convergence_tol must be positive".into()));
        }
        if self.max_evals < 2 {
            return Err(Error::InvalidSettings("max_evals must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Run {
    x: Vec<f64>,
    cost: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn bfgs<C, G>(cost: &C, gradient: &G, start: Vec<f64>, tol: f64, max_evals: usize) -> Result<Run>
where
    C: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = start.len();
    let mut x = DVector::from_vec(start);
    let mut f = cost(x.as_slice())?;
    let mut g = DVector::from_vec(gradient(x.as_slice())?);
    let mut evals = 2;
    let mut inv_hessian = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    while evals < max_evals {
        if g.norm() <= tol || f == 0.0 {
            converged = true;
            break;
        }
        let mut direction = -(&inv_hessian * &g);
        if direction.dot(&g) >= 0.0 {
            inv_hessian.fill_with_identity();
            fresh = true;
            direction = -g.clone();
        }
        let length = direction.norm();
        if length > MAX_STEP {
            direction *= MAX_STEP / length;
        }
        let slope = direction.dot(&g);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if evals >= max_evals {
                break;
            }
            let trial = &x + &direction * step;
            let ft = cost(trial.as_slice())?;
            evals += 1;
            if ft.is_finite() && ft <= f + ARMIJO * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            inv_hessian.fill_with_identity();
            fresh = true;
            continue;
        };
        let g_new = DVector::from_vec(gradient(x_new.as_slice())?);
        evals += 1;
        iterations += 1;

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                inv_hessian *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &inv_hessian * &y;
            let yhy = y.dot(&hy);
            inv_hessian += (&s * s.transpose()) * (rho * (1.0 + rho * yhy))
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
    }
    if !converged && (g.norm() <= tol || f == 0.0) {
        converged = true;
    }
    Ok(Run { x: x.as_slice().to_vec(), cost: f, history, iterations, converged })
}

/// Best local minimum over `settings.restarts` BFGS runs from Gaussian
/// random starts.
///
/// Starting points are drawn sequentially from `settings.seed`, restarts run
/// in parallel, and ties are broken by restart index, so the result is
/// deterministic. The returned trace carries the best run's cost history and
/// the final cost of every restart.
pub fn multistart_lsq<C, G>(
    cost: C,
    gradient: G,
    dim: usize,
    settings: &MultistartSettings,
) -> Result<(Vec<f64>, OptimizerTrace)>
where
    C: Fn(&[f64]) -> Result<f64> + Sync,
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    settings.validate()?;
    if dim == 0 {
        return Err(Error::InvalidSettings("problem dimension must be at least 1".into()));
    }
    let normal = Normal::new(0.0, settings.init_scale)
        .map_err(|e| Error::InvalidSettings(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let starts: Vec<Vec<f64>> = (0..settings.restarts)
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();

    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|x0| bfgs(&cost, &gradient, x0, settings.convergence_tol, settings.max_evals))
        .collect::<Result<_>>()?;

    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.cost.total_cmp(&b.cost).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    log::debug!(
        "multistart: best cost {:.3e} (restart {best}), costs {:?}",
        runs[best].cost,
        runs.iter().map(|r| r.cost).collect::<Vec<_>>()
    );
    let trace = OptimizerTrace {
        objective_history: runs[best].history.clone(),
        iterations: runs[best].iterations,
        converged: runs[best].converged,
        min_step_term: None,
        restart_costs: runs.iter().map(|r| r.cost).collect(),
    };
    Ok((runs[best].x.clone(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic_recovered() {
        let target = [0.3, -1.2, 2.0];
        let cost = |x: &[f64]| Ok(x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum());
        let grad = |x: &[f64]| Ok(x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect());
        let (x, trace) = multistart_lsq(cost, grad, 3, &MultistartSettings::default()).unwrap();
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(trace.converged);
        assert_eq!(trace.restart_costs.len(), 10);
    }

    #[test]
    fn rosenbrock_minimized() {
        let cost = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let grad = |x: &[f64]| {
            Ok(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        };
        let settings = MultistartSettings { restarts: 3, max_evals: 5000, ..Default::default() };
        let (x, _) = multistart_lsq(cost, grad, 2, &settings).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_per_seed() {
        let cost = |x: &[f64]| Ok((x[0] * x[0] - 1.0).powi(2) + x[1].powi(2));
        let grad = |x: &[f64]| Ok(vec![4.0 * x[0] * (x[0] * x[0] - 1.0), 2.0 * x[1]]);
        let s = MultistartSettings { seed: 17, ..Default::default() };
        let a = multistart_lsq(cost, grad, 2, &s).unwrap();
        let b = multistart_lsq(cost, grad, 2, &s).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn validation() {
        let cost = |_: &[f64]| Ok(0.0);
        let grad = |_: &[f64]| Ok(vec![0.0]);
        let bad = MultistartSettings { restarts: 0, ..Default::default() };
        assert!(multistart_lsq(cost, grad, 1, &bad).is_err());
        assert!(multistart_lsq(cost, grad, 0, &MultistartSettings::default()).is_err());
    }
}
