//! Runs the greedy precomputation and identification on the three-level
//! test system with a shortened horizon and prints timing and error.

use std::f64::consts::PI;
use std::time::Instant;

use dipole_ident::{
    greedy_fields, identify, measure_phi, random_hermitian_basis, relative_error, GreedySettings, HermitianOperator,
    MeasurementRecord, ProblemContext, StateVector, TimeGrid,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let periods: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(400.0);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let ctx = ProblemContext::new(
        HermitianOperator::from_diagonal(&[0.01, 0.02, 0.04])?,
        StateVector::basis(3, 0)?,
        StateVector::basis(3, 2)?,
        TimeGrid::new(periods * PI, steps)?,
        1e-2,
    )?;
    let mu_star = HermitianOperator::from_real_rows(&[
        vec![2.4154, 1.9335, 1.5822],
        vec![1.9335, 1.4366, 1.5991],
        vec![1.5822, 1.5991, 1.9843],
    ])?;
    let basis = random_hermitian_basis(3, 9, seed)?;
    let settings = GreedySettings::default();

    let start = Instant::now();
    let set = greedy_fields(&ctx, &basis, &settings)?;
    println!("precompute: {:.1}s", start.elapsed().as_secs_f64());
    for (k, step) in set.steps.iter().enumerate() {
        println!(
            "k={} fit={:?} gap {:.3e} -> {:.3e} iters={} J={:.4e} |eps|={:.3e}",
            k + 1,
            step.fit.as_ref().map(|f| f.cost),
            step.initial_gap,
            step.final_gap,
            step.field_trace.iterations,
            step.field_trace.final_objective(),
            set.fields[k].l2_norm()
        );
    }
    let measurements = set
        .fields
        .iter()
        .enumerate()
        .map(|(k, f)| Ok(MeasurementRecord { field_id: k, value: measure_phi(&ctx, &mu_star, f)? }))
        .collect::<dipole_ident::Result<Vec<_>>>()?;
    let start = Instant::now();
    let result = identify(&ctx, &set, &measurements, &settings.multistart)?;
    println!("identify: {:.1}s", start.elapsed().as_secs_f64());
    println!("restart costs: {:?}", result.trace.restart_costs);
    println!("residual {:.3e}", result.residual);
    println!("relative error {:.4e}", relative_error(&result.mu_hat, &mu_star)?);
    Ok(())
}
