use std::f64::consts::PI;
use std::time::Instant;

use dipole_ident::greedy::noise_field;
use dipole_ident::*;

fn main() -> Result<()> {
    let ctx = ProblemContext::new(
        HermitianOperator::from_diagonal(&[0.01, 0.02, 0.04])?,
        StateVector::basis(3, 0)?,
        StateVector::basis(3, 2)?,
        TimeGrid::new(400.0 * PI, 4000)?,
        1e-2,
    )?;
    let basis = random_hermitian_basis(3, 9, 1)?;
    let f = noise_field(ctx.grid, 1e-2, 3)?;
    let t = Instant::now();
    for _ in 0..100 {
        measure_phi(&ctx, &basis[0], &f)?;
    }
    println!("propagate: {:.3} ms", t.elapsed().as_secs_f64() * 10.0);
    let fields = vec![f.clone(); 9];
    let targets = vec![num_complex::Complex64::new(0.1, 0.0); 9];
    let fit = MeasurementFit::new(&ctx, &basis, &fields, targets)?;
    let t = Instant::now();
    fit.gradient(&[0.1; 9])?;
    println!("gradient L=9: {:.3} ms", t.elapsed().as_secs_f64() * 1e3);
    let t = Instant::now();
    let settings = MonotonicSettings { max_iters: 10, ..Default::default() };
    let (_, trace) = discriminate(&ctx, &basis[1], &basis[0], &f, &settings)?;
    println!("10 monotonic iterations: {:.3} s, J {:?}", t.elapsed().as_secs_f64(), trace.objective_history);
    Ok(())
}
