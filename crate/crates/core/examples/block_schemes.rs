//! Single sweeps of the block Gauss–Seidel and partially updated schemes,
//! compared with the one-block explicit and semi-implicit steps.
//!
//! ```sh
//! cargo run --release --example block_schemes
//! ```

use ipalm::integrators::step_explicit_euler;
use ipalm::monitors::augmented_lagrangian;
use ipalm::problem::{builtin_problem, TrajectoryState};
use ipalm::steppers::{
    gauss_seidel_sweep, partial_update_sweep, BlockPartition, StepperConfig, Variant, WeightVector,
};

fn main() -> ipalm::Result<()> {
    let prog = builtin_problem("quartic_p12")?;
    let start = prog.default_start().expect("builtin has a start point").clone();
    let (x, y) = (&start.x, &start.y);
    let h = 0.05;
    let phi = |v: &[f64]| augmented_lagrangian(&prog, v, y);
    let ones = WeightVector::ones(3);

    let euler = step_explicit_euler(&prog, &TrajectoryState::new(0.0, x.clone(), y.clone()), h, 0.99)?;
    println!("start                 x = {x:.6?}  phi = {:.6}", phi(x)?);
    println!("explicit step         x = {:.6?}  phi = {:.6}", euler.x, phi(&euler.x)?);

    let partitions = [
        ("one block", BlockPartition::whole(3)),
        ("{1,2} {3}", BlockPartition::new(vec![vec![0, 1], vec![2]])?),
        ("singletons", BlockPartition::singletons(3)),
    ];
    for (label, partition) in &partitions {
        let sweep = gauss_seidel_sweep(&prog, x, y, partition, &ones, h, 0.99)?;
        println!("gauss-seidel {label:<9} x = {:.6?}  phi = {:.6}", sweep.x, phi(&sweep.x)?);
    }

    let weights = WeightVector::new(vec![2.0, 2.0, 0.5])?;
    let sweep = gauss_seidel_sweep(&prog, x, y, &BlockPartition::singletons(3), &weights, h, 0.99)?;
    println!("weighted singletons   x = {:.6?}  phi = {:.6}", sweep.x, phi(&sweep.x)?);

    let config = StepperConfig::new(Variant::PartialUpdate, 1.0);
    for (label, partition) in &partitions {
        let sweep = partial_update_sweep(&prog, x, y, partition, config.h, &config)?;
        println!(
            "partial {label:<14} x = {:.6?}  phi = {:.6}  steps {:.3?}  cg {}",
            sweep.x,
            phi(&sweep.x)?,
            sweep.steps,
            sweep.cg_iterations
        );
    }
    Ok(())
}
