//! Integrates the interior-point augmented Lagrangian flow on the quartic
//! test problem and prints the distance to the optimum at decade horizons.
//!
//! ```sh
//! cargo run --release --example quartic_flow
//! ```

use ipalm::integrators::{integrate_adaptive, IntegratorConfig, SampleSchedule};
use ipalm::linalg::{norm2, norm_inf, sub};
use ipalm::problem::builtin_problem;

fn main() -> Result<(), ipalm::Error> {
    let prog = builtin_problem("quartic_p12")?;
    let start = prog.default_start().expect("builtin has a start point").clone();
    let xstar = prog.known_optimum().expect("builtin has an optimum").x.clone();

    let decades: Vec<f64> = (1..=4).map(|k| 10f64.powi(k)).collect();
    let config = IntegratorConfig::reference().with_samples(SampleSchedule::Times(decades.clone()));
    let log = integrate_adaptive(&prog, &config, &start.x, &start.y, 1e4)?;

    println!("{:>8} {:>12} {:>12} {:>12} {:>10}", "T", "|x-x*|inf", "|Ax-b|", "min x", "(y1+2y2)/3");
    for s in log.samples.iter().skip(1) {
        let r = prog.constraint_residual(&s.x)?;
        let min_x = s.x.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:>8.0e} {:>12.2e} {:>12.2e} {:>12.2e} {:>10.6}",
            s.t,
            norm_inf(&sub(&s.x, &xstar)),
            norm2(&r),
            min_x,
            (s.y[0] + 2.0 * s.y[1]) / 3.0
        );
    }
    println!("status: {}, {:?}", log.status.label(), log.stats);
    Ok(())
}
