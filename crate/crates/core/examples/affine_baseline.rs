//! Affine-scaling trajectory on the quartic test problem, with the
//! condition number of `AX²Aᵀ` at each decade.
//!
//! ```sh
//! cargo run --release --example affine_baseline [T_max]
//! ```

use ipalm::baseline::integrate_affine;
use ipalm::integrators::{IntegratorConfig, SampleSchedule};
use ipalm::linalg::norm_inf;
use ipalm::problem::builtin_problem;

fn main() -> ipalm::Result<()> {
    let t_max: f64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("T_max must be a number"))
        .unwrap_or(1e4);
    let prog = builtin_problem("quartic_p12")?;
    let xstar = prog.known_optimum().expect("builtin has an optimum").x.clone();
    let x0 = prog.affine_start().expect("builtin has a feasible start").to_vec();

    let decades: Vec<f64> = (1..).map(|k| 10f64.powi(k)).take_while(|t| *t <= t_max).collect();
    let config = IntegratorConfig::reference().with_samples(SampleSchedule::Times(decades));
    let log = integrate_affine(&prog, &config, &x0, t_max)?;

    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "T", "|x-x*|_inf", "|Ax-b|", "min x", "kappa");
    for s in log.samples.iter().skip(1) {
        let err: Vec<f64> = s.x.iter().zip(&xstar).map(|(a, b)| a - b).collect();
        let min = s.x.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "{:>8.0e} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}",
            s.t,
            norm_inf(&err),
            s.norm_ax_b,
            min,
            s.kappa
        );
    }
    println!(
        "status {}  steps {}  reprojections {}",
        log.status.label(),
        log.stats.accepted,
        log.reprojections
    );
    Ok(())
}
