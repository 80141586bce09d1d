//! Tracks the potential V₁, the augmented Lagrangian and the KKT residual
//! along the flow.
//!
//! ```sh
//! cargo run --release --example lyapunov_monitor [problem]
//! ```

use ipalm::integrators::{integrate_adaptive, IntegratorConfig, SampleSchedule};
use ipalm::monitors::{kkt_report, lyapunov_derivative, lyapunov_value};
use ipalm::problem::builtin_problem;

fn main() -> ipalm::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "quartic_p12".into());
    let prog = builtin_problem(&name)?;
    let start = prog.default_start().expect("builtin has a start point").clone();
    let opt = prog.known_optimum().expect("builtin has an optimum").clone();

    let times: Vec<f64> = (0..=40).map(|k| 10f64.powf(-1.0 + k as f64 / 10.0)).collect();
    let config = IntegratorConfig::reference().with_samples(SampleSchedule::Times(times));
    let mut log = integrate_adaptive(&prog, &config, &start.x, &start.y, 1e3)?;
    log.attach_monitors(&prog)?;

    println!("{:>9} {:>12} {:>12} {:>12} {:>10}", "t", "V1", "dV1/dt", "Ltilde", "kkt_max");
    for s in log.samples.iter().step_by(4) {
        let v = lyapunov_value(&prog, &s.x, &s.y, &opt)?;
        let dv = lyapunov_derivative(&prog, &s.x, &s.y, &opt.x, &opt.y)?;
        let mv = s.monitors.expect("monitors attached");
        println!(
            "{:>9.3e} {:>12.5e} {:>12.4e} {:>12.6} {:>10.2e}",
            s.t,
            v,
            dv,
            mv.ltilde,
            kkt_report(&prog, &s.x, &s.y)?.max_residual()
        );
    }
    let increases = log
        .samples
        .windows(2)
        .filter(|w| w[1].monitors.unwrap().v1 > w[0].monitors.unwrap().v1)
        .count();
    println!("samples {}, V1 increases {increases}", log.samples.len());
    Ok(())
}
