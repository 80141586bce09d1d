//! Runs every discrete variant on the quartic test problem to a KKT
//! residual of 1e-6.
//!
//! ```sh
//! cargo run --release --example discrete_solvers [h]
//! ```

use ipalm::linalg::{norm_inf, sub};
use ipalm::problem::builtin_problem;
use ipalm::steppers::{solve, StepperConfig, Variant};

fn main() -> ipalm::Result<()> {
    let h: f64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("h must be a number"))
        .unwrap_or(0.3);
    let prog = builtin_problem("quartic_p12")?;
    let start = prog.default_start().expect("builtin has a start point").clone();
    let xstar = prog.known_optimum().expect("builtin has an optimum").x.clone();

    println!("{:<22} {:>10} {:>7} {:>10} {:>10} {:>9} {:>8}", "variant", "status", "iters", "kkt_max", "|x-x*|", "dual avg", "cg");
    for variant in Variant::ALL {
        let config = StepperConfig::new(variant, h);
        let out = solve(&prog, &start.x, &start.y, &config)?;
        let cg: usize = out.log.iter().map(|r| r.cg_iters).sum();
        println!(
            "{:<22} {:>10} {:>7} {:>10.2e} {:>10.2e} {:>9.5} {:>8}",
            variant.as_str(),
            out.status.label(),
            out.iterations,
            out.kkt.max_residual(),
            norm_inf(&sub(&out.x, &xstar)),
            (out.y[0] + 2.0 * out.y[1]) / 3.0,
            cg
        );
    }
    Ok(())
}
