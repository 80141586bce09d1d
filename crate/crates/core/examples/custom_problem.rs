//! Defining problems outside the built-in set: an entropy-regularised
//! objective written as closures, and a quadratic program read from JSON.
//!
//! ```sh
//! cargo run --release --example custom_problem
//! ```

use std::path::Path;

use ipalm::integrators::{integrate_adaptive, IntegratorConfig};
use ipalm::linalg::ConstraintMatrix;
use ipalm::monitors::kkt_report;
use ipalm::problem::{resolve_problem, ConvexProgram, FlowParams, Objective};
use ipalm::steppers::{solve, StepperConfig, Variant};

fn main() -> ipalm::Result<()> {
    // f(x) = Σ x_i ln x_i + ½‖x − p‖² over the simplex; Hessian diag(1/x_i) + I
    let p = [0.7, 0.2, 0.1, 0.4];
    let objective = Objective::new(
        "entropy",
        move |x: &[f64]| {
            x.iter()
                .zip(&p)
                .map(|(xi, pi)| xi * xi.ln() + 0.5 * (xi - pi) * (xi - pi))
                .sum()
        },
        move |x: &[f64], g: &mut [f64]| {
            for ((gi, xi), pi) in g.iter_mut().zip(x).zip(&p) {
                *gi = xi.ln() + 1.0 + (xi - pi);
            }
        },
    )
    .with_hessian_vector(|x: &[f64], v: &[f64], out: &mut [f64]| {
        for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
            *o = vi / xi + vi;
        }
    });
    let a = ConstraintMatrix::from_rows(&[vec![1.0; 4]])?;
    let prog = ConvexProgram::new("entropy", objective, a, vec![1.0], 4, FlowParams::default())?;

    let x0 = [0.25; 4];
    let flow = integrate_adaptive(&prog, &IntegratorConfig::default(), &x0, &[0.0], 200.0)?;
    let last = flow.last();
    println!("entropy, flow to T=200:   x = {:.6?}  kkt {:.1e}", last.x, kkt_report(&prog, &last.x, &last.y)?.max_residual());

    let out = solve(&prog, &x0, &[0.0], &StepperConfig::new(Variant::SemiImplicitFull, 1.0))?;
    println!("entropy, semi-implicit:   x = {:.6?}  kkt {:.1e} in {} iterations", out.x, out.kkt.max_residual(), out.iterations);

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/portfolio.json");
    let prog = resolve_problem(path.to_str().expect("utf-8 path"))?;
    let start = prog.default_start().expect("file gives x0").clone();
    let out = solve(&prog, &start.x, &start.y, &StepperConfig::new(Variant::PartialUpdate, 1.0))?;
    println!("{}, partial update:  x = {:.6?}  kkt {:.1e} in {} iterations", prog.name(), out.x, out.kkt.max_residual(), out.iterations);
    Ok(())
}
