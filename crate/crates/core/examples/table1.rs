//! Comparison table of the solution path and the affine-scaling path on
//! the quartic test problem, written to stdout and `table1.csv`.
//!
//! ```sh
//! cargo run --release --example table1 [--long]
//! ```

use std::fs::File;
use std::io::BufWriter;

use ipalm::harness::{cmd_table1, table1_horizons, thread_count};
use ipalm::integrators::IntegratorConfig;

fn main() -> ipalm::Result<()> {
    let long = std::env::args().any(|a| a == "--long");
    let table = cmd_table1(&table1_horizons(long), &IntegratorConfig::reference(), thread_count())?;
    print!("{}", table.render());
    table.write_csv(BufWriter::new(File::create("table1.csv")?))?;
    Ok(())
}
