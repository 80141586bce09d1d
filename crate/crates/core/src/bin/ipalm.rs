use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ipalm::harness::{
    cmd_plotdata, cmd_run, cmd_table1, table1_horizons, thread_count, Method, RunConfig,
};
use ipalm::integrators::IntegratorConfig;
use ipalm::Error;

#[derive(Parser)]
#[command(name = "ipalm", version, about = "Interior-point augmented Lagrangian trajectories and solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Integrate a trajectory or run a discrete solver; writes a log and `<out>.summary.json`.
    Run(RunArgs),
    /// Solution path versus affine-scaling path on quartic_p12 at decade horizons.
    Table1 {
        /// CSV destination; the text table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also report T = 1e7..1e9 (long runtime).
        #[arg(long)]
        long: bool,
    },
    /// Split a trajectory CSV into per-coordinate series.
    Plotdata {
        /// Trajectory CSV written by `run`.
        #[arg(long)]
        log: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Problem the log belongs to; `quartic_p12` adds the (y1+2y2)/3 series.
        #[arg(long, default_value = "quartic_p12")]
        problem: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in name or problem file.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(Method::NAMES))]
    method: Option<String>,
    /// Horizon for flow and affine.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Iteration cap for the discrete methods.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Direction parameter for the discrete methods.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Comma-separated start point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new("quartic_p12", Method::Flow, "run.csv"),
        };
        if let Some(p) = self.problem {
            cfg.problem = p;
        }
        if let Some(m) = self.method {
            cfg.method = m.parse()?;
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if let Some(k) = self.max_iters {
            cfg.max_iters = Some(k);
        }
        if let Some(h) = self.h {
            cfg.stepper.h = h;
        }
        cfg.gamma = self.gamma.or(cfg.gamma);
        cfg.sigma1 = self.sigma1.or(cfg.sigma1);
        cfg.sigma2 = self.sigma2.or(cfg.sigma2);
        cfg.x0 = self.x0.or(cfg.x0);
        cfg.y0 = self.y0.or(cfg.y0);
        if let Some(f) = self.format {
            cfg.format = f.parse()?;
        }
        if let Some(out) = self.out {
            cfg.out = out;
        } else if self.config.is_none() {
            cfg.out = PathBuf::from(format!("run.{}", cfg.format.extension()));
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let summary = cmd_run(&cfg)?;
            println!(
                "{} on {}: {} (kkt_max {:e}); log {}, summary {}",
                summary.method,
                summary.problem,
                summary.status,
                summary.final_kkt_max,
                cfg.out.display(),
                cfg.summary_path().display()
            );
        }
        Command::Table1 { out, long } => {
            let table = cmd_table1(&table1_horizons(long), &IntegratorConfig::reference(), thread_count())?;
            print!("{}", table.render());
            if let Some(path) = out {
                table.write_csv(BufWriter::new(File::create(&path)?))?;
            }
        }
        Command::Plotdata { log, out, problem } => {
            let data = cmd_plotdata(&log, &out, &problem)?;
            println!("{} samples, {} series in {}", data.samples, data.files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Lookup { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
