//! Run configurations, the comparison table and plot-ready series.
//!
//! These back the `ipalm` binary; every entry point is also usable from code.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{affine_multiplier, integrate_affine};
use crate::error::{Error, Result};
use crate::integrators::{integrate_adaptive, IntegratorConfig, SampleSchedule};
use crate::linalg::{norm2, norm_inf, sub};
use crate::monitors::{kkt_report, KktReport};
use crate::problem::{resolve_problem, ConvexProgram, FlowParams};
use crate::steppers::{solve, StepperConfig, Variant};

pub const RUN_SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "IPALM_THREADS";

/// Worker threads from [`THREADS_ENV`], else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Flow,
    Affine,
    Stepper(Variant),
}

impl Method {
    pub const NAMES: [&'static str; 7] = [
        "flow",
        "affine",
        "explicit",
        "semi_implicit_hessian",
        "semi_implicit_full",
        "gauss_seidel",
        "partial_update",
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Flow => "flow",
            Method::Affine => "affine",
            Method::Stepper(v) => v.as_str(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(Method::Flow),
            "affine" => Ok(Method::Affine),
            _ => s.parse::<Variant>().map(Method::Stepper).map_err(|_| Error::Lookup {
                kind: "method",
                name: s.to_string(),
                available: Method::NAMES.to_vec(),
            }),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.as_str().to_string()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown output format `{s}` (csv or json)"))),
        }
    }
}

fn default_schema() -> u32 {
    RUN_SCHEMA_VERSION
}

fn default_horizon() -> f64 {
    100.0
}

/// A single run, from the command line or a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Built-in name or path to a problem file.
    pub problem: String,
    pub method: Method,
    /// Horizon for `flow` and `affine`.
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    /// Iteration cap for the discrete methods; overrides `stepper.max_iters`.
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub sigma1: Option<f64>,
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    /// Seeds the random start used when neither `x0` nor a problem default exists.
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Discrete-method settings; `variant` is taken from `method`.
    #[serde(default)]
    pub stepper: StepperConfig,
}

impl RunConfig {
    pub fn new(problem: impl Into<String>, method: Method, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            schema_version: RUN_SCHEMA_VERSION,
            problem: problem.into(),
            method,
            horizon: default_horizon(),
            max_iters: None,
            gamma: None,
            sigma1: None,
            sigma2: None,
            x0: None,
            y0: None,
            seed: 0,
            out: out.into(),
            format: OutputFormat::Csv,
            integrator: IntegratorConfig::default(),
            stepper: StepperConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema_version != RUN_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported run schema_version {} (expected {RUN_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Path of the summary written next to the log.
    pub fn summary_path(&self) -> PathBuf {
        let mut p = self.out.clone().into_os_string();
        p.push(".summary.json");
        PathBuf::from(p)
    }

    /// Resolves the problem with parameter overlays and picks the start point.
    pub fn prepare(&self) -> Result<PreparedRun> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("T must be finite and nonnegative, got {}", self.horizon)));
        }
        let mut prog = resolve_problem(&self.problem)?;
        if self.gamma.is_some() || self.sigma1.is_some() || self.sigma2.is_some() {
            let base = prog.params();
            let params = FlowParams {
                gamma: self.gamma.unwrap_or(base.gamma),
                sigma1: self.sigma1.unwrap_or(base.sigma1),
                sigma2: self.sigma2.unwrap_or(base.sigma2),
                ..base
            };
            prog = prog.with_params(params)?;
        }
        let (x0, y0) = match self.method {
            Method::Affine => {
                let x0 = match (&self.x0, prog.affine_start()) {
                    (Some(x), _) => x.clone(),
                    (None, Some(x)) => x.to_vec(),
                    (None, None) => {
                        return Err(Error::Precondition(
                            "affine runs need a strictly feasible x0 (--x0) for this problem".into(),
                        ))
                    }
                };
                (x0, Vec::new())
            }
            _ => {
                let default = prog.default_start();
                let x0 = match (&self.x0, default) {
                    (Some(x), _) => x.clone(),
                    (None, Some(d)) => d.x.clone(),
                    (None, None) => random_start(prog.n(), self.seed),
                };
                let y0 = match (&self.y0, default) {
                    (Some(y), _) => y.clone(),
                    (None, Some(d)) if self.x0.is_none() => d.y.clone(),
                    _ => vec![0.0; prog.m()],
                };
                (x0, y0)
            }
        };
        check_len("x0", prog.n(), x0.len())?;
        if self.method != Method::Affine {
            check_len("y0", prog.m(), y0.len())?;
        }
        if let Some(i) = (0..prog.s()).find(|&i| !(x0[i] > 0.0)) {
            return Err(Error::Precondition(format!("x0[{i}] = {} is not strictly positive", x0[i])));
        }
        if self.method == Method::Affine {
            if prog.s() != prog.n() {
                return Err(Error::Precondition("affine runs need every coordinate sign-constrained".into()));
            }
            let drift = norm2(&prog.constraint_residual(&x0)?);
            if drift > 1e-10 * (1.0 + norm2(prog.rhs())) {
                return Err(Error::Precondition(format!("affine x0 is infeasible: ‖Ax0 − b‖ = {drift:e}")));
            }
        }
        Ok(PreparedRun { prog, x0, y0 })
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// Uniform start in `[0.5, 1.5)ⁿ`.
pub fn random_start(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
}

#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub prog: ConvexProgram,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

/// Written to `<out>.summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub problem: String,
    pub method: Method,
    pub status: String,
    /// Final time for `flow`/`affine`.
    pub t_final: Option<f64>,
    /// Iterations for the discrete methods.
    pub iterations: Option<usize>,
    pub x: Vec<f64>,
    /// For `affine`, the multiplier estimate implied by the projection.
    pub y: Vec<f64>,
    pub kkt: KktReport,
    pub final_kkt_max: f64,
    pub wall_time_s: f64,
    pub seed: u64,
    pub threads: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs one configuration, writing the log to `config.out` and the summary
/// next to it.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary> {
    let PreparedRun { prog, x0, y0 } = config.prepare()?;
    let started = Instant::now();
    let (status, t_final, iterations, x, y) = match config.method {
        Method::Flow => {
            let mut log = integrate_adaptive(&prog, &config.integrator, &x0, &y0, config.horizon)?;
            log.attach_monitors(&prog)?;
            match config.format {
                OutputFormat::Csv => log.write_csv(create(&config.out)?)?,
                OutputFormat::Json => write_json(&config.out, &log)?,
            }
            let last = log.last().clone();
            (log.status.label().to_string(), Some(last.t), None, last.x, last.y)
        }
        Method::Affine => {
            let log = integrate_affine(&prog, &config.integrator, &x0, config.horizon)?;
            match config.format {
                OutputFormat::Csv => log.write_csv(create(&config.out)?)?,
                OutputFormat::Json => write_json(&config.out, &log)?,
            }
            let last = log.last().clone();
            let y = affine_multiplier(&prog, &last.x).unwrap_or_else(|_| vec![f64::NAN; prog.m()]);
            (log.status.label().to_string(), Some(last.t), None, last.x, y)
        }
        Method::Stepper(variant) => {
            let mut stepper = config.stepper.clone();
            stepper.variant = variant;
            if let Some(k) = config.max_iters {
                stepper.max_iters = k;
            }
            let out = solve(&prog, &x0, &y0, &stepper)?;
            match config.format {
                OutputFormat::Csv => out.write_csv(create(&config.out)?)?,
                OutputFormat::Json => write_json(&config.out, &out)?,
            }
            (out.status.label().to_string(), None, Some(out.iterations), out.x, out.y)
        }
    };
    let wall_time_s = started.elapsed().as_secs_f64();
    let kkt = if y.iter().all(|v| v.is_finite()) {
        kkt_report(&prog, &x, &y)?
    } else {
        nan_report()
    };
    let summary = RunSummary {
        schema_version: RUN_SCHEMA_VERSION,
        problem: prog.name().to_string(),
        method: config.method,
        status,
        t_final,
        iterations,
        final_kkt_max: kkt.max_residual(),
        kkt,
        x,
        y,
        wall_time_s,
        seed: config.seed,
        threads: thread_count(),
    };
    write_json(&config.summary_path(), &summary)?;
    Ok(summary)
}

fn nan_report() -> KktReport {
    KktReport {
        primal_feasibility: f64::NAN,
        nonneg_violation: f64::NAN,
        dual_feasibility: f64::NAN,
        complementarity: f64::NAN,
        stationarity: f64::NAN,
    }
}

/// One method's entries in a row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCell {
    pub err_inf: f64,
    pub norm_ax_b: f64,
    pub min_x: f64,
    /// Condition number of `AX²Aᵀ`; affine path only.
    pub kappa: Option<f64>,
    /// `ok`, or the terminal status of a run that ended before this horizon.
    pub status: String,
}

impl PathCell {
    fn missing(status: &str, with_kappa: bool) -> Self {
        PathCell {
            err_inf: f64::NAN,
            norm_ax_b: f64::NAN,
            min_x: f64::NAN,
            kappa: with_kappa.then_some(f64::NAN),
            status: status.to_string(),
        }
    }

    fn at(x: &[f64], xstar: &[f64], norm_ax_b: f64, kappa: Option<f64>) -> Self {
        PathCell {
            err_inf: norm_inf(&sub(x, xstar)),
            norm_ax_b,
            min_x: x.iter().copied().fold(f64::INFINITY, f64::min),
            kappa,
            status: "ok".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Interior-point augmented Lagrangian solution path.
    pub sp: PathCell,
    /// Affine-scaling path.
    pub ap: PathCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
    pub sp_status: String,
    pub ap_status: String,
    pub wall_time_s: f64,
}

/// Horizons of the comparison table: `10..10⁶`, or `10..10⁹` with `long`.
pub fn table1_horizons(long: bool) -> Vec<f64> {
    let top = if long { 9 } else { 6 };
    (1..=top).map(|k| 10f64.powi(k)).collect()
}

fn sample_at<T>(samples: &[T], time: impl Fn(&T) -> f64, target: f64) -> Option<&T> {
    samples.iter().find(|s| (time(s) - target).abs() <= 1e-9 * target)
}

/// Both paths on `quartic_p12` at the given horizons.
///
/// The two integrations run on separate threads when more than one worker
/// is allowed; the table itself is assembled in horizon order.
pub fn cmd_table1(horizons: &[f64], config: &IntegratorConfig, threads: usize) -> Result<Table1> {
    let prog = resolve_problem("quartic_p12")?.with_params(FlowParams::new(0.75, 1.0, 1.0)?)?;
    let start = prog.default_start().expect("quartic_p12 has a start").clone();
    let affine_x0 = prog.affine_start().expect("quartic_p12 has a feasible start").to_vec();
    let xstar = prog.known_optimum().expect("quartic_p12 has an optimum").x.clone();
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let cfg = config.clone().with_samples(SampleSchedule::Times(horizons.to_vec()));

    let started = Instant::now();
    let sp_run = || integrate_adaptive(&prog, &cfg, &start.x, &start.y, t_max);
    let ap_run = || integrate_affine(&prog, &cfg, &affine_x0, t_max);
    let (sp, ap) = if threads > 1 {
        std::thread::scope(|scope| {
            let sp = scope.spawn(sp_run);
            let ap = ap_run();
            (sp.join().expect("solution path worker panicked"), ap)
        })
    } else {
        (sp_run(), ap_run())
    };
    let (sp, ap) = (sp?, ap?);

    let rows = horizons
        .iter()
        .map(|&t| -> Result<Table1Row> {
            let sp_cell = match sample_at(&sp.samples, |s| s.t, t) {
                Some(s) => PathCell::at(&s.x, &xstar, norm2(&prog.constraint_residual(&s.x)?), None),
                None => PathCell::missing(sp.status.label(), false),
            };
            let ap_cell = match sample_at(&ap.samples, |s| s.t, t) {
                Some(s) if s.kappa.is_finite() => PathCell::at(&s.x, &xstar, s.norm_ax_b, Some(s.kappa)),
                _ => PathCell::missing(ap.status.label(), true),
            };
            Ok(Table1Row {
                horizon: t,
                sp: sp_cell,
                ap: ap_cell,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1 {
        rows,
        sp_status: sp.status.label().to_string(),
        ap_status: ap.status.label().to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

pub const TABLE1_COLUMNS: [&str; 10] = [
    "T",
    "sp_err_inf",
    "sp_norm_Ax_b",
    "sp_min_x",
    "sp_status",
    "ap_err_inf",
    "ap_norm_Ax_b",
    "ap_min_x",
    "ap_kappa",
    "ap_status",
];

fn cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.1e}")
    }
}

impl Table1 {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE1_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.horizon),
                format!("{:e}", r.sp.err_inf),
                format!("{:e}", r.sp.norm_ax_b),
                format!("{:e}", r.sp.min_x),
                r.sp.status.clone(),
                format!("{:e}", r.ap.err_inf),
                format!("{:e}", r.ap.norm_ax_b),
                format!("{:e}", r.ap.min_x),
                format!("{:e}", r.ap.kappa.unwrap_or(f64::NAN)),
                r.ap.status.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width text layout with a tolerance footer.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:>6} | {:>9} {:>9} {:>9} | {:>9} {:>9} {:>9} {:>9}\n",
            "T", "sp err", "sp Ax-b", "sp min x", "ap err", "ap Ax-b", "ap min x", "ap kappa"
        ));
        s.push_str(&format!("{}\n", "-".repeat(88)));
        for r in &self.rows {
            let sp = if r.sp.status == "ok" {
                format!("{:>9} {:>9} {:>9}", cell(r.sp.err_inf), cell(r.sp.norm_ax_b), cell(r.sp.min_x))
            } else {
                format!("{:>29}", r.sp.status)
            };
            let ap = if r.ap.status == "ok" {
                format!(
                    "{:>9} {:>9} {:>9} {:>9}",
                    cell(r.ap.err_inf),
                    cell(r.ap.norm_ax_b),
                    cell(r.ap.min_x),
                    cell(r.ap.kappa.unwrap_or(f64::NAN))
                )
            } else {
                format!("{:>39}", format!("NaN ({})", r.ap.status))
            };
            s.push_str(&format!("{:>6} | {sp} | {ap}\n", format!("1e{}", r.horizon.log10().round())));
        }
        s.push_str(&format!(
            "\nsp: {} | ap: {} | {:.1} s\n\
             Tolerance policy: sp and ap cells are compared against reference values within ±1.5 in log10;\n\
             kappa within one order of magnitude. Rows beyond 1e4 are informational.\n",
            self.sp_status, self.ap_status, self.wall_time_s
        ));
        s
    }
}

/// Files written by [`cmd_plotdata`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub files: Vec<PathBuf>,
    pub samples: usize,
}

/// Column holding the derived multiplier average `(y₁ + 2y₂)/3`.
pub const DUAL_AVERAGE: &str = "dual_average";

/// Splits a trajectory CSV into one `t,<column>` file per `x_i`/`y_j` and,
/// for `quartic_p12`, adds the `(y₁ + 2y₂)/3` series.
pub fn cmd_plotdata(log: &Path, out_dir: &Path, problem: &str) -> Result<PlotData> {
    let mut reader = csv::Reader::from_path(log)?;
    let header = reader.headers()?.clone();
    let t_col = header
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Error::Config(format!("{} has no `t` column", log.display())))?;
    let series: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| is_coordinate(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{} holds no samples", log.display())));
    }
    let parse = |rec: &csv::StringRecord, i: usize| -> Result<f64> {
        rec[i]
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("bad value `{}` in {}: {e}", &rec[i], log.display())))
    };

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (col, name) in &series {
        let path = out_dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["t", name.as_str()])?;
        for rec in &rows {
            w.write_record([&rec[t_col], &rec[*col]])?;
        }
        w.flush()?;
        files.push(path);
    }
    if problem == "quartic_p12" {
        let y1 = header.iter().position(|h| h == "y_1");
        let y2 = header.iter().position(|h| h == "y_2");
        if let (Some(y1), Some(y2)) = (y1, y2) {
            let path = out_dir.join(format!("{DUAL_AVERAGE}.csv"));
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["t", DUAL_AVERAGE])?;
            for rec in &rows {
                let avg = (parse(rec, y1)? + 2.0 * parse(rec, y2)?) / 3.0;
                w.write_record([rec[t_col].to_string(), format!("{avg:e}")])?;
            }
            w.flush()?;
            files.push(path);
        }
    }
    Ok(PlotData {
        files,
        samples: rows.len(),
    })
}

fn is_coordinate(h: &str) -> bool {
    h.strip_prefix("x_")
        .or_else(|| h.strip_prefix("y_"))
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in Method::NAMES {
            assert_eq!(name.parse::<Method>().unwrap().as_str(), name);
        }
        match "newton".parse::<Method>() {
            Err(Error::Lookup { kind, available, .. }) => {
                assert_eq!(kind, "method");
                assert_eq!(available.len(), 7);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn run_config_json() {
        let cfg = RunConfig::from_json(
            r#"{"schema_version": 1, "problem": "simple_qp", "method": "explicit", "out": "o.csv",
                "stepper": {"h": 0.5}, "integrator": {"rel_tol": 1e-8}}"#,
        )
        .unwrap();
        assert_eq!(cfg.method, Method::Stepper(Variant::Explicit));
        assert_eq!(cfg.stepper.h, 0.5);
        assert_eq!(cfg.integrator.rel_tol, 1e-8);
        assert_eq!(cfg.integrator.h_max, f64::INFINITY);
        assert_eq!(cfg.horizon, 100.0);
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        assert!(RunConfig::from_json(r#"{"schema_version": 2, "problem": "p", "method": "flow", "out": "o"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"problem": "p", "method": "newton", "out": "o"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"problem": "p", "method": "flow", "out": "o", "extra": 1}"#).is_err());
    }

    #[test]
    fn prepare_checks_starts() {
        let mut cfg = RunConfig::new("quartic_p12", Method::Affine, "o.csv");
        let run = cfg.prepare().unwrap();
        assert_eq!(run.x0, vec![0.5, 1.0, 0.5]);
        cfg.x0 = Some(vec![1.0, 1.0, 1.0]);
        assert!(matches!(cfg.prepare(), Err(Error::Precondition(_))));

        let mut cfg = RunConfig::new("quartic_p12", Method::Flow, "o.csv");
        cfg.x0 = Some(vec![1.0, 0.0, 1.0]);
        assert!(matches!(cfg.prepare(), Err(Error::Precondition(_))));
        cfg.x0 = Some(vec![1.0, 1.0]);
        assert!(matches!(cfg.prepare(), Err(Error::Dimension { .. })));
        cfg.x0 = Some(vec![2.0, 2.0, 2.0]);
        let run = cfg.prepare().unwrap();
        assert_eq!(run.y0, vec![0.0, 0.0]);
        cfg.gamma = Some(0.5);
        assert_eq!(cfg.prepare().unwrap().prog.gamma(), 0.5);
        cfg.gamma = Some(1.0);
        assert!(cfg.prepare().is_err());
    }

    #[test]
    fn random_start_is_seeded() {
        assert_eq!(random_start(4, 7), random_start(4, 7));
        assert_ne!(random_start(4, 7), random_start(4, 8));
        assert!(random_start(50, 1).iter().all(|v| (0.5..1.5).contains(v)));
    }

    #[test]
    fn coordinate_columns() {
        assert!(is_coordinate("x_1") && is_coordinate("y_12"));
        assert!(!is_coordinate("x_") && !is_coordinate("norm_Ax_b") && !is_coordinate("t"));
    }

    #[test]
    fn horizons() {
        assert_eq!(table1_horizons(false).len(), 6);
        assert_eq!(table1_horizons(true).last(), Some(&1e9));
    }
}
