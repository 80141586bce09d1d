//! Time integration of the flow.
//!
//! The adaptive integrator is the Bogacki–Shampine 3(2) embedded pair with
//! first-same-as-last stages and RMS error control. Trial steps that would
//! cross the fraction-to-boundary limit on the sign-constrained coordinates
//! (or whose stages leave the interior) are rejected and the step halved.
//! Steps are shortened to land exactly on requested sample times.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::FlowWorkspace;
use crate::error::{Error, Result};
use crate::monitors::MonitorValues;
use crate::problem::{ConvexProgram, TrajectoryState};

/// When to record samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSchedule {
    /// Every accepted step.
    Steps,
    /// The listed times (plus the start and the horizon).
    Times(Vec<f64>),
    /// Uniform stride from the start time.
    Stride(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// Omitted from JSON when unbounded.
    #[serde(skip_serializing_if = "is_unbounded")]
    pub h_max: f64,
    /// Fraction-to-boundary parameter θ ∈ (0, 1).
    pub fraction_to_boundary: f64,
    pub max_steps: usize,
    pub sample_times: SampleSchedule,
}

fn is_unbounded(h: &f64) -> bool {
    h.is_infinite()
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            fraction_to_boundary: 0.99,
            max_steps: 50_000_000,
            sample_times: SampleSchedule::Steps,
        }
    }
}

impl IntegratorConfig {
    /// Tight tolerances (rel 1e-10, abs 1e-13) for long-horizon comparisons.
    pub fn reference() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            ..IntegratorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.h_min > 0.0
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && self.fraction_to_boundary > 0.0
            && self.fraction_to_boundary < 1.0
            && self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_steps > 0;
        if !ok {
            return Err(Error::Config(format!("inconsistent integrator settings: {self:?}")));
        }
        if let SampleSchedule::Stride(dt) = self.sample_times {
            if !(dt > 0.0) {
                return Err(Error::Config("sample stride must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn with_samples(mut self, schedule: SampleSchedule) -> Self {
        self.sample_times = schedule;
        self
    }
}

/// How an integration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TerminalStatus {
    ReachedHorizon,
    MaxSteps,
    StepUnderflow { h: f64 },
    /// The vector field could not be evaluated (e.g. a singular linear solve).
    Failed { reason: String },
}

impl TerminalStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TerminalStatus::ReachedHorizon => "reached_T",
            TerminalStatus::MaxSteps => "max_steps",
            TerminalStatus::StepUnderflow { .. } => "step_underflow",
            TerminalStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected_error: usize,
    pub rejected_boundary: usize,
    pub rhs_evals: usize,
}

/// A vector field the adaptive integrator can advance.
pub trait VectorField {
    fn dim(&self) -> usize;

    /// `out = F(t, state)`. A [`Error::Domain`] result makes the integrator
    /// reject the trial step instead of failing.
    fn eval(&mut self, t: f64, state: &[f64], out: &mut [f64]) -> Result<()>;

    /// Whether `next` is an acceptable successor of `prev`.
    fn admissible(&self, _prev: &[f64], _next: &[f64]) -> bool {
        true
    }

    /// Hook run after each accepted step; returns `true` if `state` was modified.
    fn after_step(&mut self, _t: f64, _state: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
}

/// Raw result of [`integrate_field`].
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub status: TerminalStatus,
    pub stats: IntegrationStats,
}

// Bogacki–Shampine coefficients
const A21: f64 = 0.5;
const A32: f64 = 0.75;
const B1: f64 = 2.0 / 9.0;
const B2: f64 = 1.0 / 3.0;
const B3: f64 = 4.0 / 9.0;
const E1: f64 = -5.0 / 72.0;
const E2: f64 = 1.0 / 12.0;
const E3: f64 = 1.0 / 9.0;
const E4: f64 = -1.0 / 8.0;

enum Trial {
    Accepted,
    Rejected,
    Boundary,
}

fn sample_targets(schedule: &SampleSchedule, t0: f64, horizon: f64) -> Vec<f64> {
    let mut targets: Vec<f64> = match schedule {
        SampleSchedule::Steps => Vec::new(),
        SampleSchedule::Times(ts) => ts.iter().copied().filter(|&t| t > t0 && t < horizon).collect(),
        SampleSchedule::Stride(dt) => {
            let count = ((horizon - t0) / dt).floor() as usize;
            (1..=count).map(|k| t0 + k as f64 * dt).filter(|&t| t < horizon).collect()
        }
    };
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(horizon);
    targets
}

/// Integrates `field` from `(t0, y0)` to `horizon`.
pub fn integrate_field<F: VectorField>(
    field: &mut F,
    config: &IntegratorConfig,
    t0: f64,
    y0: &[f64],
    horizon: f64,
) -> Result<FieldSolution> {
    config.validate()?;
    let dim = field.dim();
    if y0.len() != dim {
        return Err(Error::Dimension {
            what: "initial state",
            expected: dim,
            got: y0.len(),
        });
    }
    if !(horizon >= t0) {
        return Err(Error::Precondition(format!("horizon {horizon} precedes start {t0}")));
    }
    let record_steps = config.sample_times == SampleSchedule::Steps;
    let mut sol = FieldSolution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        status: TerminalStatus::ReachedHorizon,
        stats: IntegrationStats::default(),
    };
    if horizon == t0 {
        return Ok(sol);
    }

    let targets = sample_targets(&config.sample_times, t0, horizon);
    let mut next_target = 0;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    if let Err(e) = field.eval(t, &y, &mut k1) {
        return match e {
            Error::Domain { .. } => Err(Error::Precondition(format!("initial state is not interior: {e}"))),
            Error::Solve { .. } => {
                sol.status = TerminalStatus::Failed { reason: e.to_string() };
                Ok(sol)
            }
            other => Err(other),
        };
    }
    sol.stats.rhs_evals += 1;
    let mut h = config.h_init.min(config.h_max);
    let mut steps = 0usize;

    while next_target < targets.len() {
        if steps >= config.max_steps {
            sol.status = TerminalStatus::MaxSteps;
            break;
        }
        let target = targets[next_target];
        let clipped = t + h >= target;
        let h_try = if clipped { target - t } else { h };
        if h_try <= 0.0 || t + h_try == t || (!clipped && h_try < config.h_min) {
            sol.status = TerminalStatus::StepUnderflow { h: h_try };
            break;
        }

        let trial = (|| -> Result<Trial> {
            for i in 0..dim {
                stage[i] = y[i] + h_try * A21 * k1[i];
            }
            field.eval(t + 0.5 * h_try, &stage, &mut k2)?;
            for i in 0..dim {
                stage[i] = y[i] + h_try * A32 * k2[i];
            }
            field.eval(t + 0.75 * h_try, &stage, &mut k3)?;
            for i in 0..dim {
                y_new[i] = y[i] + h_try * (B1 * k1[i] + B2 * k2[i] + B3 * k3[i]);
            }
            if !field.admissible(&y, &y_new) {
                return Ok(Trial::Boundary);
            }
            field.eval(t + h_try, &y_new, &mut k4)?;
            let mut acc = 0.0;
            for i in 0..dim {
                let err = h_try * (E1 * k1[i] + E2 * k2[i] + E3 * k3[i] + E4 * k4[i]);
                let scale = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
                acc += (err / scale).powi(2);
            }
            let err_norm = (acc / dim as f64).sqrt();
            if !err_norm.is_finite() {
                return Ok(Trial::Rejected);
            }
            let factor = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
            if err_norm <= 1.0 {
                h = (h_try * factor).max(if clipped { h } else { 0.0 }).min(config.h_max);
                Ok(Trial::Accepted)
            } else {
                h = h_try * factor;
                Ok(Trial::Rejected)
            }
        })();
        sol.stats.rhs_evals += 3;
        steps += 1;

        match trial {
            Ok(Trial::Accepted) => {
                sol.stats.accepted += 1;
                t = if clipped { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k4);
                if field.after_step(t, &mut y)? {
                    if let Err(e) = field.eval(t, &y, &mut k1) {
                        sol.status = TerminalStatus::Failed { reason: e.to_string() };
                        break;
                    }
                    sol.stats.rhs_evals += 1;
                }
                if clipped {
                    next_target += 1;
                }
                if clipped || record_steps {
                    sol.times.push(t);
                    sol.states.push(y.clone());
                }
            }
            Ok(Trial::Rejected) => {
                sol.stats.rejected_error += 1;
            }
            Ok(Trial::Boundary) | Err(Error::Domain { .. }) => {
                sol.stats.rejected_boundary += 1;
                h = 0.5 * h_try;
            }
            Err(e @ Error::Solve { .. }) => {
                sol.status = TerminalStatus::Failed { reason: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if sol.status != TerminalStatus::ReachedHorizon && *sol.times.last().unwrap() != t {
        sol.times.push(t);
        sol.states.push(y);
    }
    Ok(sol)
}

/// The interior-point augmented Lagrangian flow as a [`VectorField`] on `(x, y)`.
pub struct LagrangianFlow<'a> {
    prog: &'a ConvexProgram,
    ws: FlowWorkspace,
    theta: f64,
}

impl<'a> LagrangianFlow<'a> {
    pub fn new(prog: &'a ConvexProgram, theta: f64) -> Self {
        LagrangianFlow {
            prog,
            ws: FlowWorkspace::new(prog),
            theta,
        }
    }
}

impl VectorField for LagrangianFlow<'_> {
    fn dim(&self) -> usize {
        self.prog.n() + self.prog.m()
    }

    fn eval(&mut self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.prog.n();
        let (x, y) = state.split_at(n);
        let (dx, dy) = out.split_at_mut(n);
        self.ws.rhs(self.prog, x, y, dx, dy)
    }

    fn admissible(&self, prev: &[f64], next: &[f64]) -> bool {
        let keep = 1.0 - self.theta;
        prev[..self.prog.s()]
            .iter()
            .zip(&next[..self.prog.s()])
            .all(|(p, q)| *q >= keep * p && *q > 0.0)
    }
}

/// One sample of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitors: Option<MonitorValues>,
}

/// Sampled trajectory of the flow with its terminal status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub n: usize,
    pub m: usize,
    pub samples: Vec<Sample>,
    pub status: TerminalStatus,
    pub stats: IntegrationStats,
}

impl TrajectoryLog {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trajectory log always holds the initial sample")
    }

    /// Computes the monitor columns for every sample.
    pub fn attach_monitors(&mut self, prog: &ConvexProgram) -> Result<()> {
        for s in &mut self.samples {
            s.monitors = Some(MonitorValues::evaluate(prog, &s.x, &s.y)?);
        }
        Ok(())
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=self.n).map(|i| format!("x_{i}")));
        h.extend((1..=self.m).map(|j| format!("y_{j}")));
        h.extend(MONITOR_COLUMNS.iter().map(|s| s.to_string()));
        h
    }

    /// Writes the log as CSV: `t, x_1..x_n, y_1..y_m` followed by
    /// [`MONITOR_COLUMNS`] (empty fields when monitors are not attached).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for s in &self.samples {
            let mut rec: Vec<String> = Vec::with_capacity(1 + self.n + self.m + MONITOR_COLUMNS.len());
            rec.push(fmt_f64(s.t));
            rec.extend(s.x.iter().map(|v| fmt_f64(*v)));
            rec.extend(s.y.iter().map(|v| fmt_f64(*v)));
            match &s.monitors {
                Some(mv) => {
                    rec.push(mv.v1.map(fmt_f64).unwrap_or_default());
                    for v in [mv.ltilde, mv.dltilde, mv.norm_ax_b, mv.norm_u2z, mv.kkt_max] {
                        rec.push(fmt_f64(v));
                    }
                }
                None => rec.extend(std::iter::repeat_n(String::new(), MONITOR_COLUMNS.len())),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const MONITOR_COLUMNS: [&str; 6] = ["V1", "Ltilde", "dLtilde", "norm_Ax_b", "norm_U2z", "kkt_max"];

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Explicit Euler step of the flow with the fraction-to-boundary cap
/// `h′ = min(h, θ · min_{i<s, dx_i<0} x_i / (−dx_i))`.
pub fn step_explicit_euler(
    prog: &ConvexProgram,
    state: &TrajectoryState,
    h: f64,
    theta: f64,
) -> Result<TrajectoryState> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step must be positive, got {h}")));
    }
    let mut ws = FlowWorkspace::new(prog);
    let mut dx = vec![0.0; prog.n()];
    let mut dy = vec![0.0; prog.m()];
    prog.check_x(&state.x)?;
    ws.rhs(prog, &state.x, &state.y, &mut dx, &mut dy)?;
    let step = h.min(boundary_step_cap(&state.x, &dx, prog.s(), theta));
    let x = state.x.iter().zip(&dx).map(|(xi, di)| xi + step * di).collect();
    let y = state.y.iter().zip(&dy).map(|(yi, di)| yi + step * di).collect();
    Ok(TrajectoryState::new(state.t + step, x, y))
}

/// Largest step keeping `x_i + α d_i ≥ (1 − θ) x_i` for `i < s`.
pub fn boundary_step_cap(x: &[f64], d: &[f64], s: usize, theta: f64) -> f64 {
    x[..s]
        .iter()
        .zip(&d[..s])
        .filter(|(_, di)| **di < 0.0)
        .map(|(xi, di)| theta * xi / (-di))
        .fold(f64::INFINITY, f64::min)
}

/// Adaptive integration of the flow from `(x0, y0)` at `t = 0` up to `horizon`.
pub fn integrate_adaptive(
    prog: &ConvexProgram,
    config: &IntegratorConfig,
    x0: &[f64],
    y0: &[f64],
    horizon: f64,
) -> Result<TrajectoryLog> {
    integrate_adaptive_from(prog, config, 0.0, x0, y0, horizon)
}

pub fn integrate_adaptive_from(
    prog: &ConvexProgram,
    config: &IntegratorConfig,
    t0: f64,
    x0: &[f64],
    y0: &[f64],
    horizon: f64,
) -> Result<TrajectoryLog> {
    prog.check_x(x0)?;
    prog.check_y(y0)?;
    if let Some(i) = (0..prog.s()).find(|&i| !(x0[i] > 0.0)) {
        return Err(Error::Domain { index: i, value: x0[i] });
    }
    let mut start = x0.to_vec();
    start.extend_from_slice(y0);
    let mut field = LagrangianFlow::new(prog, config.fraction_to_boundary);
    let sol = integrate_field(&mut field, config, t0, &start, horizon)?;
    let n = prog.n();
    let samples = sol
        .times
        .into_iter()
        .zip(sol.states)
        .map(|(t, st)| Sample {
            t,
            x: st[..n].to_vec(),
            y: st[n..].to_vec(),
            monitors: None,
        })
        .collect();
    Ok(TrajectoryLog {
        n,
        m: prog.m(),
        samples,
        status: sol.status,
        stats: sol.stats,
    })
}
