//! Discrete iterations built from the flow
//!
//! Every variant moves `x` along a scaled direction, accepts the step with
//! an Armijo test on the merit `φ(x) = L̃(x, y)` at frozen `y`, then takes a
//! first-order multiplier step `y ← y + α σ₂ (Ax − b)`.
//!
//! | variant                 | x-direction                                   |
//! |-------------------------|-----------------------------------------------|
//! | `explicit`              | `−U² z`                                       |
//! | `semi_implicit_hessian` | `−U [I + hU∇²fU]⁻¹ U z`                       |
//! | `semi_implicit_full`    | `−U [I + hU(∇²f + σ₁AᵀA)U]⁻¹ U z`             |
//! | `gauss_seidel`          | block sweep of `−W U² z`, z refreshed per block |
//! | `partial_update`        | block sweep of the full semi-implicit system  |
//!
//! Linear systems are solved by conjugate gradients using only
//! Hessian-vector and `A`/`Aᵀ` products.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{flow_rhs, scaling_vector, FlowWorkspace};
use crate::error::{Error, Result};
use crate::integrators::{boundary_step_cap, fmt_f64};
use crate::linalg::{conjugate_gradient, dot};
use crate::monitors::{augmented_lagrangian, kkt_report, stationarity_norm, KktReport};
use crate::problem::{ConvexProgram, TrajectoryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Explicit,
    SemiImplicitHessian,
    SemiImplicitFull,
    GaussSeidel,
    PartialUpdate,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Explicit,
        Variant::SemiImplicitHessian,
        Variant::SemiImplicitFull,
        Variant::GaussSeidel,
        Variant::PartialUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Explicit => "explicit",
            Variant::SemiImplicitHessian => "semi_implicit_hessian",
            Variant::SemiImplicitFull => "semi_implicit_full",
            Variant::GaussSeidel => "gauss_seidel",
            Variant::PartialUpdate => "partial_update",
        }
    }

    pub fn needs_hessian(self) -> bool {
        matches!(
            self,
            Variant::SemiImplicitHessian | Variant::SemiImplicitFull | Variant::PartialUpdate
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Lookup {
                kind: "method",
                name: s.to_string(),
                available: Variant::ALL.iter().map(|v| v.as_str()).collect(),
            })
    }
}

/// Which residual feeds the multiplier step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualUpdate {
    /// `Ax^k − b`
    #[default]
    Pre,
    /// `Ax^{k+1} − b`
    Post,
}

/// Disjoint nonempty index blocks covering `0..n`, visited in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::Parameter("partition blocks must be nonempty".into()));
            }
            for &i in block {
                if i >= n || seen[i] {
                    return Err(Error::Parameter(format!(
                        "partition blocks must be disjoint and cover 0..{n}; index {i} is out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        if n == 0 {
            return Err(Error::Parameter("partition must contain at least one block".into()));
        }
        Ok(BlockPartition { blocks })
    }

    pub fn whole(n: usize) -> Self {
        BlockPartition {
            blocks: vec![(0..n).collect()],
        }
    }

    pub fn singletons(n: usize) -> Self {
        BlockPartition {
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// `p` contiguous blocks of near-equal size.
    pub fn contiguous(n: usize, p: usize) -> Result<Self> {
        if p == 0 || p > n {
            return Err(Error::Parameter(format!("need 1 ≤ p ≤ n, got p = {p}, n = {n}")));
        }
        let blocks = (0..p).map(|k| (k * n / p..(k + 1) * n / p).collect()).collect();
        Ok(BlockPartition { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }
}

impl TryFrom<Vec<Vec<usize>>> for BlockPartition {
    type Error = Error;
    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        BlockPartition::new(blocks)
    }
}

impl From<BlockPartition> for Vec<Vec<usize>> {
    fn from(p: BlockPartition) -> Self {
        p.blocks
    }
}

/// Positive diagonal of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!("weight {i} must be positive, got {}", w[i])));
        }
        Ok(WeightVector(w))
    }

    pub fn ones(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        WeightVector::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Conjugate gradient settings for the semi-implicit systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgSettings {
    /// Relative residual target.
    pub tol: f64,
    pub max_iters: usize,
    /// Jacobi preconditioning; the diagonal costs one Hessian-vector product per coordinate.
    pub jacobi: bool,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings {
            tol: 1e-10,
            max_iters: 1000,
            jacobi: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperConfig {
    pub variant: Variant,
    /// Direction parameter `h`; also the largest trial step.
    pub h: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
    pub theta: f64,
    pub cg: CgSettings,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub dual_update: DualUpdate,
    /// Block order for the sweep variants; singletons when absent.
    pub partition: Option<BlockPartition>,
    /// Gauss–Seidel weights; ones when absent.
    pub weights: Option<WeightVector>,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            variant: Variant::Explicit,
            h: 0.3,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            max_backtracks: 60,
            theta: 0.99,
            cg: CgSettings::default(),
            kkt_tol: 1e-6,
            max_iters: 50_000,
            dual_update: DualUpdate::Pre,
            partition: None,
            weights: None,
        }
    }
}

impl StepperConfig {
    pub fn new(variant: Variant, h: f64) -> Self {
        StepperConfig {
            variant,
            h,
            ..StepperConfig::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = [
            ("h", self.h),
            ("armijo_c", self.armijo_c),
            ("cg tolerance", self.cg.tol),
            ("kkt_tol", self.kkt_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("armijo_c", self.armijo_c),
            ("backtrack_ratio", self.backtrack_ratio),
            ("theta", self.theta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.cg.max_iters == 0 || self.max_iters == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if let Some(p) = &self.partition {
            if p.dim() != n {
                return Err(Error::Dimension {
                    what: "block partition",
                    expected: n,
                    got: p.dim(),
                });
            }
        }
        if let Some(w) = &self.weights {
            if w.as_slice().len() != n {
                return Err(Error::Dimension {
                    what: "weight vector",
                    expected: n,
                    got: w.as_slice().len(),
                });
            }
        }
        Ok(())
    }
}

/// A search direction together with the CG effort spent on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub dx: Vec<f64>,
    pub cg_iterations: usize,
}

/// `(−U²z, σ₂(Ax − b))`; the flow right-hand side.
pub fn direction_explicit(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    flow_rhs(prog, &TrajectoryState::new(0.0, x.to_vec(), y.to_vec()))
}

/// Operator `v ↦ v + hU(∇²f + σ₁AᵀA)U v` restricted to `block`, with the
/// penalty term present only when `penalty` is set.
struct ScaledSystem<'a> {
    prog: &'a ConvexProgram,
    x: &'a [f64],
    u: &'a [f64],
    h: f64,
    penalty: bool,
    block: Option<&'a [usize]>,
    full_v: Vec<f64>,
    hv: Vec<f64>,
    av: Vec<f64>,
    atav: Vec<f64>,
}

impl<'a> ScaledSystem<'a> {
    fn new(
        prog: &'a ConvexProgram,
        x: &'a [f64],
        u: &'a [f64],
        h: f64,
        penalty: bool,
        block: Option<&'a [usize]>,
    ) -> Self {
        ScaledSystem {
            prog,
            x,
            u,
            h,
            penalty,
            block,
            full_v: vec![0.0; prog.n()],
            hv: vec![0.0; prog.n()],
            av: vec![0.0; prog.m()],
            atav: vec![0.0; prog.n()],
        }
    }

    fn indices(&self, k: usize) -> usize {
        self.block.map_or(k, |b| b[k])
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.full_v.iter_mut().for_each(|t| *t = 0.0);
        for (k, vk) in v.iter().enumerate() {
            let i = self.indices(k);
            self.full_v[i] = self.u[i] * vk;
        }
        self.prog.hessian_vector_into(self.x, &self.full_v, &mut self.hv)?;
        if self.penalty {
            self.prog.matrix().mul_vec(&self.full_v, &mut self.av);
            self.prog.matrix().mul_t_vec(&self.av, &mut self.atav);
            let sigma1 = self.prog.sigma1();
            self.hv.iter_mut().zip(&self.atav).for_each(|(a, b)| *a += sigma1 * b);
        }
        for (k, (o, vk)) in out.iter_mut().zip(v).enumerate() {
            let i = self.indices(k);
            *o = vk + self.h * self.u[i] * self.hv[i];
        }
        Ok(())
    }

    fn diagonal(&mut self, dim: usize) -> Result<Vec<f64>> {
        let mut e = vec![0.0; dim];
        let mut col = vec![0.0; dim];
        let mut diag = vec![0.0; dim];
        for k in 0..dim {
            e[k] = 1.0;
            self.apply(&e, &mut col)?;
            diag[k] = col[k];
            e[k] = 0.0;
        }
        Ok(diag)
    }
}

/// Solves `(I + hU M U)_BB w = (U z)_B` and returns the full-length direction
/// with `d_B = −U_B w` and zeros elsewhere.
#[allow(clippy::too_many_arguments)]
fn scaled_direction(
    prog: &ConvexProgram,
    x: &[f64],
    z: &[f64],
    u: &[f64],
    h: f64,
    penalty: bool,
    block: Option<&[usize]>,
    cg: &CgSettings,
) -> Result<Direction> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("h must be positive, got {h}")));
    }
    if !prog.objective().has_hessian_vector() {
        return Err(Error::Capability("semi-implicit directions need Hessian-vector products"));
    }
    let idx: Vec<usize> = block.map_or_else(|| (0..prog.n()).collect(), <[usize]>::to_vec);
    let rhs: Vec<f64> = idx.iter().map(|&i| u[i] * z[i]).collect();
    let mut system = ScaledSystem::new(prog, x, u, h, penalty, block);
    let jacobi = if cg.jacobi {
        Some(system.diagonal(idx.len())?.iter().map(|d| 1.0 / d).collect::<Vec<_>>())
    } else {
        None
    };
    let mut failure = None;
    let outcome = conjugate_gradient(
        |v, out| {
            if failure.is_none() {
                if let Err(e) = system.apply(v, out) {
                    failure = Some(e);
                    out.iter_mut().for_each(|o| *o = f64::NAN);
                }
            } else {
                out.iter_mut().for_each(|o| *o = f64::NAN);
            }
        },
        &rhs,
        cg.tol,
        cg.max_iters,
        jacobi.as_deref(),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let outcome = outcome?;
    let mut dx = vec![0.0; prog.n()];
    for (k, &i) in idx.iter().enumerate() {
        dx[i] = -u[i] * outcome.solution[k];
    }
    Ok(Direction {
        dx,
        cg_iterations: outcome.iterations,
    })
}

fn scaling_and_z(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    prog.check_x(x)?;
    let u = scaling_vector(x, prog.gamma(), prog.s())?.into_inner();
    let mut z = vec![0.0; prog.n()];
    FlowWorkspace::new(prog).dual_residual(prog, x, y, &mut z)?;
    Ok((u, z))
}

/// `−U [I + hU∇²f(x)U]⁻¹ U z(x, y)`
pub fn direction_semi_implicit_hessian(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    h: f64,
    cg: &CgSettings,
) -> Result<Direction> {
    let (u, z) = scaling_and_z(prog, x, y)?;
    scaled_direction(prog, x, &z, &u, h, false, None, cg)
}

/// `−U [I + hU(∇²f(x) + σ₁AᵀA)U]⁻¹ U z(x, y)`
pub fn direction_semi_implicit_full(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    h: f64,
    cg: &CgSettings,
) -> Result<Direction> {
    let (u, z) = scaling_and_z(prog, x, y)?;
    scaled_direction(prog, x, &z, &u, h, true, None, cg)
}

/// Block direction of the partially updated scheme at `x`, zero off `block`.
pub fn direction_block(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    block: &[usize],
    h: f64,
    cg: &CgSettings,
) -> Result<Direction> {
    let (u, z) = scaling_and_z(prog, x, y)?;
    scaled_direction(prog, x, &z, &u, h, true, Some(block), cg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    /// Accepted step; zero when no step was taken.
    pub step: f64,
    /// `∇φᵀd < 0` held at the start.
    pub descent: bool,
    pub backtracks: usize,
    /// Trial step before backtracking: `min(h, fraction-to-boundary cap)`.
    pub max_step: f64,
}

/// Rounding allowance in the Armijo comparison, relative to `|φ(x)|`.
const MERIT_ROUNDING: f64 = 16.0 * f64::EPSILON;

/// Backtracking Armijo search on `φ = L̃(·, y)` along `dx`.
pub fn line_search(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    dx: &[f64],
    config: &StepperConfig,
) -> Result<LineSearch> {
    let (_, z) = scaling_and_z(prog, x, y)?;
    let phi0 = augmented_lagrangian(prog, x, y)?;
    line_search_with(prog, x, y, dx, &z, phi0, config.h, config)
}

#[allow(clippy::too_many_arguments)]
fn line_search_with(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    dx: &[f64],
    grad_phi: &[f64],
    phi0: f64,
    h: f64,
    config: &StepperConfig,
) -> Result<LineSearch> {
    let max_step = h.min(boundary_step_cap(x, dx, prog.s(), config.theta));
    let slope = dot(grad_phi, dx);
    if !(slope < 0.0) {
        return Ok(LineSearch {
            step: 0.0,
            descent: false,
            backtracks: 0,
            max_step,
        });
    }
    let slack = MERIT_ROUNDING * phi0.abs();
    let mut alpha = max_step;
    let mut trial = vec![0.0; x.len()];
    for j in 0..=config.max_backtracks {
        trial.iter_mut().zip(x.iter().zip(dx)).for_each(|(t, (xi, di))| *t = xi + alpha * di);
        let phi = augmented_lagrangian(prog, &trial, y)?;
        if phi <= phi0 + config.armijo_c * alpha * slope + slack {
            return Ok(LineSearch {
                step: alpha,
                descent: true,
                backtracks: j,
                max_step,
            });
        }
        alpha *= config.backtrack_ratio;
    }
    Ok(LineSearch {
        step: 0.0,
        descent: true,
        backtracks: config.max_backtracks,
        max_step,
    })
}

/// Result of one block sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub x: Vec<f64>,
    /// Step applied to each block, in partition order.
    pub steps: Vec<f64>,
    pub cg_iterations: usize,
}

/// Block Gauss–Seidel pass of the weighted explicit scheme.
///
/// `u` is taken at the incoming `x`; `z` is refreshed at the partially
/// updated point before each block. Each block step is `min(h, cap_B)` with
/// the fraction-to-boundary cap of that block. `y` is not changed.
pub fn gauss_seidel_sweep(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    partition: &BlockPartition,
    weights: &WeightVector,
    h: f64,
    theta: f64,
) -> Result<Sweep> {
    prog.check_x(x)?;
    check_sweep_inputs(prog, partition, Some(weights), h)?;
    let u = scaling_vector(x, prog.gamma(), prog.s())?;
    let w = weights.as_slice();
    let s = prog.s();
    let mut ws = FlowWorkspace::new(prog);
    let mut z = vec![0.0; prog.n()];
    let mut next = x.to_vec();
    let mut steps = Vec::with_capacity(partition.len());
    for block in partition.blocks() {
        ws.dual_residual(prog, &next, y, &mut z)?;
        let d: Vec<f64> = block
            .iter()
            .map(|&i| {
                let ui = u[i];
                w[i] * -(ui * ui * z[i])
            })
            .collect();
        let cap = block
            .iter()
            .zip(&d)
            .filter(|(&i, di)| i < s && **di < 0.0)
            .map(|(&i, di)| theta * next[i] / (-di))
            .fold(f64::INFINITY, f64::min);
        let step = h.min(cap);
        for (&i, di) in block.iter().zip(&d) {
            next[i] += step * di;
        }
        if let Some(&i) = block.iter().find(|&&i| i < s && !(next[i] > 0.0)) {
            return Err(Error::Domain { index: i, value: next[i] });
        }
        steps.push(step);
    }
    Ok(Sweep {
        x: next,
        steps,
        cg_iterations: 0,
    })
}

/// Partially updated semi-implicit pass: per block, solve the block system
/// at the current point, then line-search along that block direction.
pub fn partial_update_sweep(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    partition: &BlockPartition,
    h: f64,
    config: &StepperConfig,
) -> Result<Sweep> {
    prog.check_x(x)?;
    check_sweep_inputs(prog, partition, None, h)?;
    let mut next = x.to_vec();
    let mut steps = Vec::with_capacity(partition.len());
    let mut cg_iterations = 0;
    for block in partition.blocks() {
        let (u, z) = scaling_and_z(prog, &next, y)?;
        let dir = scaled_direction(prog, &next, &z, &u, h, true, Some(block), &config.cg)?;
        cg_iterations += dir.cg_iterations;
        let phi0 = augmented_lagrangian(prog, &next, y)?;
        let ls = line_search_with(prog, &next, y, &dir.dx, &z, phi0, h, config)?;
        for &i in block {
            next[i] += ls.step * dir.dx[i];
        }
        steps.push(ls.step);
    }
    Ok(Sweep {
        x: next,
        steps,
        cg_iterations,
    })
}

fn check_sweep_inputs(
    prog: &ConvexProgram,
    partition: &BlockPartition,
    weights: Option<&WeightVector>,
    h: f64,
) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("h must be positive, got {h}")));
    }
    if partition.dim() != prog.n() {
        return Err(Error::Dimension {
            what: "block partition",
            expected: prog.n(),
            got: partition.dim(),
        });
    }
    if let Some(w) = weights {
        if w.as_slice().len() != prog.n() {
            return Err(Error::Dimension {
                what: "weight vector",
                expected: prog.n(),
                got: w.as_slice().len(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Two consecutive iterations moved neither `x` nor `y`.
    Stalled { reason: String },
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iters",
            SolveStatus::Stalled { .. } => "stalled",
        }
    }
}

/// One row of the iteration log; row 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub step: f64,
    pub phi: f64,
    pub kkt_max: f64,
    pub norm_ax_b: f64,
    pub norm_u2z: f64,
    pub cg_iters: usize,
}

pub const ITERATION_COLUMNS: [&str; 7] =
    ["iter", "step", "phi", "kkt_max", "norm_Ax_b", "norm_U2z", "cg_iters"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub variant: Variant,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub kkt: KktReport,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Smallest sign-constrained coordinate over all iterates.
    pub min_x: f64,
    pub log: Vec<IterationRecord>,
}

impl SolveOutcome {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ITERATION_COLUMNS)?;
        for r in &self.log {
            w.write_record([
                r.iter.to_string(),
                fmt_f64(r.step),
                fmt_f64(r.phi),
                fmt_f64(r.kkt_max),
                fmt_f64(r.norm_ax_b),
                fmt_f64(r.norm_u2z),
                r.cg_iters.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn record(
    prog: &ConvexProgram,
    iter: usize,
    step: f64,
    cg_iters: usize,
    x: &[f64],
    y: &[f64],
) -> Result<(IterationRecord, KktReport)> {
    let kkt = kkt_report(prog, x, y)?;
    let rec = IterationRecord {
        iter,
        step,
        phi: augmented_lagrangian(prog, x, y)?,
        kkt_max: kkt.max_residual(),
        norm_ax_b: kkt.primal_feasibility,
        norm_u2z: stationarity_norm(prog, x, y)?.0,
        cg_iters,
    };
    Ok((rec, kkt))
}

/// Primal move of one outer iteration.
struct PrimalStep {
    x: Vec<f64>,
    /// Step reused by the multiplier update.
    dual_step: f64,
    /// Step reported in the log.
    step: f64,
    cg_iterations: usize,
}

/// Iterates until the KKT residual drops to `kkt_tol` or `max_iters` is hit.
pub fn solve(
    prog: &ConvexProgram,
    x0: &[f64],
    y0: &[f64],
    config: &StepperConfig,
) -> Result<SolveOutcome> {
    prog.check_x(x0)?;
    prog.check_y(y0)?;
    config.validate(prog.n())?;
    if let Some(i) = (0..prog.s()).find(|&i| !(x0[i] > 0.0)) {
        return Err(Error::Domain { index: i, value: x0[i] });
    }
    if config.variant.needs_hessian() && !prog.objective().has_hessian_vector() {
        return Err(Error::Capability("this variant needs Hessian-vector products"));
    }
    let partition = config
        .partition
        .clone()
        .unwrap_or_else(|| BlockPartition::singletons(prog.n()));
    let weights = config.weights.clone().unwrap_or_else(|| WeightVector::ones(prog.n()));

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let (first, mut kkt) = record(prog, 0, 0.0, 0, &x, &y)?;
    let mut log = vec![first];
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut idle = 0;
    let lowest = |x: &[f64]| x[..prog.s()].iter().copied().fold(f64::INFINITY, f64::min);
    let mut min_x = lowest(&x);

    if kkt.is_optimal(config.kkt_tol) {
        status = SolveStatus::Converged;
    } else {
        for k in 1..=config.max_iters {
            let r_pre = prog.constraint_residual(&x)?;
            let primal = primal_step(prog, &x, &y, config, &partition, &weights)?;
            let moved = primal.x != x;
            x = primal.x;
            min_x = min_x.min(lowest(&x));
            let r = match config.dual_update {
                DualUpdate::Pre => r_pre,
                DualUpdate::Post => prog.constraint_residual(&x)?,
            };
            let tau = primal.dual_step * prog.sigma2();
            let dual_moved = tau > 0.0 && r.iter().any(|ri| *ri != 0.0);
            y.iter_mut().zip(&r).for_each(|(yi, ri)| *yi += tau * ri);

            let (rec, report) = record(prog, k, primal.step, primal.cg_iterations, &x, &y)?;
            log.push(rec);
            kkt = report;
            iterations = k;
            if kkt.is_optimal(config.kkt_tol) {
                status = SolveStatus::Converged;
                break;
            }
            idle = if moved || dual_moved { 0 } else { idle + 1 };
            if idle >= 2 {
                status = SolveStatus::Stalled {
                    reason: format!(
                        "no progress at iteration {k}: kkt_max = {:e}, ‖U²z‖ = {:e}",
                        rec.kkt_max, rec.norm_u2z
                    ),
                };
                break;
            }
        }
    }
    Ok(SolveOutcome {
        variant: config.variant,
        x,
        y,
        kkt,
        iterations,
        status,
        min_x,
        log,
    })
}

fn primal_step(
    prog: &ConvexProgram,
    x: &[f64],
    y: &[f64],
    config: &StepperConfig,
    partition: &BlockPartition,
    weights: &WeightVector,
) -> Result<PrimalStep> {
    let h = config.h;
    match config.variant {
        Variant::Explicit | Variant::SemiImplicitHessian | Variant::SemiImplicitFull => {
            let (u, z) = scaling_and_z(prog, x, y)?;
            let dir = match config.variant {
                Variant::Explicit => Direction {
                    dx: u.iter().zip(&z).map(|(ui, zi)| -(ui * ui * zi)).collect(),
                    cg_iterations: 0,
                },
                Variant::SemiImplicitHessian => scaled_direction(prog, x, &z, &u, h, false, None, &config.cg)?,
                _ => scaled_direction(prog, x, &z, &u, h, true, None, &config.cg)?,
            };
            let phi0 = augmented_lagrangian(prog, x, y)?;
            let ls = line_search_with(prog, x, y, &dir.dx, &z, phi0, h, config)?;
            let next = x.iter().zip(&dir.dx).map(|(xi, di)| xi + ls.step * di).collect();
            Ok(PrimalStep {
                x: next,
                // no descent in x: plain multiplier step
                dual_step: if ls.descent { ls.step } else { h },
                step: ls.step,
                cg_iterations: dir.cg_iterations,
            })
        }
        Variant::GaussSeidel => {
            let phi0 = augmented_lagrangian(prog, x, y)?;
            let mut trial_h = h;
            for _ in 0..=config.max_backtracks {
                let sweep = gauss_seidel_sweep(prog, x, y, partition, weights, trial_h, config.theta)?;
                let phi = augmented_lagrangian(prog, &sweep.x, y)?;
                if phi <= phi0 + MERIT_ROUNDING * phi0.abs() {
                    let largest = sweep.steps.iter().copied().fold(0.0, f64::max);
                    return Ok(PrimalStep {
                        x: sweep.x,
                        dual_step: trial_h,
                        step: largest,
                        cg_iterations: 0,
                    });
                }
                trial_h *= config.backtrack_ratio;
            }
            Ok(PrimalStep {
                x: x.to_vec(),
                dual_step: 0.0,
                step: 0.0,
                cg_iterations: 0,
            })
        }
        Variant::PartialUpdate => {
            let sweep = partial_update_sweep(prog, x, y, partition, h, config)?;
            let largest = sweep.steps.iter().copied().fold(0.0, f64::max);
            let stationary = sweep.x == x;
            Ok(PrimalStep {
                dual_step: if stationary { h } else { largest },
                x: sweep.x,
                step: largest,
                cg_iterations: sweep.cg_iterations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, norm_inf, ConstraintMatrix};
    use crate::problem::{builtin_problem, FlowParams, Objective};
    use nalgebra::{DMatrix, DVector};

    const X0: [f64; 3] = [1.0, 1.0, 1.0];
    const Y0: [f64; 2] = [0.0, 1.0];

    fn tight() -> CgSettings {
        CgSettings {
            tol: 1e-14,
            ..CgSettings::default()
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
    }

    #[test]
    fn explicit_direction_matches_flow() {
        let p = builtin_problem("quartic_p12").unwrap();
        let (dx, dy) = direction_explicit(&p, &X0, &Y0).unwrap();
        assert!(close(&dx, &[-6.0, -7.0, -10.0], 1e-14));
        assert_eq!(dy, vec![1.0, 1.0]);
        let (dx, dy) = direction_explicit(&p, &[1e-3, 1e-3, 1.0 - 1e-3], &[-2.0, -0.5]).unwrap();
        assert!(norm_inf(&dx) < 1e-2 && norm_inf(&dy) < 1e-2);
    }

    #[test]
    fn semi_implicit_small_h_limit() {
        let p = builtin_problem("quartic_p12").unwrap();
        let (explicit, _) = direction_explicit(&p, &X0, &Y0).unwrap();
        let dh = direction_semi_implicit_hessian(&p, &X0, &Y0, 1e-12, &tight()).unwrap();
        let df = direction_semi_implicit_full(&p, &X0, &Y0, 1e-12, &tight()).unwrap();
        assert!(close(&dh.dx, &explicit, 1e-8));
        assert!(close(&df.dx, &explicit, 1e-8));
    }

    #[test]
    fn semi_implicit_identity_quadratic() {
        // f = ½‖x‖², U = I, h = 1: (1 + 1) w = z
        let a = ConstraintMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let obj = Objective::quadratic(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let p = ConvexProgram::new("q", obj, a, vec![2.0], 2, FlowParams::default()).unwrap();
        let x = [1.0, 1.0];
        let y = [0.3];
        let z = crate::dynamics::dual_residual(&p, &x, &y).unwrap();
        let d = direction_semi_implicit_hessian(&p, &x, &y, 1.0, &tight()).unwrap();
        assert!(close(&d.dx, &[-0.5 * z[0], -0.5 * z[1]], 1e-14));
    }

    #[test]
    fn full_direction_zero_objective_oracle() {
        // zero objective on the quartic constraints, U = I, h = 1: (I + AᵀA) w = z
        let q = builtin_problem("quartic_p12").unwrap();
        let p = ConvexProgram::new("z", Objective::zero(), q.matrix().clone(), q.rhs().to_vec(), 3, q.params()).unwrap();
        let y = [0.4, -0.7];
        let z = crate::dynamics::dual_residual(&p, &X0, &y).unwrap();
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 2.0]);
        let m = DMatrix::identity(3, 3) + a.transpose() * &a;
        let w = m.cholesky().unwrap().solve(&DVector::from_vec(z));
        let d = direction_semi_implicit_full(&p, &X0, &y, 1.0, &tight()).unwrap();
        assert!(close(&d.dx, (-w).as_slice(), 1e-12), "{:?}", d.dx);
        let jac = CgSettings { jacobi: true, ..tight() };
        let dj = direction_semi_implicit_full(&p, &X0, &y, 1.0, &jac).unwrap();
        assert!(close(&dj.dx, &d.dx, 1e-12));
    }

    #[test]
    fn semi_implicit_needs_hessian() {
        let q = builtin_problem("quartic_p12").unwrap();
        let obj = Objective::new("no-hv", |x: &[f64]| x.iter().sum(), |_: &[f64], g: &mut [f64]| g.fill(1.0));
        let p = ConvexProgram::new("n", obj, q.matrix().clone(), q.rhs().to_vec(), 3, q.params()).unwrap();
        let err = direction_semi_implicit_full(&p, &X0, &Y0, 1.0, &tight()).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
        let cfg = StepperConfig::new(Variant::PartialUpdate, 0.3);
        assert!(matches!(solve(&p, &X0, &Y0, &cfg), Err(Error::Capability(_))));
    }

    #[test]
    fn cg_failure_is_reported() {
        let p = builtin_problem("quartic_p12").unwrap();
        let cg = CgSettings { tol: 1e-16, max_iters: 1, jacobi: false };
        let err = direction_semi_implicit_full(&p, &X0, &Y0, 1.0, &cg).unwrap_err();
        assert!(matches!(err, Error::Solver { iterations: 1, .. }), "{err:?}");
    }

    #[test]
    fn line_search_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        let cfg = StepperConfig::default();
        let ls = line_search(&p, &X0, &Y0, &[0.0; 3], &cfg).unwrap();
        assert_eq!(ls.step, 0.0);
        assert!(!ls.descent);

        let ls = line_search(&p, &X0, &Y0, &[-6.0, -7.0, -10.0], &cfg).unwrap();
        assert!(ls.descent && ls.step > 0.0);
        let trial: Vec<f64> = [-6.0, -7.0, -10.0].iter().map(|d| 1.0 + ls.step * d).collect();
        let before = augmented_lagrangian(&p, &X0, &Y0).unwrap();
        assert!(augmented_lagrangian(&p, &trial, &Y0).unwrap() < before);
        assert!(trial.iter().all(|v| *v > 0.0));

        // boundary cap: x = 1, d = −10, θ = 0.99
        let one = ConvexProgram::new(
            "one",
            Objective::linear(vec![10.0]),
            ConstraintMatrix::from_rows(&[vec![0.0]]).unwrap(),
            vec![0.0],
            1,
            FlowParams::default(),
        )
        .unwrap();
        let cfg = StepperConfig::new(Variant::Explicit, 1.0);
        let ls = line_search(&one, &[1.0], &[0.0], &[-10.0], &cfg).unwrap();
        assert!((ls.max_step - 0.099).abs() < 1e-15);
        assert_eq!(ls.step, ls.max_step);
    }

    #[test]
    fn gauss_seidel_single_block_is_euler() {
        let p = builtin_problem("quartic_p12").unwrap();
        for h in [1e-3, 0.05, 0.3, 2.0] {
            let sweep = gauss_seidel_sweep(&p, &X0, &Y0, &BlockPartition::whole(3), &WeightVector::ones(3), h, 0.99).unwrap();
            let euler = crate::integrators::step_explicit_euler(&p, &TrajectoryState::new(0.0, X0.to_vec(), Y0.to_vec()), h, 0.99).unwrap();
            assert_eq!(sweep.x, euler.x, "h = {h}");
        }
        // W = c·I with one block equals explicit step h·c
        let c = 2.5;
        let sweep = gauss_seidel_sweep(&p, &X0, &Y0, &BlockPartition::whole(3), &WeightVector::new(vec![c; 3]).unwrap(), 0.004, 0.99).unwrap();
        let euler = crate::integrators::step_explicit_euler(&p, &TrajectoryState::new(0.0, X0.to_vec(), Y0.to_vec()), 0.004 * c, 0.99).unwrap();
        assert!(close(&sweep.x, &euler.x, 1e-15));
    }

    #[test]
    fn gauss_seidel_singletons_differ_but_reduce() {
        let p = builtin_problem("quartic_p12").unwrap();
        let h = 1e-3;
        let whole = gauss_seidel_sweep(&p, &X0, &Y0, &BlockPartition::whole(3), &WeightVector::ones(3), h, 0.99).unwrap();
        let single = gauss_seidel_sweep(&p, &X0, &Y0, &BlockPartition::singletons(3), &WeightVector::ones(3), h, 0.99).unwrap();
        assert_ne!(whole.x, single.x);
        let uz = |x: &[f64]| {
            let (u, z) = scaling_and_z(&p, x, &Y0).unwrap();
            norm2(&u.iter().zip(&z).map(|(a, b)| a * b).collect::<Vec<_>>())
        };
        let start = uz(&X0);
        assert!(uz(&whole.x) < start && uz(&single.x) < start);
    }

    #[test]
    fn partial_update_single_block_is_full_semi_implicit() {
        let p = builtin_problem("quartic_p12").unwrap();
        let cfg = StepperConfig { cg: tight(), ..StepperConfig::new(Variant::PartialUpdate, 0.3) };
        let sweep = partial_update_sweep(&p, &X0, &Y0, &BlockPartition::whole(3), 0.3, &cfg).unwrap();
        let d = direction_semi_implicit_full(&p, &X0, &Y0, 0.3, &cfg.cg).unwrap();
        let ls = line_search(&p, &X0, &Y0, &d.dx, &cfg).unwrap();
        let expect: Vec<f64> = X0.iter().zip(&d.dx).map(|(x, di)| x + ls.step * di).collect();
        assert!(close(&sweep.x, &expect, 1e-13));

        let single = partial_update_sweep(&p, &X0, &Y0, &BlockPartition::singletons(3), 0.3, &cfg).unwrap();
        let phi = |x: &[f64]| augmented_lagrangian(&p, x, &Y0).unwrap();
        assert!(phi(&single.x) < phi(&X0));
    }

    #[test]
    fn partition_validation() {
        assert!(BlockPartition::new(vec![vec![0, 2], vec![1]]).is_ok());
        assert!(BlockPartition::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(BlockPartition::new(vec![vec![0, 3], vec![1]]).is_err());
        assert!(BlockPartition::new(vec![vec![0], vec![]]).is_err());
        assert!(BlockPartition::new(vec![]).is_err());
        let c = BlockPartition::contiguous(5, 2).unwrap();
        assert_eq!(c.blocks(), &[vec![0, 1], vec![2, 3, 4]]);
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<BlockPartition>(&json).unwrap(), c);
        assert!(serde_json::from_str::<BlockPartition>("[[0],[0]]").is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = StepperConfig::default();
        assert!(cfg.validate(3).is_ok());
        cfg.backtrack_ratio = 1.0;
        assert!(cfg.validate(3).is_err());
        let cfg = StepperConfig { partition: Some(BlockPartition::whole(2)), ..StepperConfig::default() };
        assert!(matches!(cfg.validate(3), Err(Error::Dimension { .. })));
        assert_eq!("gauss_seidel".parse::<Variant>().unwrap(), Variant::GaussSeidel);
        assert!("newton".parse::<Variant>().is_err());
    }

    #[test]
    fn solve_from_kkt_point_takes_no_iterations() {
        let p = builtin_problem("simple_qp").unwrap();
        let out = solve(&p, &[0.5, 0.5], &[-0.5], &StepperConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.status, SolveStatus::Converged);
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn solve_simple_qp() {
        let p = builtin_problem("simple_qp").unwrap();
        let cfg = StepperConfig { kkt_tol: 1e-9, ..StepperConfig::default() };
        let out = solve(&p, &[0.9, 0.1], &[0.0], &cfg).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!(close(&out.x, &[0.5, 0.5], 1e-6), "{:?}", out.x);
    }

    #[test]
    fn solve_quartic_explicit() {
        let p = builtin_problem("quartic_p12").unwrap();
        let out = solve(&p, &X0, &Y0, &StepperConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!(close(&out.x, &[0.0, 0.0, 1.0], 1e-4));
        assert!(((out.y[0] + 2.0 * out.y[1]) / 3.0 + 1.0).abs() < 1e-3);
    }

    #[test]
    fn dual_update_post_also_converges() {
        let p = builtin_problem("quartic_p12").unwrap();
        let cfg = StepperConfig { dual_update: DualUpdate::Post, ..StepperConfig::default() };
        let out = solve(&p, &X0, &Y0, &cfg).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
    }

    #[test]
    fn iteration_csv_layout() {
        let p = builtin_problem("simple_qp").unwrap();
        let cfg = StepperConfig { max_iters: 3, ..StepperConfig::default() };
        let out = solve(&p, &[0.9, 0.1], &[0.0], &cfg).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,step,phi,kkt_max,norm_Ax_b,norm_U2z,cg_iters");
        assert_eq!(lines.count(), 4);
    }
}
