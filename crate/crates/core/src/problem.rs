//! Linearly constrained convex programs
//!
//! ```text
//!     min f(x)   s.t.  A x = b,   x_i >= 0 for i < s
//! ```
//!
//! together with the flow parameters (scaling exponent, penalty weight and
//! dual rate) and the built-in test problems.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, ConstraintMatrix};

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type HessianVectorFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Objective oracle: value, gradient and an optional Hessian-vector product,
/// each supplied as an independent callback.
#[derive(Clone)]
pub struct Objective {
    label: String,
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
    hessian_vector: Option<Arc<HessianVectorFn>>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("label", &self.label)
            .field("hessian_vector", &self.hessian_vector.is_some())
            .finish()
    }
}

impl Objective {
    pub fn new<V, G>(label: impl Into<String>, value: V, gradient: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Objective {
            label: label.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian_vector: None,
        }
    }

    pub fn with_hessian_vector<H>(mut self, hv: H) -> Self
    where
        H: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.hessian_vector = Some(Arc::new(hv));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_hessian_vector(&self) -> bool {
        self.hessian_vector.is_some()
    }

    /// `f(x) = 0`
    pub fn zero() -> Self {
        Objective::new("zero", |_| 0.0, |_, g| g.iter_mut().for_each(|v| *v = 0.0))
            .with_hessian_vector(|_, _, out| out.iter_mut().for_each(|v| *v = 0.0))
    }

    /// `f(x) = cᵀx`
    pub fn linear(c: Vec<f64>) -> Self {
        let c = Arc::new(c);
        let cg = Arc::clone(&c);
        Objective::new("linear", move |x| dot(&c, x), move |_, g| g.copy_from_slice(&cg))
            .with_hessian_vector(|_, _, out| out.iter_mut().for_each(|v| *v = 0.0))
    }

    /// `f(x) = ½ xᵀQx + cᵀx` with `Q` dense row-major and symmetric positive semidefinite.
    pub fn quadratic(q: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if q.len() != n * n {
            return Err(Error::Dimension {
                what: "quadratic term",
                expected: n * n,
                got: q.len(),
            });
        }
        let q = Arc::new(q);
        let c = Arc::new(c);
        let (qv, cv) = (Arc::clone(&q), Arc::clone(&c));
        let (qg, cg) = (Arc::clone(&q), Arc::clone(&c));
        let qh = Arc::clone(&q);
        let mul = move |q: &[f64], v: &[f64], out: &mut [f64]| {
            for (o, row) in out.iter_mut().zip(q.chunks_exact(n.max(1))) {
                *o = dot(row, v);
            }
        };
        Ok(Objective::new(
            "quadratic",
            move |x| {
                let mut qx = vec![0.0; n];
                mul(&qv, x, &mut qx);
                0.5 * dot(x, &qx) + dot(&cv, x)
            },
            move |x, g| {
                mul(&qg, x, g);
                g.iter_mut().zip(cg.iter()).for_each(|(gi, ci)| *gi += ci);
            },
        )
        .with_hessian_vector(move |_, v, out| mul(&qh, v, out)))
    }

    /// `f(x) = (1/24)‖x + c‖⁴ + cᵀx`
    pub fn quartic_norm(c: Vec<f64>) -> Self {
        let c = Arc::new(c);
        let (cv, cg, ch) = (Arc::clone(&c), Arc::clone(&c), Arc::clone(&c));
        let shifted_sq = |x: &[f64], c: &[f64]| -> f64 {
            x.iter().zip(c).map(|(xi, ci)| (xi + ci) * (xi + ci)).sum()
        };
        Objective::new(
            "quartic_norm",
            move |x| {
                let r2 = shifted_sq(x, &cv);
                r2 * r2 / 24.0 + dot(&cv, x)
            },
            move |x, g| {
                let r2 = shifted_sq(x, &cg);
                for ((gi, xi), ci) in g.iter_mut().zip(x).zip(cg.iter()) {
                    *gi = r2 / 6.0 * (xi + ci) + ci;
                }
            },
        )
        .with_hessian_vector(move |x, v, out| {
            // (1/6)(‖w‖² v + 2 (wᵀv) w),  w = x + c
            let r2 = shifted_sq(x, &ch);
            let wv: f64 = x.iter().zip(ch.iter()).zip(v).map(|((xi, ci), vi)| (xi + ci) * vi).sum();
            for (((o, xi), ci), vi) in out.iter_mut().zip(x).zip(ch.iter()).zip(v) {
                *o = (r2 * vi + 2.0 * wv * (xi + ci)) / 6.0;
            }
        })
    }
}

/// Flow parameters: scaling exponent γ, penalty σ₁ and dual rate σ₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub gamma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Admit γ = 1 (the affine-scaling exponent). Convergence results only
    /// cover γ ∈ [1/2, 1), so this is opt-in.
    #[serde(default)]
    pub allow_unit_gamma: bool,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            gamma: 0.75,
            sigma1: 1.0,
            sigma2: 1.0,
            allow_unit_gamma: false,
        }
    }
}

impl FlowParams {
    pub fn new(gamma: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        let p = FlowParams {
            gamma,
            sigma1,
            sigma2,
            allow_unit_gamma: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let gamma_ok = (0.5..1.0).contains(&self.gamma) || (self.allow_unit_gamma && self.gamma == 1.0);
        if !gamma_ok {
            return Err(Error::Parameter(format!(
                "gamma must lie in [0.5, 1), got {}",
                self.gamma
            )));
        }
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite()) {
            return Err(Error::Parameter(format!("sigma1 must be positive, got {}", self.sigma1)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Parameter(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// A known primal-dual optimal pair, used by the Lyapunov monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDual {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Point on the flow: time, primal and multiplier vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TrajectoryState {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>) -> Self {
        TrajectoryState { t, x, y }
    }
}

/// Immutable convex program with its evaluation oracles.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    name: String,
    objective: Objective,
    a: ConstraintMatrix,
    b: Vec<f64>,
    s: usize,
    params: FlowParams,
    known_optimum: Option<PrimalDual>,
    default_start: Option<PrimalDual>,
    affine_start: Option<Vec<f64>>,
}

impl ConvexProgram {
    pub fn new(
        name: impl Into<String>,
        objective: Objective,
        a: ConstraintMatrix,
        b: Vec<f64>,
        s: usize,
        params: FlowParams,
    ) -> Result<Self> {
        a.validate()?;
        if b.len() != a.rows() {
            return Err(Error::Dimension {
                what: "right-hand side b",
                expected: a.rows(),
                got: b.len(),
            });
        }
        if s > a.cols() {
            return Err(Error::Parameter(format!(
                "nonnegativity count s = {s} exceeds n = {}",
                a.cols()
            )));
        }
        if a.cols() == 0 {
            return Err(Error::Parameter("n must be positive".into()));
        }
        params.validate()?;
        Ok(ConvexProgram {
            name: name.into(),
            objective,
            a,
            b,
            s,
            params,
            known_optimum: None,
            default_start: None,
            affine_start: None,
        })
    }

    pub fn with_known_optimum(mut self, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        self.check_x(&x)?;
        self.check_y(&y)?;
        self.known_optimum = Some(PrimalDual { x, y });
        Ok(self)
    }

    pub fn with_default_start(mut self, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        self.check_x(&x)?;
        self.check_y(&y)?;
        self.default_start = Some(PrimalDual { x, y });
        Ok(self)
    }

    pub fn with_affine_start(mut self, x: Vec<f64>) -> Result<Self> {
        self.check_x(&x)?;
        self.affine_start = Some(x);
        Ok(self)
    }

    /// Same program with different flow parameters.
    pub fn with_params(mut self, params: FlowParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n(&self) -> usize {
        self.a.cols()
    }
    pub fn m(&self) -> usize {
        self.a.rows()
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn params(&self) -> FlowParams {
        self.params
    }
    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }
    pub fn sigma1(&self) -> f64 {
        self.params.sigma1
    }
    pub fn sigma2(&self) -> f64 {
        self.params.sigma2
    }
    pub fn matrix(&self) -> &ConstraintMatrix {
        &self.a
    }
    pub fn rhs(&self) -> &[f64] {
        &self.b
    }
    pub fn objective(&self) -> &Objective {
        &self.objective
    }
    pub fn known_optimum(&self) -> Option<&PrimalDual> {
        self.known_optimum.as_ref()
    }
    pub fn default_start(&self) -> Option<&PrimalDual> {
        self.default_start.as_ref()
    }
    pub fn affine_start(&self) -> Option<&[f64]> {
        self.affine_start.as_deref()
    }

    pub(crate) fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension {
                what: "x",
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.m() {
            return Err(Error::Dimension {
                what: "y",
                expected: self.m(),
                got: y.len(),
            });
        }
        Ok(())
    }

    fn non_finite(v: &[f64]) -> Vec<usize> {
        v.iter()
            .enumerate()
            .filter(|(_, x)| !x.is_finite())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn evaluate_objective(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let bad = Self::non_finite(x);
        if !bad.is_empty() {
            return Err(Error::Evaluation { coords: bad });
        }
        let f = (self.objective.value)(x);
        if !f.is_finite() {
            return Err(Error::Evaluation { coords: Vec::new() });
        }
        Ok(f)
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        (self.objective.gradient)(x, out);
        let bad = Self::non_finite(out);
        if !bad.is_empty() {
            return Err(Error::Evaluation { coords: bad });
        }
        Ok(())
    }

    pub fn evaluate_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.n()];
        self.gradient_into(x, &mut g)?;
        Ok(g)
    }

    pub fn hessian_vector_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let hv = self
            .objective
            .hessian_vector
            .as_ref()
            .ok_or(Error::Capability("objective has no Hessian-vector oracle"))?;
        self.check_x(x)?;
        self.check_x(v)?;
        hv(x, v, out);
        let bad = Self::non_finite(out);
        if !bad.is_empty() {
            return Err(Error::Evaluation { coords: bad });
        }
        Ok(())
    }

    pub fn hessian_vector_product(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.hessian_vector_into(x, v, &mut out)?;
        Ok(out)
    }

    pub fn residual_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        if out.len() != self.m() {
            return Err(Error::Dimension {
                what: "residual buffer",
                expected: self.m(),
                got: out.len(),
            });
        }
        self.a.mul_vec(x, out);
        out.iter_mut().zip(&self.b).for_each(|(o, bi)| *o -= bi);
        Ok(())
    }

    /// `A x − b`
    pub fn constraint_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.m()];
        self.residual_into(x, &mut r)?;
        Ok(r)
    }

    /// Whether `x_i > 0` for every sign-constrained coordinate.
    pub fn is_interior(&self, x: &[f64]) -> bool {
        x[..self.s].iter().all(|&v| v > 0.0)
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["quartic_p12", "simple_qp", "degenerate_lp", "zero_obj"];

/// Constructs one of the built-in programs (γ = 0.75, σ₁ = σ₂ = 1).
///
/// * `quartic_p12`: `f = (1/24)‖x+c‖⁴ + cᵀx`, `c = (1,1,1)`, `A = [[1,0,1],[0,1,2]]`,
///   `b = (1,2)`, all three coordinates nonnegative. Unique optimum `(0,0,1)`.
/// * `simple_qp`: `min ½‖x‖²` s.t. `x₁ + x₂ = 1`, `x ≥ 0`.
/// * `degenerate_lp`: `min x₁ + x₂` on the `quartic_p12` feasible set; `AX²Aᵀ`
///   is singular at the optimum `(0,0,1)`.
/// * `zero_obj`: `f = 0` on `x₁ + x₂ = 1`, `x ≥ 0`.
pub fn builtin_problem(name: &str) -> Result<ConvexProgram> {
    let params = FlowParams::default();
    let p12_matrix = || ConstraintMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 2.0]]);
    let simplex = || ConstraintMatrix::from_rows(&[vec![1.0, 1.0]]);
    match name {
        "quartic_p12" => ConvexProgram::new(
            name,
            Objective::quartic_norm(vec![1.0; 3]),
            p12_matrix()?,
            vec![1.0, 2.0],
            3,
            params,
        )?
        .with_known_optimum(vec![0.0, 0.0, 1.0], vec![-2.0, -0.5])?
        .with_default_start(vec![1.0, 1.0, 1.0], vec![0.0, 1.0])?
        .with_affine_start(vec![0.5, 1.0, 0.5]),
        "simple_qp" => ConvexProgram::new(
            name,
            Objective::quadratic(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0])?,
            simplex()?,
            vec![1.0],
            2,
            params,
        )?
        .with_known_optimum(vec![0.5, 0.5], vec![-0.5])?
        .with_default_start(vec![0.9, 0.1], vec![0.0])?
        .with_affine_start(vec![0.9, 0.1]),
        "degenerate_lp" => ConvexProgram::new(
            name,
            Objective::linear(vec![1.0, 1.0, 0.0]),
            p12_matrix()?,
            vec![1.0, 2.0],
            3,
            params,
        )?
        .with_known_optimum(vec![0.0, 0.0, 1.0], vec![0.0, 0.0])?
        .with_default_start(vec![1.0, 1.0, 1.0], vec![0.0, 0.0])?
        .with_affine_start(vec![0.5, 1.0, 0.5]),
        "zero_obj" => ConvexProgram::new(name, Objective::zero(), simplex()?, vec![1.0], 2, params)?
            .with_known_optimum(vec![0.5, 0.5], vec![0.0])?
            .with_default_start(vec![0.9, 0.1], vec![0.0])?
            .with_affine_start(vec![0.9, 0.1]),
        _ => Err(Error::Lookup {
            kind: "problem",
            name: name.to_string(),
            available: BUILTIN_NAMES.to_vec(),
        }),
    }
}

/// Current schema version of [`ProblemFile`].
pub const PROBLEM_SCHEMA_VERSION: u32 = 1;

/// Polynomial objective description used by problem files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolynomialSpec {
    Zero,
    Linear { c: Vec<f64> },
    /// `½ xᵀQx + cᵀx`, `q` row-major.
    Quadratic { q: Vec<f64>, c: Vec<f64> },
    /// `(1/24)‖x+c‖⁴ + cᵀx`
    QuarticNorm { c: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectiveSpec {
    /// Objective of the named built-in problem.
    Builtin(String),
    Polynomial(PolynomialSpec),
}

/// On-disk problem definition (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub sigma1: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
    /// Dense row-major `m × n` matrix.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default)]
    pub x_star: Option<Vec<f64>>,
    #[serde(default)]
    pub y_star: Option<Vec<f64>>,
}

fn default_gamma() -> f64 {
    0.75
}
fn one() -> f64 {
    1.0
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn into_program(self) -> Result<ConvexProgram> {
        if self.schema_version != PROBLEM_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported problem schema_version {} (expected {PROBLEM_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let objective = match self.objective {
            ObjectiveSpec::Builtin(name) => builtin_problem(&name)?.objective.clone(),
            ObjectiveSpec::Polynomial(PolynomialSpec::Zero) => Objective::zero(),
            ObjectiveSpec::Polynomial(PolynomialSpec::Linear { c }) => {
                check_len("linear c", self.n, c.len())?;
                Objective::linear(c)
            }
            ObjectiveSpec::Polynomial(PolynomialSpec::Quadratic { q, c }) => {
                check_len("quadratic c", self.n, c.len())?;
                Objective::quadratic(q, c)?
            }
            ObjectiveSpec::Polynomial(PolynomialSpec::QuarticNorm { c }) => {
                check_len("quartic c", self.n, c.len())?;
                Objective::quartic_norm(c)
            }
        };
        let a = ConstraintMatrix::dense(self.m, self.n, self.a)?;
        let params = FlowParams::new(self.gamma, self.sigma1, self.sigma2)?;
        let name = self.name.unwrap_or_else(|| "file".to_string());
        let mut prog = ConvexProgram::new(name, objective, a, self.b, self.s, params)?;
        if let (Some(x), Some(y)) = (self.x_star, self.y_star) {
            prog = prog.with_known_optimum(x, y)?;
        }
        if let Some(x0) = self.x0 {
            let y0 = self.y0.unwrap_or_else(|| vec![0.0; prog.m()]);
            prog = prog.with_default_start(x0, y0)?;
        }
        Ok(prog)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// Resolves a built-in name or a path to a JSON problem file.
pub fn resolve_problem(spec: &str) -> Result<ConvexProgram> {
    if BUILTIN_NAMES.contains(&spec) {
        return builtin_problem(spec);
    }
    let path = Path::new(spec);
    if path.exists() {
        return ProblemFile::load(path)?.into_program();
    }
    Err(Error::Lookup {
        kind: "problem",
        name: spec.to_string(),
        available: BUILTIN_NAMES.to_vec(),
    })
}
