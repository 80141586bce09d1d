//! Primal first-order affine-scaling trajectory
//!
//! ```text
//!     dx/dt = −X P_AX X ∇f(x),    P_AX = I − XAᵀ(AX²Aᵀ)⁻¹AX
//! ```
//!
//! Every right-hand side evaluation forms and factors the `m × m` matrix
//! `AX²Aᵀ`. This is the comparison path whose conditioning degrades as the
//! trajectory approaches a degenerate optimum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{
    fmt_f64, integrate_field, IntegrationStats, IntegratorConfig, TerminalStatus, VectorField,
};
use crate::linalg::{norm2, ConstraintMatrix};
use crate::problem::ConvexProgram;

/// Feasibility drift that triggers a least-norm re-projection onto `Ax = b`.
pub const REPROJECTION_THRESHOLD: f64 = 1e-8;

/// Largest `m` for which the condition number is computed by a full
/// symmetric eigen-decomposition.
const DENSE_EIGEN_LIMIT: usize = 200;

fn require_full_sign_constraints(prog: &ConvexProgram) -> Result<()> {
    if prog.s() != prog.n() {
        return Err(Error::Precondition(format!(
            "affine scaling baseline needs every coordinate sign-constrained (s = {}, n = {})",
            prog.s(),
            prog.n()
        )));
    }
    Ok(())
}

fn to_dense(a: &ConstraintMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |r, c| a.entry(r, c))
}

/// `A diag(d) Aᵀ`
fn scaled_gram(a: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (mut col, di) in scaled.column_iter_mut().zip(d) {
        col *= *di;
    }
    &scaled * a.transpose()
}

fn spectral_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    if m.nrows() <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(m.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 0.0) || !max.is_finite() {
            return f64::INFINITY;
        }
        return (max / min).max(1.0);
    }
    iterative_condition(m)
}

/// Power iteration for `λ_max`, inverse iteration through a Cholesky factor
/// for `λ_min`.
fn iterative_condition(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => return f64::INFINITY,
    };
    let start = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    let rayleigh = |mul: &dyn Fn(&DVector<f64>) -> DVector<f64>| -> f64 {
        let mut v = start.normalize();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = mul(&v);
            let next = v.dot(&w);
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            v = w / norm;
            if (next - lambda).abs() <= 1e-10 * next.abs() {
                return next;
            }
            lambda = next;
        }
        lambda
    };
    let lmax = rayleigh(&|v| m * v);
    let inv_lmin = rayleigh(&|v| chol.solve(v));
    if !(inv_lmin > 0.0) {
        return f64::INFINITY;
    }
    (lmax * inv_lmin).max(1.0)
}

/// 2-norm condition number of `AX²Aᵀ`; `+∞` when numerically singular.
pub fn condition_number(prog: &ConvexProgram, x: &[f64]) -> Result<f64> {
    prog.check_x(x)?;
    let a = to_dense(prog.matrix());
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    Ok(spectral_condition(&scaled_gram(&a, &sq)))
}

/// Evaluates the affine-scaling right-hand side with a reusable dense copy of `A`.
#[derive(Debug, Clone)]
pub struct AffineScaling<'a> {
    prog: &'a ConvexProgram,
    a: DMatrix<f64>,
    theta: f64,
    reprojections: usize,
}

impl<'a> AffineScaling<'a> {
    pub fn new(prog: &'a ConvexProgram, theta: f64) -> Result<Self> {
        require_full_sign_constraints(prog)?;
        Ok(AffineScaling {
            prog,
            a: to_dense(prog.matrix()),
            theta,
            reprojections: 0,
        })
    }

    pub fn reprojections(&self) -> usize {
        self.reprojections
    }

    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (d, _) = self.project(x)?;
        out.copy_from_slice(d.as_slice());
        Ok(())
    }

    /// Direction and the solution `w` of `(AX²Aᵀ) w = A X g`.
    fn project(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        if let Some(i) = x.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Domain { index: i, value: x[i] });
        }
        let grad = self.prog.evaluate_gradient(x)?;
        // g = X∇f
        let g = DVector::from_iterator(x.len(), x.iter().zip(&grad).map(|(xi, gi)| xi * gi));
        let xs = DVector::from_column_slice(x);
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let gram = scaled_gram(&self.a, &sq);
        let chol = match gram.clone().cholesky() {
            Some(c) => c,
            None => {
                return Err(Error::Solve {
                    kappa: spectral_condition(&gram),
                })
            }
        };
        let axg = &self.a * xs.component_mul(&g);
        let mut w = chol.solve(&axg);
        let mut d = self.direction(&xs, &g, &w);
        let ad = &self.a * &d;
        if ad.norm() > 1e-10 * d.norm() {
            // one step of iterative refinement on the normal equations
            w += chol.solve(&ad);
            d = self.direction(&xs, &g, &w);
        }
        if !d.iter().chain(w.iter()).all(|v| v.is_finite()) {
            return Err(Error::Solve {
                kappa: spectral_condition(&gram),
            });
        }
        Ok((d, w))
    }

    /// `−X(g − XAᵀw)`
    fn direction(&self, xs: &DVector<f64>, g: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let xatw = xs.component_mul(&(self.a.transpose() * w));
        -xs.component_mul(&(g - xatw))
    }

    /// Least-norm correction `x ← x − Aᵀ(AAᵀ)⁻¹(Ax − b)`.
    fn reproject(&self, x: &mut [f64]) -> Result<()> {
        let r = DVector::from_vec(self.prog.constraint_residual(x)?);
        let aat = &self.a * self.a.transpose();
        let chol = aat.cholesky().ok_or(Error::Solve { kappa: f64::INFINITY })?;
        let corr = self.a.transpose() * chol.solve(&r);
        x.iter_mut().zip(corr.iter()).for_each(|(xi, c)| *xi -= c);
        Ok(())
    }
}

impl VectorField for AffineScaling<'_> {
    fn dim(&self) -> usize {
        self.prog.n()
    }

    fn eval(&mut self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs_into(state, out)
    }

    fn admissible(&self, prev: &[f64], next: &[f64]) -> bool {
        let keep = 1.0 - self.theta;
        prev.iter().zip(next).all(|(p, q)| *q >= keep * p && *q > 0.0)
    }

    fn after_step(&mut self, _t: f64, state: &mut [f64]) -> Result<bool> {
        let drift = norm2(&self.prog.constraint_residual(state)?);
        if drift > REPROJECTION_THRESHOLD {
            self.reproject(state)?;
            self.reprojections += 1;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Multiplier estimate `y = −(AX²Aᵀ)⁻¹AX²∇f` implied by the projection, so
/// that `∇f + Aᵀy` is the scaled reduced gradient.
pub fn affine_multiplier(prog: &ConvexProgram, x: &[f64]) -> Result<Vec<f64>> {
    prog.check_x(x)?;
    let (_, w) = AffineScaling::new(prog, 0.99)?.project(x)?;
    Ok(w.iter().map(|v| -v).collect())
}

/// `dx/dt` of the affine-scaling trajectory.
pub fn affine_scaling_rhs(prog: &ConvexProgram, x: &[f64]) -> Result<Vec<f64>> {
    prog.check_x(x)?;
    let field = AffineScaling::new(prog, 0.99)?;
    let mut out = vec![0.0; prog.n()];
    field.rhs_into(x, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineScalingSample {
    pub t: f64,
    pub x: Vec<f64>,
    /// Condition number of `AX²Aᵀ`; NaN when the sample closes a failed run.
    pub kappa: f64,
    pub norm_ax_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLog {
    pub samples: Vec<AffineScalingSample>,
    pub status: TerminalStatus,
    pub stats: IntegrationStats,
    /// Number of least-norm feasibility repairs applied.
    pub reprojections: usize,
}

impl AffineLog {
    pub fn last(&self) -> &AffineScalingSample {
        self.samples.last().expect("an affine log always holds the initial sample")
    }

    /// CSV with columns `t, x_1..x_n, norm_Ax_b, kappa, status`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["norm_Ax_b", "kappa", "status"].map(String::from));
        w.write_record(&header)?;
        let last = self.samples.len().saturating_sub(1);
        for (k, s) in self.samples.iter().enumerate() {
            let mut rec = vec![fmt_f64(s.t)];
            rec.extend(s.x.iter().map(|v| fmt_f64(*v)));
            rec.push(fmt_f64(s.norm_ax_b));
            rec.push(fmt_f64(s.kappa));
            rec.push(if k == last { self.status.label() } else { "ok" }.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates the affine-scaling trajectory from a strictly feasible `x0`.
pub fn integrate_affine(
    prog: &ConvexProgram,
    config: &IntegratorConfig,
    x0: &[f64],
    horizon: f64,
) -> Result<AffineLog> {
    prog.check_x(x0)?;
    require_full_sign_constraints(prog)?;
    if let Some(i) = x0.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Precondition(format!(
            "affine start must be strictly positive (x0[{i}] = {})",
            x0[i]
        )));
    }
    let drift = norm2(&prog.constraint_residual(x0)?);
    if drift > 1e-10 * (1.0 + norm2(prog.rhs())) {
        return Err(Error::Precondition(format!(
            "affine start is infeasible: ‖Ax0 − b‖ = {drift:e}"
        )));
    }
    let mut field = AffineScaling::new(prog, config.fraction_to_boundary)?;
    let sol = integrate_field(&mut field, config, 0.0, x0, horizon)?;
    let failed = matches!(sol.status, TerminalStatus::Failed { .. });
    let count = sol.times.len();
    let samples = sol
        .times
        .into_iter()
        .zip(sol.states)
        .enumerate()
        .map(|(k, (t, x))| {
            let kappa = if failed && k + 1 == count {
                f64::NAN
            } else {
                condition_number(prog, &x)?
            };
            let norm_ax_b = norm2(&prog.constraint_residual(&x)?);
            Ok(AffineScalingSample { t, x, kappa, norm_ax_b })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AffineLog {
        samples,
        status: sol.status,
        stats: sol.stats,
        reprojections: field.reprojections(),
    })
}
