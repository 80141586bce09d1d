//! Potential functions, augmented Lagrangian, their time derivatives along the
//! flow, and KKT residuals.

use serde::{Deserialize, Serialize};

use crate::dynamics::{scaling_vector, FlowWorkspace};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, norm_inf};
use crate::problem::{ConvexProgram, PrimalDual};

/// Default threshold separating positive from zero coordinates.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-12;

/// Split of the sign-constrained indices into support `B` and zero set `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    pub support: Vec<usize>,
    pub zero: Vec<usize>,
}

impl SupportPattern {
    pub fn of(x: &[f64], s: usize, tol: f64) -> Self {
        let (support, zero) = (0..s).partition(|&i| x[i] > tol);
        SupportPattern { support, zero }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.support.binary_search(&i).is_ok()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.5..1.0).contains(&gamma) {
        return Err(Error::Parameter(format!(
            "potential requires gamma in [0.5, 1), got {gamma}"
        )));
    }
    Ok(())
}

/// `ln(x/a)` evaluated without cancellation when the ratio is near one.
fn log_ratio(x: f64, a: f64) -> f64 {
    let d = (x - a) / a;
    if d.abs() < 0.5 {
        d.ln_1p()
    } else {
        (x / a).ln()
    }
}

/// Single-coordinate potential term for `x_i` against a positive reference `a`.
fn support_term(x: f64, a: f64, gamma: f64) -> f64 {
    if gamma == 0.5 {
        // x − a − a ln(x/a)
        let l = log_ratio(x, a);
        let d = (x - a) / a;
        a * (d - l)
    } else {
        // a^p [ (r^p − 1)/p − (r^q − 1)/q ],  p = 2 − 2γ,  q = 1 − 2γ
        let p = 2.0 - 2.0 * gamma;
        let q = 1.0 - 2.0 * gamma;
        let l = log_ratio(x, a);
        a.powf(p) * ((p * l).exp_m1() / p - (q * l).exp_m1() / q)
    }
}

/// Distance-like potential `I(x, x′)`; `+∞` when the support of `x′` is not
/// contained in the support of `x`.
pub fn potential_i(x: &[f64], xprime: &[f64], gamma: f64, s: usize) -> Result<f64> {
    potential_i_with_tol(x, xprime, gamma, s, DEFAULT_SUPPORT_TOL)
}

pub fn potential_i_with_tol(
    x: &[f64],
    xprime: &[f64],
    gamma: f64,
    s: usize,
    tol: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    if x.len() != xprime.len() {
        return Err(Error::Dimension {
            what: "potential reference",
            expected: x.len(),
            got: xprime.len(),
        });
    }
    if s > x.len() {
        return Err(Error::Dimension {
            what: "nonnegativity count",
            expected: x.len(),
            got: s,
        });
    }
    let mut total: f64 = x[s..]
        .iter()
        .zip(&xprime[s..])
        .map(|(a, b)| 0.5 * (a - b) * (a - b))
        .sum();
    let p = 2.0 - 2.0 * gamma;
    for i in 0..s {
        let (xi, ai) = (x[i], xprime[i]);
        if ai > tol {
            if xi <= tol {
                return Ok(f64::INFINITY);
            }
            total += support_term(xi, ai, gamma);
        } else if gamma == 0.5 {
            total += xi - ai;
        } else {
            total += (xi.max(0.0).powf(p) - ai.max(0.0).powf(p)) / p;
        }
    }
    Ok(total)
}

/// `V(x, x′, y, y′) = I(x, x′) + ‖y − y′‖² / (2σ₂)`
pub fn potential_v(
    x: &[f64],
    xprime: &[f64],
    y: &[f64],
    yprime: &[f64],
    gamma: f64,
    s: usize,
    sigma2: f64,
) -> Result<f64> {
    let i = potential_i(x, xprime, gamma, s)?;
    Ok(i + dual_term(y, yprime, sigma2))
}

fn dual_term(y: &[f64], yprime: &[f64], sigma2: f64) -> f64 {
    y.iter().zip(yprime).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * sigma2)
}

/// `V₁(x, y) = V(x, x*, y, y*)` for a known optimal pair.
pub fn lyapunov_value(prog: &ConvexProgram, x: &[f64], y: &[f64], opt: &PrimalDual) -> Result<f64> {
    potential_v(x, &opt.x, y, &opt.y, prog.gamma(), prog.s(), prog.sigma2())
}

/// `f(x) + yᵀ(Ax − b) + (σ₁/2)‖Ax − b‖²`, or `+∞` outside the sign constraints.
pub fn augmented_lagrangian(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<f64> {
    prog.check_x(x)?;
    prog.check_y(y)?;
    if x[..prog.s()].iter().any(|&v| v < 0.0) {
        return Ok(f64::INFINITY);
    }
    let r = prog.constraint_residual(x)?;
    let f = prog.evaluate_objective(x)?;
    Ok(f + dot(y, &r) + 0.5 * prog.sigma1() * dot(&r, &r))
}

/// Time derivative of the augmented Lagrangian along the flow:
/// `−‖U z‖² + σ₂‖Ax − b‖²`.
pub fn lagrangian_derivative(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<f64> {
    prog.check_x(x)?;
    let u = scaling_vector(x, prog.gamma(), prog.s())?;
    let mut ws = FlowWorkspace::new(prog);
    let mut z = vec![0.0; prog.n()];
    ws.dual_residual(prog, x, y, &mut z)?;
    let uz: f64 = u.iter().zip(&z).map(|(ui, zi)| (ui * zi) * (ui * zi)).sum();
    Ok(-uz + prog.sigma2() * dot(ws.residual(), ws.residual()))
}

/// Time derivative of `V₁` along the flow:
/// `(x* − x)ᵀ∇f(x) − σ₁‖Ax − b‖² − (y*)ᵀ(Ax − b)`.
pub fn lyapunov_derivative(
    prog: &ConvexProgram,
    x: &[f64],
    _y: &[f64],
    xstar: &[f64],
    ystar: &[f64],
) -> Result<f64> {
    prog.check_x(xstar)?;
    prog.check_y(ystar)?;
    let g = prog.evaluate_gradient(x)?;
    let r = prog.constraint_residual(x)?;
    let toward: f64 = xstar.iter().zip(x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
    Ok(toward - prog.sigma1() * dot(&r, &r) - dot(ystar, &r))
}

/// KKT residuals at `(x, y)` with multiplier `z = ∇f(x) + Aᵀy`.
///
/// The dual value `L(y, z) = inf_x 𝓛(x, y, z)` has no closed form for a
/// general objective and is not reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖Ax − b‖`
    pub primal_feasibility: f64,
    /// `max(0, −min_{i<s} x_i)`
    pub nonneg_violation: f64,
    /// `max(0, −min_{i<s} z_i)`
    pub dual_feasibility: f64,
    /// `Σ_{i<s} |x_i z_i|`
    pub complementarity: f64,
    /// `max_{i≥s} |z_i|`
    pub stationarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal_feasibility
            .max(self.nonneg_violation)
            .max(self.dual_feasibility)
            .max(self.complementarity)
            .max(self.stationarity)
    }

    pub fn is_optimal(&self, eps: f64) -> bool {
        self.max_residual() <= eps
    }
}

pub fn kkt_multiplier(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    prog.check_y(y)?;
    let mut z = prog.evaluate_gradient(x)?;
    let mut aty = vec![0.0; prog.n()];
    prog.matrix().mul_t_vec(y, &mut aty);
    z.iter_mut().zip(&aty).for_each(|(zi, a)| *zi += a);
    Ok(z)
}

pub fn kkt_report(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<KktReport> {
    let z = kkt_multiplier(prog, x, y)?;
    let r = prog.constraint_residual(x)?;
    let s = prog.s();
    let min_x = x[..s].iter().copied().fold(f64::INFINITY, f64::min);
    let min_z = z[..s].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(KktReport {
        primal_feasibility: norm2(&r),
        nonneg_violation: (-min_x).max(0.0),
        dual_feasibility: (-min_z).max(0.0),
        complementarity: x[..s].iter().zip(&z[..s]).map(|(a, b)| (a * b).abs()).sum(),
        stationarity: norm_inf(&z[s..]),
    })
}

/// `(‖U²z‖, ‖z‖)` at an interior point.
pub fn stationarity_norm(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    prog.check_x(x)?;
    let u = scaling_vector(x, prog.gamma(), prog.s())?;
    let mut z = vec![0.0; prog.n()];
    FlowWorkspace::new(prog).dual_residual(prog, x, y, &mut z)?;
    let scaled: f64 = u
        .iter()
        .zip(&z)
        .map(|(ui, zi)| (ui * ui * zi).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((scaled, norm2(&z)))
}

/// Monitor columns attached to every trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorValues {
    /// `V₁`; absent when the program carries no known optimum.
    pub v1: Option<f64>,
    pub ltilde: f64,
    pub dltilde: f64,
    pub norm_ax_b: f64,
    pub norm_u2z: f64,
    pub kkt_max: f64,
}

impl MonitorValues {
    pub fn evaluate(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<Self> {
        let v1 = match prog.known_optimum() {
            Some(opt) => Some(lyapunov_value(prog, x, y, opt)?),
            None => None,
        };
        let r = prog.constraint_residual(x)?;
        Ok(MonitorValues {
            v1,
            ltilde: augmented_lagrangian(prog, x, y)?,
            dltilde: lagrangian_derivative(prog, x, y)?,
            norm_ax_b: norm2(&r),
            norm_u2z: stationarity_norm(prog, x, y)?.0,
            kkt_max: kkt_report(prog, x, y)?.max_residual(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use proptest::prelude::*;

    /// Direct transcription of the three-case potential, used as an oracle.
    fn potential_reference(x: &[f64], xp: &[f64], gamma: f64, s: usize) -> f64 {
        let mut total = 0.0;
        for i in s..x.len() {
            total += 0.5 * (x[i] - xp[i]).powi(2);
        }
        let support: Vec<usize> = (0..s).filter(|&i| xp[i] > 0.0).collect();
        if support.iter().any(|&i| x[i] <= 0.0) {
            return f64::INFINITY;
        }
        if gamma == 0.5 {
            total += (0..s).map(|i| x[i] - xp[i]).sum::<f64>();
            total -= support.iter().map(|&i| xp[i] * (x[i] / xp[i]).ln()).sum::<f64>();
        } else {
            let p = 2.0 - 2.0 * gamma;
            total += (0..s).map(|i| (x[i].powf(p) - xp[i].powf(p)) / p).sum::<f64>();
            total -= support
                .iter()
                .map(|&i| {
                    xp[i] / (1.0 - 2.0 * gamma)
                        * (1.0 / x[i].powf(2.0 * gamma - 1.0) - 1.0 / xp[i].powf(2.0 * gamma - 1.0))
                })
                .sum::<f64>();
        }
        total
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential_i(&[0.7, 2.0], &[0.7, 2.0], 0.75, 1).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let v = potential_i(&[e], &[1.0], 0.5, 1).unwrap();
        assert!((v - (e - 2.0)).abs() < 1e-15);
        assert!(potential_i(&[0.5, 0.0], &[1.0, 0.0], 0.75, 2).unwrap().is_finite());
        assert_eq!(potential_i(&[0.5, 0.0], &[0.0, 1.0], 0.75, 2).unwrap(), f64::INFINITY);
        assert!(potential_i(&[1.0], &[1.0], 1.0, 1).is_err());
        assert!(potential_i(&[1.0], &[1.0], 0.4, 1).is_err());
    }

    #[test]
    fn potential_v_examples() {
        let x = [0.3, 1.2, -0.4];
        assert_eq!(potential_v(&x, &x, &[1.0, 2.0], &[1.0, 2.0], 0.6, 2, 3.0).unwrap(), 0.0);
        let v = potential_v(&x, &x, &[2.0, 0.0], &[0.0, 0.0], 0.6, 2, 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        let xp = [0.9, 0.1, 0.4];
        let (y, yp) = ([0.5, -1.0], [1.5, 2.0]);
        let whole = potential_v(&x, &xp, &y, &yp, 0.8, 2, 0.5).unwrap();
        let parts = potential_i(&x, &xp, 0.8, 2).unwrap() + (1.0 + 9.0) / (2.0 * 0.5);
        assert!((whole - parts).abs() < 1e-14);
    }

    #[test]
    fn potential_matches_reference_formula() {
        let x = [0.2, 1.7, 0.05, 3.0];
        let xp = [1.0, 0.0, 0.3, -1.0];
        for gamma in [0.5, 0.6, 0.75, 0.9] {
            let ours = potential_i(&x, &xp, gamma, 3).unwrap();
            let reference = potential_reference(&x, &xp, gamma, 3);
            assert!((ours - reference).abs() < 1e-12 * (1.0 + reference.abs()), "{gamma}");
        }
    }

    #[test]
    fn potential_blows_up_at_boundary() {
        for gamma in [0.5, 0.75] {
            let mut last = 0.0;
            for k in 1..12 {
                let v = potential_i(&[10f64.powi(-k)], &[1.0], gamma, 1).unwrap();
                assert!(v > last);
                last = v;
            }
            assert!(last > 10.0);
        }
    }

    proptest! {
        #[test]
        fn potential_nonnegative(
            x in prop::collection::vec(1e-6f64..10.0, 4),
            xp in prop::collection::vec(0.0f64..10.0, 4),
            gamma in prop_oneof![Just(0.5), 0.5001f64..0.999],
        ) {
            let v = potential_i(&x, &xp, gamma, 3).unwrap();
            prop_assert!(v >= -1e-12 * (1.0 + xp.iter().sum::<f64>()));
            let zero = potential_i(&x, &x, gamma, 3).unwrap();
            prop_assert!(zero.abs() < 1e-12);
        }

        #[test]
        fn potential_positive_off_diagonal(
            a in 0.01f64..10.0,
            r in prop_oneof![0.01f64..0.99, 1.01f64..50.0],
            gamma in prop_oneof![Just(0.5), 0.51f64..0.99],
        ) {
            prop_assert!(potential_i(&[a * r], &[a], gamma, 1).unwrap() > 0.0);
        }
    }

    #[test]
    fn augmented_lagrangian_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        assert!((augmented_lagrangian(&p, &[1.0; 3], &[0.0, 1.0]).unwrap() - 11.0).abs() < 1e-14);
        let f = p.evaluate_objective(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(augmented_lagrangian(&p, &[0.0, 0.0, 1.0], &[3.0, -7.0]).unwrap(), f);
        assert_eq!(
            augmented_lagrangian(&p, &[-0.1, 0.0, 1.0], &[0.0, 0.0]).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn lagrangian_derivative_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        assert!((lagrangian_derivative(&p, &[1.0; 3], &[0.0, 1.0]).unwrap() + 183.0).abs() < 1e-12);
        let q = builtin_problem("simple_qp").unwrap();
        assert!(lagrangian_derivative(&q, &[0.5, 0.5], &[-0.5]).unwrap().abs() < 1e-15);
        // feasible, non-stationary
        assert!(lagrangian_derivative(&q, &[0.8, 0.2], &[0.0]).unwrap() < 0.0);
        assert!(lagrangian_derivative(&q, &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn lyapunov_derivative_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        let (xs, ys) = ([0.0, 0.0, 1.0], [-2.0, -0.5]);
        let d = lyapunov_derivative(&p, &[1.0; 3], &[0.0, 1.0], &xs, &ys).unwrap();
        assert!((d + 9.5).abs() < 1e-13);
        assert_eq!(lyapunov_derivative(&p, &xs, &[4.0, 4.0], &xs, &ys).unwrap(), 0.0);
    }

    #[test]
    fn kkt_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        let rep = kkt_report(&p, &[0.0, 0.0, 1.0], &[-2.0, -0.5]).unwrap();
        assert!(rep.max_residual() <= 1e-12, "{rep:?}");
        let z = kkt_multiplier(&p, &[0.0, 0.0, 1.0], &[-2.0, -0.5]).unwrap();
        assert!((z[1] - 1.5).abs() < 1e-14);
        let rep = kkt_report(&p, &[1.0; 3], &[0.0, 1.0]).unwrap();
        assert!((rep.primal_feasibility - 2f64.sqrt()).abs() < 1e-15);
        let q = builtin_problem("simple_qp").unwrap();
        assert!(kkt_report(&q, &[0.5, 0.5], &[-0.5]).unwrap().max_residual() <= 1e-12);
        // negative coordinate and multiplier
        let rep = kkt_report(&q, &[1.2, -0.2], &[0.0]).unwrap();
        assert!((rep.nonneg_violation - 0.2).abs() < 1e-15);
        assert!((rep.dual_feasibility - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stationarity_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        let (scaled, raw) = stationarity_norm(&p, &[1.0; 3], &[0.0, 1.0]).unwrap();
        let expect = (36.0f64 + 49.0 + 100.0).sqrt();
        assert!((scaled - expect).abs() < 1e-12 && (raw - expect).abs() < 1e-12);
        assert!((expect - 13.601).abs() < 1e-3);
        let q = builtin_problem("simple_qp").unwrap();
        assert_eq!(stationarity_norm(&q, &[0.5, 0.5], &[-0.5]).unwrap(), (0.0, 0.0));
        let (scaled, raw) = stationarity_norm(&p, &[1e-6, 1e-6, 1e-6], &[0.0, 1.0]).unwrap();
        assert!(scaled < 0.5 * raw);
    }

    #[test]
    fn support_pattern_partition() {
        let sp = SupportPattern::of(&[1.0, 0.0, 1e-13, 2.0, 5.0], 4, DEFAULT_SUPPORT_TOL);
        assert_eq!(sp.support, vec![0, 3]);
        assert_eq!(sp.zero, vec![1, 2]);
        assert!(sp.contains(3) && !sp.contains(4));
    }
}
