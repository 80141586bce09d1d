//! Right-hand side of the interior-point augmented Lagrangian flow
//!
//! ```text
//!     dx/dt = −U² z(x, y),     z(x, y) = ∇f(x) + Aᵀy + σ₁Aᵀ(Ax − b)
//!     dy/dt = σ₂ (Ax − b)
//! ```
//!
//! with `U = diag(u)`, `u_i = x_i^γ` on the sign-constrained block and `1`
//! elsewhere. The diagonal is kept as a vector; only products with `A` and
//! `Aᵀ` are needed.

use crate::error::{Error, Result};
use crate::problem::{ConvexProgram, TrajectoryState};

/// Smallest sign-constrained coordinate accepted by the scaling.
pub const MIN_SCALED_COORDINATE: f64 = 1e-300;

/// Diagonal of the scaling matrix `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVector(Vec<f64>);

impl ScalingVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ScalingVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn scaling_into(x: &[f64], gamma: f64, s: usize, out: &mut [f64]) -> Result<()> {
    for (i, (ui, &xi)) in out.iter_mut().zip(x).enumerate() {
        if i < s {
            if !(xi >= MIN_SCALED_COORDINATE) {
                return Err(Error::Domain { index: i, value: xi });
            }
            *ui = xi.powf(gamma);
        } else {
            *ui = 1.0;
        }
    }
    Ok(())
}

pub fn scaling_vector(x: &[f64], gamma: f64, s: usize) -> Result<ScalingVector> {
    if s > x.len() {
        return Err(Error::Dimension {
            what: "nonnegativity count",
            expected: x.len(),
            got: s,
        });
    }
    let mut u = vec![0.0; x.len()];
    scaling_into(x, gamma, s, &mut u)?;
    Ok(ScalingVector(u))
}

/// Reusable buffers for repeated evaluations of the flow on one program.
#[derive(Debug, Clone)]
pub struct FlowWorkspace {
    pub(crate) grad: Vec<f64>,
    pub(crate) residual: Vec<f64>,
    pub(crate) multiplier: Vec<f64>,
    pub(crate) u: Vec<f64>,
}

impl FlowWorkspace {
    pub fn new(prog: &ConvexProgram) -> Self {
        FlowWorkspace {
            grad: vec![0.0; prog.n()],
            residual: vec![0.0; prog.m()],
            multiplier: vec![0.0; prog.m()],
            u: vec![0.0; prog.n()],
        }
    }

    /// Writes `z(x, y)` into `z` and leaves `Ax − b` in `self.residual`.
    pub fn dual_residual(
        &mut self,
        prog: &ConvexProgram,
        x: &[f64],
        y: &[f64],
        z: &mut [f64],
    ) -> Result<()> {
        prog.check_y(y)?;
        prog.residual_into(x, &mut self.residual)?;
        prog.gradient_into(x, &mut self.grad)?;
        let sigma1 = prog.sigma1();
        for ((w, yi), ri) in self.multiplier.iter_mut().zip(y).zip(&self.residual) {
            *w = yi + sigma1 * ri;
        }
        prog.matrix().mul_t_vec(&self.multiplier, z);
        z.iter_mut().zip(&self.grad).for_each(|(zi, gi)| *zi += gi);
        Ok(())
    }

    /// Flow right-hand side; also leaves `u` and `Ax − b` in the workspace.
    pub fn rhs(
        &mut self,
        prog: &ConvexProgram,
        x: &[f64],
        y: &[f64],
        dx: &mut [f64],
        dy: &mut [f64],
    ) -> Result<()> {
        scaling_into(x, prog.gamma(), prog.s(), &mut self.u)?;
        self.dual_residual(prog, x, y, dx)?;
        for (d, ui) in dx.iter_mut().zip(&self.u) {
            *d = -(ui * ui * *d);
        }
        let sigma2 = prog.sigma2();
        for (d, ri) in dy.iter_mut().zip(&self.residual) {
            *d = sigma2 * ri;
        }
        Ok(())
    }

    pub fn scaling(&self) -> &[f64] {
        &self.u
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }
}

/// `z(x, y) = ∇f(x) + Aᵀy + σ₁Aᵀ(Ax − b)`
pub fn dual_residual(prog: &ConvexProgram, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    prog.check_x(x)?;
    let mut z = vec![0.0; prog.n()];
    FlowWorkspace::new(prog).dual_residual(prog, x, y, &mut z)?;
    Ok(z)
}

/// `(dx/dt, dy/dt)` at a state.
pub fn flow_rhs(prog: &ConvexProgram, state: &TrajectoryState) -> Result<(Vec<f64>, Vec<f64>)> {
    prog.check_x(&state.x)?;
    let mut dx = vec![0.0; prog.n()];
    let mut dy = vec![0.0; prog.m()];
    FlowWorkspace::new(prog).rhs(prog, &state.x, &state.y, &mut dx, &mut dy)?;
    Ok((dx, dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_inf, ConstraintMatrix};
    use crate::problem::{builtin_problem, FlowParams, Objective};
    use proptest::prelude::*;

    #[test]
    fn scaling_examples() {
        let u = scaling_vector(&[4.0, 9.0, 5.0], 0.5, 2).unwrap();
        assert_eq!(u.as_slice(), &[2.0, 3.0, 1.0]);
        let u = scaling_vector(&[1.0; 4], 0.8, 3).unwrap();
        assert_eq!(u.as_slice(), &[1.0; 4]);
        let u = scaling_vector(&[8.0, 2.0], 0.75, 2).unwrap();
        // oracle: exp(γ ln x)
        assert!((u[0] - (0.75 * 8f64.ln()).exp()).abs() < 1e-14);
        assert!((u[1] - (0.75 * 2f64.ln()).exp()).abs() < 1e-14);
        assert!((u[0] - 4.75683).abs() < 1e-5 && (u[1] - 1.68179).abs() < 1e-5);
    }

    #[test]
    fn scaling_rejects_boundary() {
        match scaling_vector(&[1.0, 0.0, -3.0], 0.75, 2) {
            Err(Error::Domain { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(scaling_vector(&[1e-301], 0.5, 1).is_err());
        // unconstrained coordinates may be anything
        assert!(scaling_vector(&[1.0, -5.0], 0.5, 1).is_ok());
    }

    #[test]
    fn dual_residual_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        let z = dual_residual(&p, &[0.0, 0.0, 1.0], &[-2.0, -0.5]).unwrap();
        assert!(z.iter().zip([0.0, 1.5, 0.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        let z = dual_residual(&p, &[1.0, 1.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(z.iter().zip([6.0, 7.0, 10.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        let zero = builtin_problem("zero_obj").unwrap();
        assert_eq!(dual_residual(&zero, &[0.3, 0.7], &[0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn flow_rhs_examples() {
        let p = builtin_problem("quartic_p12").unwrap();
        let (dx, dy) = flow_rhs(&p, &TrajectoryState::new(0.0, vec![1.0; 3], vec![0.0, 1.0])).unwrap();
        assert!(dx.iter().zip([-6.0, -7.0, -10.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        assert_eq!(dy, vec![1.0, 1.0]);

        let q = builtin_problem("simple_qp").unwrap();
        let (dx, dy) = flow_rhs(&q, &TrajectoryState::new(0.0, vec![0.5, 0.5], vec![-0.5])).unwrap();
        assert!(norm_inf(&dx) < 1e-15 && norm_inf(&dy) < 1e-15);
    }

    #[test]
    fn flow_rhs_unconstrained_start() {
        // s = 0, b = A x⁰: dx = −∇f(x⁰), dy = 0
        let x0 = vec![0.3, -1.2, 2.0];
        let a = ConstraintMatrix::from_rows(&[vec![1.0, 2.0, 0.5]]).unwrap();
        let mut b = vec![0.0];
        a.mul_vec(&x0, &mut b);
        let p = ConvexProgram::new(
            "free",
            Objective::quartic_norm(vec![1.0, 0.0, -1.0]),
            a,
            b,
            0,
            FlowParams::default(),
        )
        .unwrap();
        let (dx, dy) = flow_rhs(&p, &TrajectoryState::new(0.0, x0.clone(), vec![0.0])).unwrap();
        let g = p.evaluate_gradient(&x0).unwrap();
        assert!(dx.iter().zip(&g).all(|(d, gi)| (d + gi).abs() < 1e-15));
        assert!(dy[0].abs() < 1e-15);
    }

    #[test]
    fn flow_rhs_requires_interior() {
        let p = builtin_problem("quartic_p12").unwrap();
        let st = TrajectoryState::new(0.0, vec![1.0, 0.0, 1.0], vec![0.0, 0.0]);
        assert!(matches!(flow_rhs(&p, &st), Err(Error::Domain { index: 1, .. })));
    }

    proptest! {
        #[test]
        fn coordinate_bound_and_linearity(
            x in prop::collection::vec(1e-6f64..5.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 2),
            y2 in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let p = builtin_problem("quartic_p12").unwrap();
            let z = dual_residual(&p, &x, &y).unwrap();
            let (dx, dy) = flow_rhs(&p, &TrajectoryState::new(0.0, x.clone(), y.clone())).unwrap();
            let zmax = norm_inf(&z);
            for i in 0..3 {
                let bound = x[i].powf(2.0 * p.gamma()) * zmax;
                prop_assert!(dx[i].abs() <= bound * (1.0 + 1e-12));
            }
            let r = p.constraint_residual(&x).unwrap();
            prop_assert!(dy.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-15));

            // z(x,y) − z(x,y′) = Aᵀ(y − y′)
            let z2 = dual_residual(&p, &x, &y2).unwrap();
            let mut aty = vec![0.0; 3];
            p.matrix().mul_t_vec(&[y[0] - y2[0], y[1] - y2[1]], &mut aty);
            for i in 0..3 {
                prop_assert!((z[i] - z2[i] - aty[i]).abs() <= 1e-12 * (1.0 + z[i].abs()));
            }
        }

        #[test]
        fn dual_rate_vanishes_on_shifted_rhs(x in prop::collection::vec(0.01f64..3.0, 3)) {
            // b := A x makes dy ≡ 0
            let p = builtin_problem("quartic_p12").unwrap();
            let mut b = vec![0.0; 2];
            p.matrix().mul_vec(&x, &mut b);
            let shifted = ConvexProgram::new("shifted", p.objective().clone(), p.matrix().clone(), b, 3, p.params()).unwrap();
            let (_, dy) = flow_rhs(&shifted, &TrajectoryState::new(0.0, x, vec![0.3, -0.2])).unwrap();
            prop_assert!(dy.iter().all(|d| *d == 0.0));
        }
    }
}
