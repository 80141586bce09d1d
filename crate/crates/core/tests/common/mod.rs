//! Random instances and dense reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use ipalm::linalg::ConstraintMatrix;
use ipalm::problem::{builtin_problem, ConvexProgram, FlowParams, Objective, BUILTIN_NAMES};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A strictly convex quadratic program with a random interior point.
pub struct Instance {
    pub prog: ConvexProgram,
    pub q: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: f64,
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> Instance {
    let n = rng.gen_range(2..=max_n);
    let m = rng.gen_range(1..n);
    let s = rng.gen_range(0..=n);
    let b_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = b_mat.transpose() * &b_mat / n as f64 + DMatrix::identity(n, n) * 0.1;
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let rows: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let params = FlowParams::new(rng.gen_range(0.5..0.95), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)).unwrap();
    let q_flat: Vec<f64> = q.transpose().iter().copied().collect();
    let prog = ConvexProgram::new(
        "random",
        Objective::quadratic(q_flat, c).unwrap(),
        ConstraintMatrix::from_rows(&rows).unwrap(),
        b,
        s,
        params,
    )
    .unwrap();
    let x = (0..n)
        .map(|i| if i < s { rng.gen_range(0.1..2.0) } else { rng.gen_range(-2.0..2.0) })
        .collect();
    let y = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Instance {
        prog,
        q,
        a,
        x,
        y,
        h: rng.gen_range(0.1..2.0),
    }
}

/// Random partition of `0..n` into `p` nonempty blocks.
pub fn random_blocks(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let mut blocks: Vec<Vec<usize>> = idx[..p].iter().map(|&i| vec![i]).collect();
    for &i in &idx[p..] {
        let k = rng.gen_range(0..p);
        blocks[k].push(i);
    }
    blocks
}

impl Instance {
    pub fn u(&self) -> Vec<f64> {
        let g = self.prog.gamma();
        (0..self.prog.n())
            .map(|i| if i < self.prog.s() { self.x[i].powf(g) } else { 1.0 })
            .collect()
    }

    /// `z = Qx + c + Aᵀ(y + σ₁(Ax − b))` computed densely.
    pub fn z(&self) -> DVector<f64> {
        let x = DVector::from_column_slice(&self.x);
        let grad = DVector::from_vec(self.prog.evaluate_gradient(&self.x).unwrap());
        let r = &self.a * &x - DVector::from_column_slice(self.prog.rhs());
        grad + self.a.transpose() * (DVector::from_column_slice(&self.y) + r * self.prog.sigma1())
    }

    /// Dense solve of `(I + hU M U)_BB w = (Uz)_B`, returned as `−U_B w` in
    /// full length; `M = Q` or `Q + σ₁AᵀA`.
    pub fn dense_direction(&self, penalty: bool, block: Option<&[usize]>) -> Vec<f64> {
        let n = self.prog.n();
        let idx: Vec<usize> = block.map_or_else(|| (0..n).collect(), <[usize]>::to_vec);
        let u = self.u();
        let z = self.z();
        let mut m = self.q.clone();
        if penalty {
            m += self.a.transpose() * &self.a * self.prog.sigma1();
        }
        let k = idx.len();
        let sys = DMatrix::from_fn(k, k, |r, c| {
            let (i, j) = (idx[r], idx[c]);
            (if r == c { 1.0 } else { 0.0 }) + self.h * u[i] * m[(i, j)] * u[j]
        });
        let rhs = DVector::from_iterator(k, idx.iter().map(|&i| u[i] * z[i]));
        let w = sys.lu().solve(&rhs).expect("identity plus PSD is invertible");
        let mut d = vec![0.0; n];
        for (r, &i) in idx.iter().enumerate() {
            d[i] = -u[i] * w[r];
        }
        d
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Largest relative central-difference mismatch of the gradient and of
/// Hessian-vector products over `points` random interior points.
pub fn finite_difference_mismatch(prog: &ConvexProgram, points: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let n = prog.n();
    let (mut worst_g, mut worst_hv) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
        let g = prog.evaluate_gradient(&x).unwrap();
        let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            let eps = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (prog.evaluate_objective(&xp).unwrap() - prog.evaluate_objective(&xm).unwrap()) / (2.0 * eps);
            worst_g = worst_g.max((fd - g[i]).abs() / scale);
        }
        if prog.objective().has_hessian_vector() {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hv = prog.hessian_vector_product(&x, &v).unwrap();
            let eps = 1e-5;
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
            let gp = prog.evaluate_gradient(&xp).unwrap();
            let gm = prog.evaluate_gradient(&xm).unwrap();
            let hscale = hv.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                worst_hv = worst_hv.max((fd - hv[i]).abs() / hscale);
            }
        }
    }
    (worst_g, worst_hv)
}

pub fn builtins() -> Vec<ConvexProgram> {
    BUILTIN_NAMES.iter().map(|n| builtin_problem(n).unwrap()).collect()
}
