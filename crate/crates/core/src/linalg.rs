//! Small vector kernels, the constraint matrix storage and a matrix-free
//! conjugate gradient solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Equality constraint matrix. Only products with the matrix and its
/// transpose are exposed; no factorization is ever taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum ConstraintMatrix {
    /// Row-major dense storage.
    Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    /// Compressed sparse rows.
    Csr {
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    },
}

impl ConstraintMatrix {
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "dense matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(ConstraintMatrix::Dense { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    what: "matrix row",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::dense(rows.len(), cols, data)
    }

    /// Builds CSR storage from (row, col, value) triplets. Duplicates are summed.
    pub fn csr_from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::Dimension {
                what: "sparse entry index",
                expected: rows.max(cols),
                got: r.max(c),
            });
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(ConstraintMatrix::Csr {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        match self {
            ConstraintMatrix::Dense { rows, .. } | ConstraintMatrix::Csr { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ConstraintMatrix::Dense { cols, .. } | ConstraintMatrix::Csr { cols, .. } => *cols,
        }
    }

    /// Storage-level consistency check, used after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintMatrix::Dense { rows, cols, data } => {
                if data.len() != rows * cols {
                    return Err(Error::Dimension {
                        what: "dense matrix data",
                        expected: rows * cols,
                        got: data.len(),
                    });
                }
            }
            ConstraintMatrix::Csr {
                rows,
                cols,
                row_ptr,
                col_idx,
                values,
            } => {
                if row_ptr.len() != rows + 1 || col_idx.len() != values.len() {
                    return Err(Error::Config("malformed CSR arrays".into()));
                }
                if row_ptr.windows(2).any(|w| w[0] > w[1]) || row_ptr[*rows] != values.len() {
                    return Err(Error::Config("CSR row pointers are not monotone".into()));
                }
                if col_idx.iter().any(|&c| c >= *cols) {
                    return Err(Error::Config("CSR column index out of range".into()));
                }
            }
        }
        Ok(())
    }

    /// `out = A v`
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        match self {
            ConstraintMatrix::Dense { cols, data, .. } => {
                for (o, row) in out.iter_mut().zip(data.chunks_exact((*cols).max(1))) {
                    *o = dot(row, v);
                }
                if *cols == 0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
            ConstraintMatrix::Csr {
                row_ptr,
                col_idx,
                values,
                ..
            } => {
                for (r, o) in out.iter_mut().enumerate() {
                    let span = row_ptr[r]..row_ptr[r + 1];
                    *o = col_idx[span.clone()]
                        .iter()
                        .zip(&values[span])
                        .map(|(&c, a)| a * v[c])
                        .sum();
                }
            }
        }
    }

    /// `out = Aᵀ w`
    pub fn mul_t_vec(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.rows());
        debug_assert_eq!(out.len(), self.cols());
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            ConstraintMatrix::Dense { cols, data, .. } => {
                if *cols == 0 {
                    return;
                }
                for (wr, row) in w.iter().zip(data.chunks_exact(*cols)) {
                    axpy(*wr, row, out);
                }
            }
            ConstraintMatrix::Csr {
                row_ptr,
                col_idx,
                values,
                ..
            } => {
                for (r, wr) in w.iter().enumerate() {
                    for k in row_ptr[r]..row_ptr[r + 1] {
                        out[col_idx[k]] += values[k] * wr;
                    }
                }
            }
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        match self {
            ConstraintMatrix::Dense { cols, data, .. } => data[r * cols + c],
            ConstraintMatrix::Csr {
                row_ptr,
                col_idx,
                values,
                ..
            } => (row_ptr[r]..row_ptr[r + 1])
                .find(|&k| col_idx[k] == c)
                .map_or(0.0, |k| values[k]),
        }
    }
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `M w = rhs` for a symmetric positive definite operator given only
/// through `apply(v, out)`. Stops once `‖r‖ ≤ tol·‖rhs‖`.
///
/// `jacobi` is an optional inverse diagonal used as preconditioner.
pub fn conjugate_gradient<F>(
    mut apply: F,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
    jacobi: Option<&[f64]>,
) -> Result<CgOutcome>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let rhs_norm = norm2(rhs);
    let mut w = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            solution: w,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let precondition = |r: &[f64], z: &mut [f64]| match jacobi {
        Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(zi, (ri, di))| *zi = ri * di),
        None => z.copy_from_slice(r),
    };

    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut mp = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;

    for k in 0..max_iters {
        apply(&p, &mut mp);
        let curvature = dot(&p, &mp);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(Error::Solver {
                iterations: k,
                residual: rel,
            });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut w);
        axpy(-alpha, &mp, &mut r);
        rel = norm2(&r) / rhs_norm;
        if rel <= tol {
            return Ok(CgOutcome {
                solution: w,
                iterations: k + 1,
                relative_residual: rel,
            });
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::Solver {
        iterations: max_iters,
        residual: rel,
    })
}
