//! Restarted GMRES with right diagonal preconditioning.
//!
//! Right preconditioning solves `A D⁻¹ y = b`, `x = D⁻¹ y`, so the residual
//! monitored by the iteration is the true residual of `A x = b`. Zero
//! diagonal entries (floating-potential columns) fall back to 1.
//!
//! Arnoldi uses modified Gram-Schmidt with a second pass when the new
//! vector lost most of its norm. All reductions run sequentially, so
//! iterates are deterministic for a deterministic operator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssemblyError, SystemMatrix};

/// Diagonal entries below this magnitude are replaced by 1.
pub const DIAGONAL_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("GMRES did not converge in {iterations} iterations (best relative residual {best_residual:e})")]
    NotConverged { iterations: usize, best_residual: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Anything that can apply itself to a vector.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for SystemMatrix {
    fn dim(&self) -> usize {
        SystemMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y).expect("dimensions checked by the solver");
    }

    fn diagonal(&self) -> Vec<f64> {
        SystemMatrix::diagonal(self)
    }
}

/// Small row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.data[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.n + i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub restart: usize,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Use the diagonal preconditioner.
    pub precondition: bool,
    /// Log the residual of every iteration at debug level.
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restart: 100,
            rel_tol: 1e-8,
            max_iters: 2000,
            precondition: true,
            verbose: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if self.restart == 0 {
            return Err(SolverError::InvalidConfig("restart must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Output of [`gmres`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Density coefficients, floating potentials and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Virtual density coefficient per collocation point.
    pub u: Vec<f64>,
    /// Potential per floating surface.
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean relative residual `‖b − A x‖ / ‖b‖` (absolute if `b = 0`).
pub fn residual(op: &dyn LinearOperator, x: &[f64], rhs: &[f64]) -> Result<f64, SolverError> {
    let n = op.dim();
    for len in [x.len(), rhs.len()] {
        if len != n {
            return Err(SolverError::DimensionMismatch { expected: n, found: len });
        }
    }
    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bn = norm(rhs);
    Ok(if bn > 0.0 { norm(&r) / bn } else { norm(&r) })
}

/// Solve `A x = b` with restarted GMRES.
pub fn gmres(op: &dyn LinearOperator, rhs: &[f64], config: &SolverConfig) -> Result<GmresOutcome, SolverError> {
    config.validate()?;
    let n = op.dim();
    if rhs.len() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let inv_diag: Vec<f64> = if config.precondition {
        op.diagonal()
            .iter()
            .map(|&d| if d.abs() < DIAGONAL_FLOOR { 1.0 } else { 1.0 / d })
            .collect()
    } else {
        vec![1.0; n]
    };

    let b_norm = norm(rhs);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }

    let m = config.restart.min(n).max(1);
    let mut iterations = 0;
    let mut best_residual = f64::INFINITY;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    loop {
        op.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        let rel = beta / b_norm;
        best_residual = best_residual.min(rel);
        if rel <= config.rel_tol {
            return Ok(GmresOutcome {
                x,
                iterations,
                residual: rel,
            });
        }
        if iterations >= config.max_iters {
            return Err(SolverError::NotConverged {
                iterations,
                best_residual,
            });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|ri| ri / beta).collect());
        // Hessenberg columns, rotated in place into upper triangular form.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;

        while k < m && iterations < config.max_iters {
            for ((zi, vi), di) in z.iter_mut().zip(&basis[k]).zip(&inv_diag) {
                *zi = vi * di;
            }
            op.apply(&z, &mut w);
            let before = norm(&w);
            let mut col = vec![0.0; k + 2];
            for (j, vj) in basis.iter().enumerate() {
                let hj = dot(&w, vj);
                col[j] = hj;
                w.iter_mut().zip(vj).for_each(|(wi, v)| *wi -= hj * v);
            }
            let mut after = norm(&w);
            if after < 0.7 * before {
                for (j, vj) in basis.iter().enumerate() {
                    let hj = dot(&w, vj);
                    col[j] += hj;
                    w.iter_mut().zip(vj).for_each(|(wi, v)| *wi -= hj * v);
                }
                after = norm(&w);
            }
            col[k + 1] = after;

            for j in 0..k {
                let t = cs[j] * col[j] + sn[j] * col[j + 1];
                col[j + 1] = -sn[j] * col[j] + cs[j] * col[j + 1];
                col[j] = t;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            col[k] = denom;
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push(c);
            sn.push(s);
            h.push(col);
            iterations += 1;
            k += 1;

            let estimate = g[k].abs() / b_norm;
            if config.verbose {
                log::debug!("gmres iteration {iterations}: residual estimate {estimate:e}");
            }
            if estimate <= config.rel_tol || after == 0.0 {
                break;
            }
            basis.push(w.iter().map(|wi| wi / after).collect());
        }

        // Back substitution for y, then x += D⁻¹ V y.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            for ((xi, vi), di) in x.iter_mut().zip(&basis[j]).zip(&inv_diag) {
                *xi += yj * vi * di;
            }
        }
    }
}

/// Solve the assembled system and split the result into densities and
/// floating potentials.
pub fn solve(matrix: &SystemMatrix, rhs: &[f64], config: &SolverConfig) -> Result<Solution, SolverError> {
    let out = gmres(matrix, rhs, config)?;
    let n = matrix.n_density();
    let mut u = out.x;
    let v = u.split_off(n);
    Ok(Solution {
        u,
        v,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// Gaussian elimination with partial pivoting, for small reference solves.
pub fn direct_solve(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[piv * n + col] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for k in row + 1..n {
            s -= m[row * n + k] * x[k];
        }
        x[row] = s / m[row * n + row];
    }
    Some(x)
}
