//! Small dense and sparse linear-algebra kernels used by the solvers:
//! pivoted Gaussian elimination, symmetric Jacobi eigenvalues, and a CSR
//! matrix with a conjugate-gradient solver.

use crate::error::{EpiError, Result};

/// Solves the dense system `A x = b` in place by partial-pivoted elimination.
pub fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(EpiError::LinearSolver(format!(
            "dense solve expects a square {n}x{n} system"
        )));
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() == 0.0 {
            return Err(EpiError::LinearSolver(format!(
                "singular matrix at elimination column {col}"
            )));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for col in (row + 1)..n {
            acc -= a[row][col] * x[col];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(EpiError::LinearSolver("eigenvalue input must be square".into()));
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Singular values of a rectangular matrix via eigenvalues of the Gram matrix.
pub fn singular_values(rows: &[Vec<f64>], cols: usize) -> Result<Vec<f64>> {
    let mut gram = vec![vec![0.0; cols]; cols];
    for row in rows {
        if row.len() != cols {
            return Err(EpiError::LinearSolver("ragged matrix in singular values".into()));
        }
        for i in 0..cols {
            for j in 0..cols {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    let eig = symmetric_eigenvalues(&gram)?;
    let mut sv: Vec<f64> = eig.into_iter().map(|x| x.max(0.0).sqrt()).collect();
    sv.reverse();
    Ok(sv)
}

/// Sparse symmetric matrix in compressed-sparse-row form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    /// Row start offsets, length `n + 1`.
    pub row_ptr: Vec<usize>,
    /// Column indices per stored entry.
    pub col_idx: Vec<usize>,
    /// Entry values matching `col_idx`.
    pub values: Vec<f64>,
    /// Matrix dimension.
    pub n: usize,
}

impl CsrMatrix {
    /// Builds a CSR matrix from per-row (column, value) lists.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            row_ptr,
            col_idx,
            values,
            n,
        }
    }

    /// Matrix-vector product `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[row] = acc;
        }
    }

    /// Sum of the entries in one row.
    pub fn row_sum(&self, row: usize) -> f64 {
        (self.row_ptr[row]..self.row_ptr[row + 1])
            .map(|k| self.values[k])
            .sum()
    }
}

/// Solves `(I + scale*A) x = b` by conjugate gradients, starting from `x = b`.
///
/// Starting at the right-hand side keeps every Krylov iterate in the affine
/// space whose defect is orthogonal to the constant vector when `A` has zero
/// row sums, which preserves the total of `b` exactly.
pub fn cg_shifted(
    a: &CsrMatrix,
    scale: f64,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = b.to_vec();
    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - x[i] - scale * ax[i]).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rel_tol * bnorm;
    let mut rr = r.iter().map(|v| v * v).sum::<f64>();
    if rr.sqrt() <= target {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let mut pap = 0.0;
        for i in 0..n {
            ap[i] = p[i] + scale * ap[i];
            pap += p[i] * ap[i];
        }
        if pap <= 0.0 {
            return Err(EpiError::LinearSolver(
                "conjugate gradients lost positive definiteness".into(),
            ));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = r.iter().map(|v| v * v).sum::<f64>();
        if rr_next.sqrt() <= target {
            return Ok(x);
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(EpiError::LinearSolver(format!(
        "conjugate gradients did not reach {rel_tol:e} within {max_iter} iterations"
    )))
}
