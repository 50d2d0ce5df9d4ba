//! Minimal dense linear algebra for the solvers.
//!
//! Row-major `f64` matrices with the three operations the code learners
//! need: products, a symmetric eigendecomposition (cyclic Jacobi, intended
//! for the small square matrices that show up here), and regularized
//! least-squares solves through the normal equations.
//!
//! Everything is deterministic: `matmul` may split work across threads but
//! each output cell is accumulated in a fixed index order, so results are
//! bitwise identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense row-major matrix. All stored values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting NaN/Inf and length
    /// mismatches.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Matrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Matrix {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard product; parallel over output rows, fixed per-cell
    /// summation order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                lhs: (self.rows, self.cols),
                rhs: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let n = other.cols;
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| {
                let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
                for (k, &aik) in a_row.iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    let b_row = &other.data[k * n..(k + 1) * n];
                    for (o, &b) in out_row.iter_mut().zip(b_row) {
                        *o += aik * b;
                    }
                }
            });
        Ok(out)
    }

    /// Gram matrix selfᵀ·self, exploiting symmetry.
    pub fn gram(&self) -> Matrix {
        let t = self.transpose();
        let d = self.cols;
        let mut out = Matrix::zeros(d, d);
        let rows: Vec<(usize, Vec<f64>)> = (0..d)
            .into_par_iter()
            .map(|i| {
                let ri = t.row(i);
                let mut row = vec![0.0; d];
                for j in i..d {
                    let rj = t.row(j);
                    let mut acc = 0.0;
                    for (a, b) in ri.iter().zip(rj) {
                        acc += a * b;
                    }
                    row[j] = acc;
                }
                (i, row)
            })
            .collect();
        for (i, row) in rows {
            for j in i..d {
                out.data[i * d + j] = row[j];
                out.data[j * d + i] = row[j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "add",
                lhs: (self.rows, self.cols),
                rhs: (other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "sub",
                lhs: (self.rows, self.cols),
                rhs: (other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).sum()
    }
}

/// Eigendecomposition of a symmetric matrix: eigenvalues in descending
/// order, eigenvectors as orthonormal columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

/// Full spectrum of a (nearly) symmetric matrix.
///
/// The input is symmetrized internally as (M + Mᵀ)/2, reduced to
/// tridiagonal form by Householder reflections and diagonalized with the
/// implicit-shift QL iteration, accumulating the orthogonal transforms
/// (the classic EISPACK tred2/tql2 pair). Deterministic and fast enough
/// for the anchor-sized matrices the solvers hand it.
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    if m.rows != m.cols {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    if n == 0 {
        return Ok(SymEig {
            eigenvalues: Vec::new(),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }

    // v = (M + Mᵀ)/2; overwritten with the accumulated transforms.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = 0.5 * (m.data[i * n + j] + m.data[j * n + i]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e, n);
    tql2(&mut v, &mut d, &mut e, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        d[j].partial_cmp(&d[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors.data[i * n + col] = v[i * n + src];
        }
    }

    Ok(SymEig {
        eigenvalues,
        eigenvectors: vectors,
    })
}

// Householder reduction to tridiagonal form with accumulated transforms,
// after Bowdler, Martin, Reinsch, and Wilkinson (EISPACK tred2 by way of
// JAMA). On exit `v` holds the orthogonal matrix, `d` the diagonal and
// `e` the subdiagonal.
fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }

    for i in (1..n).rev() {
        // Scale to avoid under/overflow.
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            // Generate Householder vector.
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            // Apply similarity transformation to remaining columns.
            for j in 0..i {
                let f = d[j];
                v[j * n + i] = f;
                let mut g = e[j] + v[j * n + j] * f;
                for k in j + 1..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..n - 1 {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit-shift QL iteration on the tridiagonal form, after Bowdler,
// Martin, Reinsch, and Wilkinson (EISPACK tql2 by way of JAMA).
fn tql2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = 2.0f64.powi(-52);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 100 {
                    return Err(Error::InvalidArgument(
                        "eigenvalue iteration failed to converge".into(),
                    ));
                }

                // Implicit shift.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // QL transformation.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    // Accumulate in the eigenvector columns i, i+1.
                    for k in 0..n {
                        let h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Cholesky factor (lower triangular, row-major full storage) of a
/// symmetric positive-definite matrix. Fails with `Singular` when a pivot
/// collapses relative to the matrix scale.
fn cholesky(g: &Matrix) -> Result<Vec<f64>> {
    let n = g.rows;
    let mut l = vec![0.0; n * n];
    let scale = (0..n)
        .map(|i| g.data[i * n + i].abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g.data[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= tol {
                    return Err(Error::Singular);
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves G·X = B for symmetric positive-definite G.
pub fn sym_solve(g: &Matrix, b: &Matrix) -> Result<Matrix> {
    if g.rows != g.cols {
        return Err(Error::NotSquare {
            rows: g.rows,
            cols: g.cols,
        });
    }
    if g.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "sym_solve",
            lhs: (g.rows, g.cols),
            rhs: (b.rows, b.cols),
        });
    }
    let n = g.rows;
    let k = b.cols;
    let l = cholesky(g)?;
    let mut x = b.data.clone();
    // Forward: L·Y = B.
    for i in 0..n {
        for kk in 0..k {
            let mut sum = x[i * k + kk];
            for j in 0..i {
                sum -= l[i * n + j] * x[j * k + kk];
            }
            x[i * k + kk] = sum / l[i * n + i];
        }
    }
    // Backward: Lᵀ·X = Y.
    for i in (0..n).rev() {
        for kk in 0..k {
            let mut sum = x[i * k + kk];
            for j in i + 1..n {
                sum -= l[j * n + i] * x[j * k + kk];
            }
            x[i * k + kk] = sum / l[i * n + i];
        }
    }
    Matrix::from_vec(n, k, x)
}

/// Regularized least-squares solve: returns rhs·X·(XᵀX + ridge·I)⁻¹.
///
/// With `ridge = 0` this is the plain normal-equations solution; a
/// rank-deficient system is reported as `Singular` rather than returning
/// garbage.
pub fn ridge_solve(x: &Matrix, rhs: &Matrix, ridge: f64) -> Result<Matrix> {
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    if rhs.cols != x.rows {
        return Err(Error::DimensionMismatch {
            op: "ridge_solve",
            lhs: (rhs.rows, rhs.cols),
            rhs: (x.rows, x.cols),
        });
    }
    let d = x.cols;
    let mut g = x.gram();
    for i in 0..d {
        g.data[i * d + i] += ridge;
    }
    let t = rhs.matmul(x)?; // m x d
    let sol_t = sym_solve(&g, &t.transpose())?; // d x m
    Ok(sol_t.transpose())
}

/// Default ridge used when a caller does not pin one: 1e-6·trace(XᵀX)/d.
pub fn default_ridge(x: &Matrix) -> f64 {
    let d = x.cols.max(1);
    let mut tr = 0.0;
    for i in 0..x.rows {
        for j in 0..x.cols {
            let v = x.data[i * x.cols + j];
            tr += v * v;
        }
    }
    1e-6 * tr / d as f64
}
