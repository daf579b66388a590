//! Small dense linear algebra: row-major matrices, column-pivoted Householder
//! least squares, and Jacobi eigenvalues for symmetric matrices.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Returns a matrix with the selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&mut self, c: T) {
        for v in &mut self.data {
            *v = *v * c;
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Solution of `min ||A x - B||_F` per right-hand-side column.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    /// `cols(A) x cols(B)`
    pub solution: Matrix<T>,
    /// `|R_11| / |R_nn|` of the column-equilibrated factorization.
    pub condition_estimate: T,
}

/// Column-pivoted Householder QR least squares.
///
/// Columns of `a` are scaled to unit norm first; a column whose pivot falls
/// below `rank_tol * |R_11|` makes the problem rank deficient and its index is
/// reported in the error.
pub fn least_squares<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    rank_tol: T,
) -> Result<LeastSquares<T>> {
    let (m, n) = (a.rows(), a.cols());
    if b.rows() != m {
        return Err(Error::DimensionMismatch {
            context: "least squares right-hand side",
            expected: m,
            actual: b.rows(),
        });
    }
    if m < n {
        return Err(Error::TooFewSamples {
            rows: m,
            columns: n,
        });
    }
    let p = b.cols();

    // column-major copies
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut rhs: Vec<Vec<T>> = (0..p).map(|j| b.column(j)).collect();

    let mut scale = vec![T::one(); n];
    let mut zero_cols = Vec::new();
    for (j, c) in cols.iter_mut().enumerate() {
        let s = crate::scalar::norm2(c);
        if s == T::zero() || !s.is_finite() {
            zero_cols.push(j);
            continue;
        }
        scale[j] = s;
        for v in c.iter_mut() {
            *v = *v / s;
        }
    }
    if !zero_cols.is_empty() {
        return Err(Error::RankDeficient {
            columns: zero_cols,
            labels: Vec::new(),
        });
    }

    let mut perm: Vec<usize> = (0..n).collect();
    let mut rdiag = vec![T::zero(); n];
    for k in 0..n {
        // pivot: largest remaining partial column norm
        let mut best = k;
        let mut best_norm = T::neg_infinity();
        for (j, c) in cols.iter().enumerate().skip(k) {
            let nrm = c[k..].iter().fold(T::zero(), |s, &v| s + v * v);
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        cols.swap(k, best);
        perm.swap(k, best);

        let alpha_abs = best_norm.sqrt();
        let x0 = cols[k][k];
        let alpha = if x0 >= T::zero() {
            -alpha_abs
        } else {
            alpha_abs
        };
        rdiag[k] = alpha;
        if alpha_abs == T::zero() {
            continue;
        }
        let mut v: Vec<T> = cols[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vv = v.iter().fold(T::zero(), |s, &x| s + x * x);
        if vv == T::zero() {
            continue;
        }
        let beta = T::lit(2.0) / vv;
        let reflect = |target: &mut [T]| {
            let d = v
                .iter()
                .zip(target.iter())
                .fold(T::zero(), |s, (&a, &b)| s + a * b);
            let f = beta * d;
            for (t, &vi) in target.iter_mut().zip(&v) {
                *t = *t - f * vi;
            }
        };
        for c in cols.iter_mut().skip(k + 1) {
            reflect(&mut c[k..]);
        }
        for r in rhs.iter_mut() {
            reflect(&mut r[k..]);
        }
        cols[k][k] = alpha;
    }

    let r00 = rdiag[0].abs();
    let deficient: Vec<usize> = (0..n)
        .filter(|&k| !(rdiag[k].abs() > rank_tol * r00))
        .map(|k| perm[k])
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: deficient,
            labels: Vec::new(),
        });
    }

    let mut solution = Matrix::zeros(n, p);
    for (c, r) in rhs.iter().enumerate() {
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut s = r[k];
            for (j, xj) in x.iter().enumerate().skip(k + 1) {
                s = s - cols[j][k] * *xj;
            }
            x[k] = s / rdiag[k];
        }
        for k in 0..n {
            let j = perm[k];
            solution[(j, c)] = x[k] / scale[j];
        }
    }
    let condition_estimate = r00 / rdiag[n - 1].abs();
    Ok(LeastSquares {
        solution,
        condition_estimate,
    })
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: &Matrix<T>) -> Vec<T> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "square matrix required");
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off + m[(i, j)] * m[(i, j)];
                }
            }
        }
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= T::epsilon() * T::epsilon() * (diag + off) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_system_recovered() {
        // Vandermonde-like system with a known solution.
        let xs: Vec<f64> = (0..50).map(|i| -1.0 + 2.0 * i as f64 / 49.0).collect();
        let a = Matrix::from_rows(
            &xs.iter()
                .map(|&x| vec![1.0, x, x * x, x * x * x])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let truth = [0.5, -1.25, 2.0, 0.75];
        let b = Matrix::from_rows(
            &xs.iter()
                .map(|&x| vec![truth[0] + truth[1] * x + truth[2] * x * x + truth[3] * x * x * x])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let ls = least_squares(&a, &b, 1e-12).unwrap();
        for (k, t) in truth.iter().enumerate() {
            assert!((ls.solution[(k, 0)] - t).abs() < 1e-12);
        }
        assert!(ls.condition_estimate >= 1.0);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        let a = Matrix::<f64>::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ])
        .unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![2.0], vec![5.0]]).unwrap();
        let ls = least_squares(&a, &b, 1e-12).unwrap();
        // closed form for a line fit
        let (n, sx, sy, sxx, sxy) = (4.0, 6.0, 10.0, 14.0, 21.0);
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        assert!((ls.solution[(0, 0)] - icpt).abs() < 1e-12);
        assert!((ls.solution[(1, 0)] - slope).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_reports_column() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0, 1.0],
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, -1.0],
            vec![1.0, 2.0, 0.5],
        ])
        .unwrap();
        let b = Matrix::zeros(4, 1);
        match least_squares(&a, &b, 1e-10) {
            Err(Error::RankDeficient { columns, .. }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0] == 0 || columns[0] == 1);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn zero_column_is_deficient() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let b = Matrix::zeros(3, 1);
        assert!(matches!(
            least_squares(&a, &b, 1e-12),
            Err(Error::RankDeficient { columns, .. }) if columns == vec![1]
        ));
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = Matrix::<f64>::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 5.0],
        ])
        .unwrap();
        let ev = symmetric_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
        assert!((ev[2] - 5.0).abs() < 1e-12);
    }
}
