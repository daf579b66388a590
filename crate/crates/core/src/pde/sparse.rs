//! Compressed sparse rows, ILU(0) and preconditioned BiCGStab.

use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

/// Square sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from per-row `(column, value)` lists. Duplicates are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sparse rows",
                expected: n,
                actual: rows.len(),
            });
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if c >= n {
                    return Err(Error::InvalidArgument(format!(
                        "column {c} out of range for size {n}"
                    )));
                }
                if cols.len() > start && cols[cols.len() - 1] == c {
                    let last = vals.len() - 1;
                    vals[last] = vals[last] + v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![T::one(); n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = T::zero();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s = s + self.vals[p] * x[self.cols[p]];
            }
            *yi = s;
        }
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0<T> {
    lu: CsrMatrix<T>,
    diag: Vec<usize>,
}

impl<T: Real> Ilu0<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for p in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[p] == i {
                    *d = p;
                }
            }
            if *d == usize::MAX {
                return Err(Error::Singular(format!("row {i} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.cols[p]] = p;
            }
            for p in start..end {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                let l = lu.vals[p] / pivot;
                lu.vals[p] = l;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.cols[q];
                    let target = pos[j];
                    if target != usize::MAX {
                        lu.vals[target] = lu.vals[target] - l * lu.vals[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.cols[p]] = usize::MAX;
            }
            let d = lu.vals[diag[i]];
            if d == T::zero() || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "zero pivot in incomplete factorization at row {i}"
                )));
            }
        }
        Ok(Self { lu, diag })
    }

    /// Solves `L U z = r`.
    pub fn apply(&self, r: &[T], z: &mut [T]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for p in lu.row_ptr[i]..self.diag[i] {
                s = s - lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s = s - lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = s / lu.vals[self.diag[i]];
        }
    }
}

/// Krylov solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: 5000,
        }
    }
}

/// Converged solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Final relative residual, recomputed from `b - A x`.
    pub residual: T,
}

/// Right-preconditioned BiCGStab from a zero initial guess.
pub fn bicgstab<T: Real>(
    a: &CsrMatrix<T>,
    pre: &Ilu0<T>,
    b: &[T],
    opts: &SolverOptions<T>,
) -> Result<SolveOutcome<T>> {
    let n = a.size();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "right-hand side",
            expected: n,
            actual: b.len(),
        });
    }
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(SolveOutcome {
            x,
            iterations: 0,
            residual: T::zero(),
        });
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut history = vec![T::one()];
    let true_residual = |x: &[T], buf: &mut Vec<T>| {
        a.matvec(x, buf);
        let r: Vec<T> = b.iter().zip(buf.iter()).map(|(&bi, &ai)| bi - ai).collect();
        norm2(&r) / bnorm
    };
    let mut scratch = vec![T::zero(); n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut y);
        a.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == T::zero() {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / bnorm <= opts.tol {
            for i in 0..n {
                x[i] = x[i] + alpha * y[i];
            }
            let res = true_residual(&x, &mut scratch);
            history.push(res);
            if res <= opts.tol {
                return Ok(SolveOutcome {
                    x,
                    iterations: it,
                    residual: res,
                });
            }
            r.copy_from_slice(&s);
            continue;
        }
        pre.apply(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == T::zero() {
            T::zero()
        } else {
            dot(&t, &s) / tt
        };
        for i in 0..n {
            x[i] = x[i] + alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            let res = true_residual(&x, &mut scratch);
            if res <= opts.tol {
                return Ok(SolveOutcome {
                    x,
                    iterations: it,
                    residual: res,
                });
            }
            // Recurrence drifted from the true residual: restart from x.
            a.matvec(&x, &mut scratch);
            for i in 0..n {
                r[i] = b[i] - scratch[i];
            }
        }
        if omega == T::zero() {
            break;
        }
    }
    let res = true_residual(&x, &mut scratch);
    Err(Error::NoConvergence {
        iterations: history.len() - 1,
        residual: res.to_f64_lossy(),
        history: history.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix<f64> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.2));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows).unwrap()
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::<f64>::identity(5);
        let pre = Ilu0::new(&a).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let out = bicgstab(&a, &pre, &b, &SolverOptions::default()).unwrap();
        assert_eq!(out.x, b);
    }

    #[test]
    fn tridiagonal_ilu_is_exact() {
        // ILU(0) of a tridiagonal matrix is its exact LU factorization.
        let a = laplace_1d(50);
        let pre = Ilu0::new(&a).unwrap();
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&x_true, &mut b);
        let mut z = vec![0.0; 50];
        pre.apply(&b, &mut z);
        for (u, v) in z.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
        let out = bicgstab(&a, &pre, &b, &SolverOptions::default()).unwrap();
        assert!(out.residual <= 1e-10);
        assert!(out.iterations <= 2);
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::<f64>::from_rows(
            2,
            vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![(1, 1.0)]],
        )
        .unwrap();
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn non_convergence_reports_history() {
        let a = laplace_1d(400);
        let id = Ilu0::new(&CsrMatrix::identity(400)).unwrap();
        let b = vec![1.0; 400];
        let opts = SolverOptions {
            tol: 1e-14,
            max_iter: 3,
        };
        match bicgstab(&a, &id, &b, &opts) {
            Err(Error::NoConvergence {
                iterations,
                history,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn missing_diagonal_rejected() {
        let a = CsrMatrix::<f64>::from_rows(2, vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert!(matches!(Ilu0::new(&a), Err(Error::Singular(_))));
    }
}
