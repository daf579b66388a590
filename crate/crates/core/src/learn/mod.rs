//! System identification: regress finite-difference state increments on a
//! polynomial library augmented with the recorded `dB/dt` columns.
//!
//! With Euler-generated data the regression row identity is
//! `(x_{i+1} - x_i)/dt = b(x_i) + sigma(x_i) dB_i/dt`, so the noise rows of the
//! learned table estimate `sigma` and the polynomial rows estimate `b`.

mod table;

use rayon::prelude::*;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::scalar::Real;
use crate::sde::{
    DiffusionKind, DiffusionSpec, Drift, PolynomialDrift, SdeModel, TrajectoryRecord,
};

pub use table::CoefficientTable;

/// Stacked design matrix and targets.
#[derive(Debug, Clone)]
pub struct Regression<T> {
    pub basis: BasisSpec,
    /// `samples x basis.len()`
    pub theta: Matrix<T>,
    /// `samples x state_dim`
    pub targets: Matrix<T>,
}

impl<T: Real> Regression<T> {
    pub fn samples(&self) -> usize {
        self.theta.rows()
    }
}

/// Builds `Theta` (row `i` evaluated at `x_i` with rates `dB_i/dt`) and
/// `Y = (x_{i+1} - x_i)/dt` for every record, stacked in order.
pub fn build_regression<T: Real>(
    records: &[TrajectoryRecord<T>],
    basis: &BasisSpec,
) -> Result<Regression<T>> {
    if records.is_empty() {
        return Err(Error::TooFewSamples {
            rows: 0,
            columns: basis.len(),
        });
    }
    let n = basis.state_dim();
    for r in records {
        if r.state_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "trajectory state dimension",
                expected: n,
                actual: r.state_dim(),
            });
        }
        if r.increments().channels() < basis.required_noise_dim() {
            return Err(Error::DimensionMismatch {
                context: "trajectory noise channels",
                expected: basis.required_noise_dim(),
                actual: r.increments().channels(),
            });
        }
    }
    let rows: usize = records.iter().map(|r| r.steps()).sum();
    if rows < basis.len() {
        return Err(Error::TooFewSamples {
            rows,
            columns: basis.len(),
        });
    }
    let cols = basis.len();
    let blocks: Vec<(Vec<T>, Vec<T>)> = records
        .par_iter()
        .map(|rec| -> Result<(Vec<T>, Vec<T>)> {
            let steps = rec.steps();
            let dt = rec.dt();
            let mut theta = vec![T::zero(); steps * cols];
            let mut y = vec![T::zero(); steps * n];
            let mut rates = vec![T::zero(); rec.increments().channels()];
            for i in 0..steps {
                for (r, &db) in rates.iter_mut().zip(rec.increments().increment(i)) {
                    *r = db / dt;
                }
                let x = rec.state(i);
                basis.eval_design_row_into(
                    x,
                    Some(&rates),
                    &mut theta[i * cols..(i + 1) * cols],
                )?;
                let next = rec.state(i + 1);
                for k in 0..n {
                    y[i * n + k] = (next[k] - x[k]) / dt;
                }
            }
            Ok((theta, y))
        })
        .collect::<Result<_>>()?;
    let mut theta = Vec::with_capacity(rows * cols);
    let mut targets = Vec::with_capacity(rows * n);
    for (t, y) in blocks {
        theta.extend(t);
        targets.extend(y);
    }
    Ok(Regression {
        basis: basis.clone(),
        theta: Matrix::from_row_major(rows, cols, theta)?,
        targets: Matrix::from_row_major(rows, n, targets)?,
    })
}

/// Options for [`fit_least_squares`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T> {
    /// Hard threshold; `0` gives the dense least-squares solution.
    pub threshold: T,
    pub max_sweeps: usize,
    /// Relative pivot size below which a column counts as dependent.
    pub rank_tol: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            threshold: T::zero(),
            max_sweeps: 10,
            rank_tol: T::lit(1e3) * T::epsilon() * T::lit(64.0),
        }
    }
}

/// Fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport<T> {
    /// `sqrt(mean((Theta xi - Y)^2))` per component.
    pub residual_rms: Vec<T>,
    /// Condition estimate of the column-equilibrated design matrix.
    pub condition_estimate: T,
    pub samples: usize,
    pub sweeps: usize,
    /// False if thresholding hit `max_sweeps` without settling.
    pub converged: bool,
    /// Non-zero rows per component.
    pub active_terms: Vec<usize>,
}

/// Least squares per component via column-pivoted QR, optionally followed by
/// sequential hard thresholding (zero `|xi| < threshold`, refit survivors).
pub fn fit_least_squares<T: Real>(
    reg: &Regression<T>,
    opts: &FitOptions<T>,
) -> Result<(CoefficientTable<T>, RegressionReport<T>)> {
    let labels = reg.basis.labels();
    let with_labels = |e: Error| match e {
        Error::RankDeficient { columns, .. } => Error::RankDeficient {
            labels: columns.iter().map(|&c| labels[c].clone()).collect(),
            columns,
        },
        other => other,
    };
    let full = least_squares(&reg.theta, &reg.targets, opts.rank_tol).map_err(with_labels)?;
    let n = reg.targets.cols();
    let p = reg.theta.cols();
    let mut xi = full.solution;
    let mut sweeps = 0;
    let mut converged = true;

    if opts.threshold > T::zero() {
        converged = false;
        let mut active: Vec<Vec<bool>> = vec![vec![true; p]; n];
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut changed = false;
            for k in 0..n {
                for j in 0..p {
                    if active[k][j] && xi[(j, k)].abs() < opts.threshold {
                        active[k][j] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                converged = true;
                break;
            }
            for k in 0..n {
                let cols: Vec<usize> = (0..p).filter(|&j| active[k][j]).collect();
                for j in 0..p {
                    xi[(j, k)] = T::zero();
                }
                if cols.is_empty() {
                    continue;
                }
                let sub = reg.theta.select_columns(&cols);
                let y = reg.targets.select_columns(&[k]);
                let ls = least_squares(&sub, &y, opts.rank_tol).map_err(|e| match e {
                    Error::RankDeficient { columns, .. } => {
                        let cols_full: Vec<usize> = columns.iter().map(|&c| cols[c]).collect();
                        with_labels(Error::RankDeficient {
                            columns: cols_full,
                            labels: Vec::new(),
                        })
                    }
                    other => other,
                })?;
                for (jj, &j) in cols.iter().enumerate() {
                    xi[(j, k)] = ls.solution[(jj, 0)];
                }
            }
        }
    }

    let residual_rms = residual_rms(reg, &xi);
    let active_terms = (0..n)
        .map(|k| (0..p).filter(|&j| xi[(j, k)] != T::zero()).count())
        .collect();
    let report = RegressionReport {
        residual_rms,
        condition_estimate: full.condition_estimate,
        samples: reg.samples(),
        sweeps,
        converged,
        active_terms,
    };
    Ok((CoefficientTable::new(reg.basis.clone(), xi)?, report))
}

/// Row-wise residuals `Theta xi - Y` (samples x components).
pub fn residuals<T: Real>(reg: &Regression<T>, xi: &Matrix<T>) -> Matrix<T> {
    let n = reg.targets.cols();
    let mut out = Matrix::zeros(reg.samples(), n);
    for i in 0..reg.samples() {
        let row = reg.theta.row(i);
        for k in 0..n {
            let pred = row
                .iter()
                .enumerate()
                .fold(T::zero(), |s, (j, &v)| s + v * xi[(j, k)]);
            out[(i, k)] = pred - reg.targets[(i, k)];
        }
    }
    out
}

fn residual_rms<T: Real>(reg: &Regression<T>, xi: &Matrix<T>) -> Vec<T> {
    let r = residuals(reg, xi);
    let m = T::from_usize_lossy(r.rows().max(1));
    (0..r.cols())
        .map(|k| ((0..r.rows()).map(|i| r[(i, k)] * r[(i, k)]).sum::<T>() / m).sqrt())
        .collect()
}

/// Reads the learned drift and diagonal diffusion off a coefficient table.
///
/// Every component `k` needs a noise row for channel `k`, either `dBk/dt`
/// (additive) or `x_k dBk/dt` (multiplicative), and all channels must share
/// the same kind. Entries of a noise row in other components are cross-talk:
/// dropped when `|value| <= crosstalk_tol`, otherwise an error listing them.
pub fn extract_model<T: Real>(
    table: &CoefficientTable<T>,
    crosstalk_tol: T,
) -> Result<SdeModel<T>> {
    let basis = table.basis();
    let n = basis.state_dim();
    let p = basis.polynomial_len();
    let labels = basis.labels();

    let mut intensities = vec![T::zero(); n];
    let mut seen = vec![false; n];
    let mut kind: Option<DiffusionKind> = None;
    let mut crosstalk = Vec::new();
    for (c, col) in basis.noise_columns().iter().enumerate() {
        let row = p + c;
        let k = col.noise_index;
        if k >= n {
            return Err(Error::NoiseStructure(format!(
                "{} has no matching state component",
                labels[row]
            )));
        }
        let this_kind = match col.state_multiplier {
            None => DiffusionKind::Additive,
            Some(j) if j == k => DiffusionKind::DiagonalMultiplicative,
            Some(_) => {
                return Err(Error::NoiseStructure(format!(
                    "{} is not diagonal multiplicative noise",
                    labels[row]
                )))
            }
        };
        if kind.is_some_and(|existing| existing != this_kind) {
            return Err(Error::NoiseStructure(
                "mixed additive and multiplicative channels".into(),
            ));
        }
        kind = Some(this_kind);
        if seen[k] {
            return Err(Error::NoiseStructure(format!(
                "channel {} appears twice",
                k + 1
            )));
        }
        seen[k] = true;
        intensities[k] = table.xi()[(row, k)];
        for i in (0..n).filter(|&i| i != k) {
            let v = table.xi()[(row, i)];
            if v.abs() > crosstalk_tol {
                crosstalk.push((labels[row].clone(), i, v.to_f64_lossy()));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::NoiseStructure(format!(
            "no noise row for channel {}",
            missing + 1
        )));
    }
    if !crosstalk.is_empty() {
        return Err(Error::CrossTalk {
            tolerance: crosstalk_tol.to_f64_lossy(),
            entries: crosstalk,
        });
    }
    let coeffs = (0..n).map(|k| table.xi().column(k)[..p].to_vec()).collect();
    let drift = PolynomialDrift::new(basis.without_noise(), coeffs)?;
    let diffusion = DiffusionSpec {
        kind: kind.unwrap_or(DiffusionKind::Additive),
        intensities,
    };
    SdeModel::new(Drift::Polynomial(drift), diffusion, "learned")
}
