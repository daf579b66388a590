use std::fmt::Write as _;

use crate::basis::{enumerate_terms, parse_label, variable_names, BasisSpec, ParsedLabel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::report::fmt_sci;
use crate::scalar::Real;

/// Learned weights: one row per library column, one column per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable<T> {
    basis: BasisSpec,
    xi: Matrix<T>,
}

impl<T: Real> CoefficientTable<T> {
    pub fn new(basis: BasisSpec, xi: Matrix<T>) -> Result<Self> {
        if xi.rows() != basis.len() {
            return Err(Error::DimensionMismatch {
                context: "coefficient rows",
                expected: basis.len(),
                actual: xi.rows(),
            });
        }
        if xi.cols() != basis.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "coefficient columns",
                expected: basis.state_dim(),
                actual: xi.cols(),
            });
        }
        Ok(Self { basis, xi })
    }

    pub fn zeros(basis: BasisSpec) -> Self {
        let xi = Matrix::zeros(basis.len(), basis.state_dim());
        Self { basis, xi }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn xi(&self) -> &Matrix<T> {
        &self.xi
    }

    pub fn xi_mut(&mut self) -> &mut Matrix<T> {
        &mut self.xi
    }

    pub fn state_dim(&self) -> usize {
        self.basis.state_dim()
    }

    pub fn labels(&self) -> Vec<String> {
        self.basis.labels()
    }

    /// Coefficient column `xi^k` of component `k`.
    pub fn component(&self, k: usize) -> Vec<T> {
        self.xi.column(k)
    }

    pub fn get(&self, label: &str, component: usize) -> Option<T> {
        let row = self.labels().iter().position(|l| l == label)?;
        Some(self.xi[(row, component)])
    }

    /// Labeled text table: a header `basis dx/dt dy/dt ...` and one row per
    /// library column, values in scientific notation with 8 significant digits.
    pub fn to_text(&self) -> String {
        let n = self.state_dim();
        let labels = self.labels();
        let width = labels.iter().map(String::len).max().unwrap_or(5).max(5) + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "basis");
        for name in variable_names(n) {
            let _ = write!(out, "{:>16}", format!("d{name}/dt"));
        }
        out.push('\n');
        for (r, label) in labels.iter().enumerate() {
            let _ = write!(out, "{label:<width$}");
            for c in 0..n {
                let _ = write!(out, "{:>16}", fmt_sci(self.xi[(r, c)].to_f64_lossy(), 8));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. The library is reconstructed
    /// from the row labels and must be a complete graded basis.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "empty coefficient table".into(),
        })?;
        let n = header.split_whitespace().count().saturating_sub(1);
        if n == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "header has no component columns".into(),
            });
        }
        let mut terms = Vec::new();
        let mut noise = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines {
            let mut parts = line.split_whitespace();
            let label = parts.next().unwrap_or_default();
            let parsed = parse_label(label, n).ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("unrecognized basis label `{label}`"),
            })?;
            let row = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            if row.len() != n {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {n} values, got {}", row.len()),
                });
            }
            match parsed {
                ParsedLabel::Term(t) => {
                    if !noise.is_empty() {
                        return Err(Error::Parse {
                            line: lineno + 1,
                            message: "polynomial row after noise rows".into(),
                        });
                    }
                    terms.push(t);
                }
                ParsedLabel::Noise(c) => noise.push(c),
            }
            values.push(row);
        }
        let degree = terms.iter().map(|t| t.degree()).max().unwrap_or(0);
        if terms != enumerate_terms(n, degree) {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "rows do not form the complete degree-{degree} basis in {n} variables"
                ),
            });
        }
        let basis = BasisSpec::new(n, degree, noise)?;
        let data = values.into_iter().flatten().map(T::lit).collect();
        let xi = Matrix::from_row_major(basis.len(), n, data)?;
        Self::new(basis, xi)
    }
}
