//! Multivariate polynomial libraries plus Brownian-increment columns.
//!
//! A [`BasisSpec`] is the single source of truth for column ordering. Its
//! polynomial terms are all monomials of total degree `<= max_degree`, graded
//! and, within one degree, ordered lexicographically with the first variable
//! dominant:
//!
//! ```text
//! 1, x, y, x^2, xy, y^2, x^3, x^2y, xy^2, y^3, ...
//! 1, x, y, z, x^2, xy, xz, y^2, yz, z^2, ...
//! ```
//!
//! Noise columns (`dB_k/dt`, or `x_j dB_k/dt` for multiplicative noise)
//! always follow the polynomial columns in the order they were declared.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exponent vector of one monomial term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Naive evaluation via `powi`; the hot paths use [`BasisSpec::eval_monomials`].
    pub fn eval<T: Real>(&self, state: &[T]) -> T {
        self.exponents
            .iter()
            .zip(state)
            .fold(T::one(), |acc, (&e, &x)| acc * x.powi(e as i32))
    }

    /// Label in the style of the coefficient tables (`1`, `x`, `x^2y`, `xyz`).
    pub fn label(&self) -> String {
        let names = variable_names(self.dim());
        let mut s = String::new();
        for (name, &e) in names.iter().zip(&self.exponents) {
            match e {
                0 => {}
                1 => s.push_str(name),
                _ => {
                    s.push_str(name);
                    s.push('^');
                    s.push_str(&e.to_string());
                }
            }
        }
        if s.is_empty() {
            s.push('1');
        }
        s
    }
}

/// Variable names used in labels: `x, y, z` up to three dimensions, `x1..xn` beyond.
pub fn variable_names(n: usize) -> Vec<String> {
    if n <= 3 {
        ["x", "y", "z"][..n].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|i| format!("x{i}")).collect()
    }
}

/// A Brownian-derivative column of the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseColumn {
    /// Channel `k` of `dB_k/dt`, zero based.
    pub noise_index: usize,
    /// `Some(j)` for the multiplicative column `x_j dB_k/dt`.
    pub state_multiplier: Option<usize>,
}

impl NoiseColumn {
    pub fn additive(noise_index: usize) -> Self {
        Self {
            noise_index,
            state_multiplier: None,
        }
    }

    pub fn multiplicative(noise_index: usize, state_index: usize) -> Self {
        Self {
            noise_index,
            state_multiplier: Some(state_index),
        }
    }

    pub fn label(&self, state_dim: usize) -> String {
        let k = self.noise_index + 1;
        match self.state_multiplier {
            None => format!("dB{k}/dt"),
            Some(j) => format!("{}dB{k}/dt", variable_names(state_dim.max(j + 1))[j]),
        }
    }
}

/// Per-channel noise structure as written in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BasisSpecRepr {
    state_dim: usize,
    max_degree: u32,
    #[serde(default)]
    noise: Vec<NoiseKind>,
}

/// Library definition: state dimension, total degree, and noise columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpecRepr", into = "BasisSpecRepr")]
pub struct BasisSpec {
    state_dim: usize,
    max_degree: u32,
    noise_columns: Vec<NoiseColumn>,
    terms: Vec<Monomial>,
}

impl BasisSpec {
    pub fn new(state_dim: usize, max_degree: u32, noise_columns: Vec<NoiseColumn>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state_dim must be >= 1".into()));
        }
        for c in &noise_columns {
            if let Some(j) = c.state_multiplier {
                if j >= state_dim {
                    return Err(Error::InvalidArgument(format!(
                        "noise column multiplier x{} exceeds state dimension {state_dim}",
                        j + 1
                    )));
                }
            }
        }
        Ok(Self {
            state_dim,
            max_degree,
            terms: enumerate_terms(state_dim, max_degree),
            noise_columns,
        })
    }

    /// Pure polynomial library without noise columns.
    pub fn polynomial(state_dim: usize, max_degree: u32) -> Result<Self> {
        Self::new(state_dim, max_degree, Vec::new())
    }

    /// One column per channel; channel `k` multiplies `x_k` when multiplicative.
    pub fn with_noise_kinds(
        state_dim: usize,
        max_degree: u32,
        kinds: &[NoiseKind],
    ) -> Result<Self> {
        let cols = kinds
            .iter()
            .enumerate()
            .map(|(k, kind)| match kind {
                NoiseKind::Additive => NoiseColumn::additive(k),
                NoiseKind::Multiplicative => NoiseColumn::multiplicative(k, k),
            })
            .collect();
        Self::new(state_dim, max_degree, cols)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn noise_columns(&self) -> &[NoiseColumn] {
        &self.noise_columns
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn polynomial_len(&self) -> usize {
        self.terms.len()
    }

    /// Total column count: polynomial terms followed by noise columns.
    pub fn len(&self) -> usize {
        self.terms.len() + self.noise_columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest channel count the noise columns require.
    pub fn required_noise_dim(&self) -> usize {
        self.noise_columns
            .iter()
            .map(|c| c.noise_index + 1)
            .max()
            .unwrap_or(0)
    }

    /// Same polynomial part, no noise columns.
    pub fn without_noise(&self) -> Self {
        Self {
            noise_columns: Vec::new(),
            ..self.clone()
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms
            .iter()
            .map(Monomial::label)
            .chain(self.noise_columns.iter().map(|c| c.label(self.state_dim)))
            .collect()
    }

    /// Index of a polynomial term by exponent vector.
    pub fn term_index(&self, exponents: &[u32]) -> Option<usize> {
        self.terms.iter().position(|m| m.exponents == exponents)
    }

    /// Writes every monomial value at `state` into `out` (length `polynomial_len`).
    pub fn eval_monomials<T: Real>(&self, state: &[T], out: &mut [T]) {
        debug_assert_eq!(state.len(), self.state_dim);
        debug_assert_eq!(out.len(), self.terms.len());
        let d = self.max_degree as usize;
        // powers[k * (d + 1) + e] = state[k]^e
        let mut powers = vec![T::one(); self.state_dim * (d + 1)];
        for (k, &x) in state.iter().enumerate() {
            for e in 1..=d {
                powers[k * (d + 1) + e] = powers[k * (d + 1) + e - 1] * x;
            }
        }
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            let mut v = T::one();
            for (k, &e) in term.exponents.iter().enumerate() {
                if e > 0 {
                    v = v * powers[k * (d + 1) + e as usize];
                }
            }
            *slot = v;
        }
    }

    /// Design-row evaluation into a caller buffer of length [`len`](Self::len).
    pub fn eval_design_row_into<T: Real>(
        &self,
        state: &[T],
        noise_rates: Option<&[T]>,
        out: &mut [T],
    ) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "design row state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        if out.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "design row buffer",
                expected: self.len(),
                actual: out.len(),
            });
        }
        let (poly, noise) = out.split_at_mut(self.terms.len());
        self.eval_monomials(state, poly);
        if self.noise_columns.is_empty() {
            return Ok(());
        }
        let rates = noise_rates.ok_or(Error::DimensionMismatch {
            context: "noise rates",
            expected: self.required_noise_dim(),
            actual: 0,
        })?;
        if rates.len() < self.required_noise_dim() {
            return Err(Error::DimensionMismatch {
                context: "noise rates",
                expected: self.required_noise_dim(),
                actual: rates.len(),
            });
        }
        for (slot, col) in noise.iter_mut().zip(&self.noise_columns) {
            let r = rates[col.noise_index];
            *slot = match col.state_multiplier {
                None => r,
                Some(j) => state[j] * r,
            };
        }
        Ok(())
    }
}

impl TryFrom<BasisSpecRepr> for BasisSpec {
    type Error = Error;

    fn try_from(r: BasisSpecRepr) -> Result<Self> {
        Self::with_noise_kinds(r.state_dim, r.max_degree, &r.noise)
    }
}

impl From<BasisSpec> for BasisSpecRepr {
    fn from(b: BasisSpec) -> Self {
        let noise = b
            .noise_columns
            .iter()
            .map(|c| match c.state_multiplier {
                None => NoiseKind::Additive,
                Some(_) => NoiseKind::Multiplicative,
            })
            .collect();
        Self {
            state_dim: b.state_dim,
            max_degree: b.max_degree,
            noise,
        }
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BasisSpec(n={}, degree={}, {} terms + {} noise)",
            self.state_dim,
            self.max_degree,
            self.terms.len(),
            self.noise_columns.len()
        )
    }
}

/// All monomials in `state_dim` variables with total degree `<= max_degree`,
/// in graded lexicographic order. The count is `C(n + d, d)`.
pub fn enumerate_terms(state_dim: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut scratch = vec![0u32; state_dim];
    for d in 0..=max_degree {
        push_degree(&mut out, &mut scratch, 0, d);
    }
    out
}

fn push_degree(out: &mut Vec<Monomial>, scratch: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(Monomial::new(scratch.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[pos] = e;
        push_degree(out, scratch, pos + 1, remaining - e);
    }
}

/// Row of the design matrix at `state`: monomial values followed by noise
/// columns (`rate_k`, or `state_j * rate_k` for multiplicative columns).
pub fn eval_design_row<T: Real>(
    spec: &BasisSpec,
    state: &[T],
    noise_rates: Option<&[T]>,
) -> Result<Vec<T>> {
    let mut row = vec![T::zero(); spec.len()];
    spec.eval_design_row_into(state, noise_rates, &mut row)?;
    Ok(row)
}

/// `sum_a coeffs[a] * state^a` over the polynomial terms of `spec`.
pub fn eval_polynomial<T: Real>(coeffs: &[T], spec: &BasisSpec, state: &[T]) -> Result<T> {
    if coeffs.len() != spec.polynomial_len() {
        return Err(Error::DimensionMismatch {
            context: "polynomial coefficients",
            expected: spec.polynomial_len(),
            actual: coeffs.len(),
        });
    }
    if state.len() != spec.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "polynomial state",
            expected: spec.state_dim(),
            actual: state.len(),
        });
    }
    let mut buf = vec![T::zero(); spec.polynomial_len()];
    spec.eval_monomials(state, &mut buf);
    Ok(crate::scalar::dot(coeffs, &buf))
}

/// Parses a table label back into a monomial (`x^2y`) or noise column (`ydB2/dt`).
pub(crate) fn parse_label(label: &str, state_dim: usize) -> Option<ParsedLabel> {
    let names = variable_names(state_dim);
    if let Some(pos) = label.find("dB") {
        let (prefix, rest) = label.split_at(pos);
        let k: usize = rest.strip_prefix("dB")?.strip_suffix("/dt")?.parse().ok()?;
        if k == 0 {
            return None;
        }
        let mult = if prefix.is_empty() {
            None
        } else {
            Some(names.iter().position(|n| n == prefix)?)
        };
        return Some(ParsedLabel::Noise(NoiseColumn {
            noise_index: k - 1,
            state_multiplier: mult,
        }));
    }
    if label == "1" {
        return Some(ParsedLabel::Term(Monomial::new(vec![0; state_dim])));
    }
    let mut exps = vec![0u32; state_dim];
    let mut rest = label;
    while !rest.is_empty() {
        // longest matching name first so `x1` wins over `x` style prefixes
        let (idx, name) = names
            .iter()
            .enumerate()
            .filter(|(_, n)| rest.starts_with(n.as_str()))
            .max_by_key(|(_, n)| n.len())?;
        rest = &rest[name.len()..];
        let mut e = 1u32;
        if let Some(r) = rest.strip_prefix('^') {
            let digits: String = r.chars().take_while(|c| c.is_ascii_digit()).collect();
            e = digits.parse().ok()?;
            rest = &r[digits.len()..];
        }
        exps[idx] += e;
    }
    Some(ParsedLabel::Term(Monomial::new(exps)))
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ParsedLabel {
    Term(Monomial),
    Noise(NoiseColumn),
}
