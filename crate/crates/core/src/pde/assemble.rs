use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::SdeModel;

use super::grid::{Grid, Link};
use super::sparse::CsrMatrix;

/// Coefficient linking a row to a Dirichlet value on `∂D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCoupling<T> {
    pub axis: usize,
    pub plus: bool,
    /// Distance from the node to the boundary point along `axis`.
    pub dist: T,
    pub label: usize,
    /// Weight of the boundary value in the scaled row (non-negative).
    pub coef: T,
}

/// Stencil statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyReport<T> {
    pub rows: usize,
    pub nnz: usize,
    /// Node-axis pairs using central drift differences.
    pub central: usize,
    /// Node-axis pairs switched to upwind because the cell Peclet number
    /// exceeded 2.
    pub upwind: usize,
    /// Node-axis pairs with zero diffusion and non-zero drift.
    pub degenerate: usize,
    /// Largest `|b_k| h_k / (a_kk / 2)` over node-axis pairs with `a_kk > 0`.
    pub max_peclet: T,
    /// Diagonal positive, off-diagonals and boundary weights sign-correct.
    pub m_matrix: bool,
}

/// `L = -A_h` restricted to the unknowns, plus the boundary couplings that
/// move Dirichlet data to the right-hand side.
///
/// Rows are scaled to unit diagonal, which keeps cut-cell rows with very
/// short boundary links from dominating the residual norm. `row_scale[r]`
/// is the factor applied to row `r`.
#[derive(Debug, Clone)]
pub struct LinearSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub row_scale: Vec<T>,
    coupling_ptr: Vec<usize>,
    couplings: Vec<BoundaryCoupling<T>>,
    pub report: AssemblyReport<T>,
}

impl<T: Real> LinearSystem<T> {
    pub fn couplings(&self, row: usize) -> &[BoundaryCoupling<T>] {
        &self.couplings[self.coupling_ptr[row]..self.coupling_ptr[row + 1]]
    }

    /// Right-hand side of `L u = f`, with `f = source + sum coef * g(coupling)`.
    ///
    /// `source = 1` gives `A u = -1`; `source = 0` gives `A u = 0`.
    pub fn rhs<G>(&self, source: T, g: G) -> Vec<T>
    where
        G: Fn(usize, &BoundaryCoupling<T>) -> T,
    {
        self.rhs_with(|_| source, g)
    }

    /// As [`rhs`](Self::rhs) with a per-row source.
    pub fn rhs_with<S, G>(&self, source: S, g: G) -> Vec<T>
    where
        S: Fn(usize) -> T,
        G: Fn(usize, &BoundaryCoupling<T>) -> T,
    {
        (0..self.matrix.size())
            .map(|row| {
                self.couplings(row)
                    .iter()
                    .fold(source(row) * self.row_scale[row], |acc, c| {
                        acc + c.coef * g(row, c)
                    })
            })
            .collect()
    }

    /// Row sums of `A_h` including boundary weights; zero for a consistent
    /// stencil.
    pub fn generator_row_sums(&self) -> Vec<T> {
        (0..self.matrix.size())
            .map(|row| {
                let inner: T = self.matrix.row(row).map(|(_, v)| -v).sum();
                inner + self.couplings(row).iter().map(|c| c.coef).sum::<T>()
            })
            .collect()
    }
}

struct RowOut<T> {
    entries: Vec<(usize, T)>,
    couplings: Vec<BoundaryCoupling<T>>,
    central: usize,
    upwind: usize,
    degenerate: usize,
    peclet: T,
}

/// Discretizes `A g = b . grad g + 1/2 sum a_kk d_kk g` on the grid.
///
/// Second derivatives use the three-point stencil on the (possibly cut)
/// local spacings `h-`, `h+`. The drift term is central while
/// `-a/h- <= b <= a/h+`, the condition under which every neighbour weight
/// stays non-negative, and one-sided upwind otherwise.
pub fn assemble<T: Real>(model: &SdeModel<T>, grid: &Grid<T>) -> Result<LinearSystem<T>> {
    let n = grid.dim();
    if model.state_dim() != n {
        return Err(Error::DimensionMismatch {
            context: "model dimension vs grid",
            expected: n,
            actual: model.state_dim(),
        });
    }
    let h = grid.spacing().to_vec();
    let rows: Vec<RowOut<T>> = (0..grid.unknown_count())
        .into_par_iter()
        .map_init(
            || (vec![T::zero(); n], vec![T::zero(); n], Vec::new()),
            |(b, s, scratch), u| {
                let x = grid.coords(grid.node_of_unknown(u));
                model.drift_into(&x, b, scratch);
                model.diffusion_diagonal_into(&x, s);
                let links = grid.links(u);
                let mut out = RowOut {
                    entries: Vec::with_capacity(2 * n + 1),
                    couplings: Vec::new(),
                    central: 0,
                    upwind: 0,
                    degenerate: 0,
                    peclet: T::zero(),
                };
                let mut c0 = T::zero();
                for k in 0..n {
                    let a = s[k] * s[k];
                    let bk = b[k];
                    let span = |l: &Link<T>| match *l {
                        Link::Node(_) => h[k],
                        Link::Dirichlet { dist, .. } => dist,
                    };
                    let (lm, lp) = (&links[2 * k], &links[2 * k + 1]);
                    let (hm, hp) = (span(lm), span(lp));
                    let sum = hm + hp;
                    let mut cm = a / (hm * sum);
                    let mut cp = a / (hp * sum);
                    c0 = c0 - cm - cp;
                    if a > T::zero() {
                        out.peclet = out.peclet.max(bk.abs() * h[k] / (a / T::lit(2.0)));
                    } else if bk != T::zero() {
                        out.degenerate += 1;
                    }
                    if bk >= -a / hm && bk <= a / hp {
                        cp = cp + bk * hm / (hp * sum);
                        cm = cm - bk * hp / (hm * sum);
                        c0 = c0 + bk * (hp - hm) / (hm * hp);
                        out.central += 1;
                    } else if bk > T::zero() {
                        cp = cp + bk / hp;
                        c0 = c0 - bk / hp;
                        out.upwind += 1;
                    } else {
                        cm = cm - bk / hm;
                        c0 = c0 + bk / hm;
                        out.upwind += 1;
                    }
                    for (link, c, plus) in [(lm, cm, false), (lp, cp, true)] {
                        match *link {
                            Link::Node(v) => out.entries.push((v, -c)),
                            Link::Dirichlet { dist, label } => {
                                out.couplings.push(BoundaryCoupling {
                                    axis: k,
                                    plus,
                                    dist,
                                    label,
                                    coef: c,
                                })
                            }
                        }
                    }
                }
                out.entries.push((u, -c0));
                out
            },
        )
        .collect();

    let mut report = AssemblyReport {
        rows: rows.len(),
        nnz: 0,
        central: 0,
        upwind: 0,
        degenerate: 0,
        max_peclet: T::zero(),
        m_matrix: true,
    };
    let mut coupling_ptr = Vec::with_capacity(rows.len() + 1);
    let mut couplings = Vec::new();
    let mut entries = Vec::with_capacity(rows.len());
    coupling_ptr.push(0);
    let mut row_scale = Vec::with_capacity(rows.len());
    for (u, mut r) in rows.into_iter().enumerate() {
        report.central += r.central;
        report.upwind += r.upwind;
        report.degenerate += r.degenerate;
        report.max_peclet = report.max_peclet.max(r.peclet);
        for &(c, v) in &r.entries {
            let ok = if c == u {
                v > T::zero()
            } else {
                v <= T::zero()
            };
            report.m_matrix &= ok;
        }
        report.m_matrix &= r.couplings.iter().all(|c| c.coef >= T::zero());
        let diag = r.entries.last().map(|e| e.1).unwrap_or(T::one());
        let scale = if diag > T::zero() {
            T::one() / diag
        } else {
            T::one()
        };
        for e in &mut r.entries {
            e.1 = e.1 * scale;
        }
        for c in &mut r.couplings {
            c.coef = c.coef * scale;
        }
        row_scale.push(scale);
        couplings.extend(r.couplings);
        coupling_ptr.push(couplings.len());
        entries.push(r.entries);
    }
    let matrix = CsrMatrix::from_rows(entries.len(), entries)?;
    report.nnz = matrix.nnz();
    Ok(LinearSystem {
        matrix,
        row_scale,
        coupling_ptr,
        couplings,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::domain::Domain;
    use crate::sde::{builtin_model, Builtin, DiffusionSpec, Drift, NoiseParams, PolynomialDrift};

    fn pure_diffusion(n: usize, s: f64) -> SdeModel<f64> {
        SdeModel::new(
            Drift::Polynomial(PolynomialDrift::zero(n)),
            DiffusionSpec::additive(vec![s; n]),
            "diffusion",
        )
        .unwrap()
    }

    #[test]
    fn laplacian_stencil_on_strip() {
        let d = Domain::cuboid(vec![0.0], vec![1.0]).unwrap();
        let g = Grid::new(d, 5).unwrap();
        let sys = assemble(&pure_diffusion(1, 1.0), &g).unwrap();
        // -1/2 (1, -2, 1) / h^2 with h = 1/4
        let s = &sys.row_scale;
        assert_eq!(sys.matrix.get(1, 1) / s[1], 16.0);
        assert_eq!(sys.matrix.get(1, 0) / s[1], -8.0);
        assert_eq!(sys.matrix.get(1, 2) / s[1], -8.0);
        assert_eq!(sys.couplings(0)[0].coef / s[0], 8.0);
        assert_eq!(sys.report.upwind, 0);
    }

    #[test]
    fn constants_are_annihilated() {
        let d = Domain::cuboid(vec![-2.0, -2.0, 0.0], vec![2.0, 2.0, 1.0]).unwrap();
        let g = Grid::new(d, 9).unwrap();
        let m = builtin_model(Builtin::Linear3d, NoiseParams::new(0.6)).unwrap();
        let sys = assemble(&m, &g).unwrap();
        for s in sys.generator_row_sums() {
            let s: f64 = s;
            assert!(s.abs() < 1e-12);
        }
        assert!(sys.report.m_matrix);
    }

    #[test]
    fn upwinding_keeps_m_matrix_signs() {
        // Off the fixed points the Lorenz drift is large against a = 0.9.
        let d = Domain::cuboid(vec![-1.0, 5.0, 0.0], vec![0.0, 6.0, 1.0]).unwrap();
        let g = Grid::new(d, 12).unwrap();
        let m = builtin_model(Builtin::Lorenz, NoiseParams::new(0.9)).unwrap();
        let sys = assemble(&m, &g).unwrap();
        assert!(sys.report.upwind > 0);
        assert!(sys.report.m_matrix);
        for row in 0..sys.matrix.size() {
            for (c, v) in sys.matrix.row(row) {
                if c == row {
                    assert!(v > 0.0);
                } else {
                    assert!(v <= 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_diffusion_falls_back_to_upwind() {
        let d = Domain::eddy(crate::sde::JetParams::default()).unwrap();
        let g = Grid::new(d, 48).unwrap();
        let m = builtin_model(Builtin::JetMultiplicative, NoiseParams::new(0.3f64.sqrt())).unwrap();
        let sys = assemble(&m, &g).unwrap();
        assert!(sys.report.m_matrix);
        let zero_noise = builtin_model(Builtin::JetAdditive, NoiseParams::new(0.0)).unwrap();
        let sys = assemble(&zero_noise, &g).unwrap();
        assert!(sys.report.degenerate > 0);
        assert_eq!(
            sys.report.central + sys.report.upwind,
            2 * g.unknown_count()
        );
    }

    #[test]
    fn dimension_checked() {
        let d = Domain::cuboid(vec![0.0], vec![1.0]).unwrap();
        let g = Grid::new(d, 5).unwrap();
        assert!(assemble(&pure_diffusion(2, 1.0), &g).is_err());
    }
}
