//! Finite-difference boundary-value problems for the generator: mean
//! residence time `A u = -1, u = 0 on ∂D` and escape probability
//! `A p = 0, p = 1 on Γ, p = 0 on ∂D \ Γ`.

mod assemble;
mod domain;
mod export;
mod grid;
mod sparse;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generator::{check_ellipticity, EllipticityCertificate, DEFAULT_ELLIPTICITY_THRESHOLD};
use crate::scalar::Real;
use crate::sde::SdeModel;

pub use assemble::{assemble, AssemblyReport, BoundaryCoupling, LinearSystem};
pub use domain::{Cuboid, Domain, EddyDomain, EDDY_REFERENCE};
pub use export::{solution_report, write_csv, write_vtk};
pub use grid::{Grid, Link, NodeKind};
pub use sparse::{bicgstab, CsrMatrix, Ilu0, SolveOutcome, SolverOptions};

/// Default nodes per axis.
pub const DEFAULT_EDDY_RESOLUTION: usize = 256;
pub const DEFAULT_CUBOID_RESOLUTION: usize = 64;

/// Which boundary-value problem a field solves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Problem {
    MeanResidenceTime,
    /// Escape through the union of the listed boundary labels.
    Escape(Vec<usize>),
}

/// How [`average_over_domain`] integrates a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageRule {
    /// Dual-cell quadrature: each node weighted by its cell measure inside
    /// `D`, boundary nodes at their Dirichlet values.
    #[default]
    Cell,
    /// Plain mean over every grid node of the closed box. A boundary node
    /// counts as escaped if it lies on the closure of any escape face, so
    /// edges shared by two faces count for both.
    Nodal,
}

/// Solved field on a grid.
#[derive(Debug, Clone)]
pub struct FieldSolution<T> {
    pub grid: Arc<Grid<T>>,
    pub problem: Problem,
    /// One value per grid node; `NaN` on exterior nodes.
    pub values: Vec<T>,
    /// Relative residual of the linear solve.
    pub residual: T,
    pub iterations: usize,
    pub assembly: AssemblyReport<T>,
    pub ellipticity: Option<EllipticityCertificate<T>>,
}

impl<T: Real> FieldSolution<T> {
    /// Values at interior nodes, in unknown order.
    pub fn interior_values(&self) -> Vec<T> {
        (0..self.grid.unknown_count())
            .map(|u| self.values[self.grid.node_of_unknown(u)])
            .collect()
    }

    /// Maximum over non-exterior nodes.
    pub fn max_value(&self) -> T {
        self.values
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(T::neg_infinity(), T::max)
    }

    /// Minimum over non-exterior nodes.
    pub fn min_value(&self) -> T {
        self.values
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(T::infinity(), T::min)
    }

    pub fn min_interior(&self) -> T {
        self.interior_values()
            .into_iter()
            .fold(T::infinity(), T::min)
    }

    /// Value at the grid node nearest to `p`.
    pub fn value_near(&self, p: &[T]) -> T {
        self.values[self.grid.nearest_node(p)]
    }

    /// Domain average with the default cell rule.
    pub fn average(&self) -> T {
        average_over_domain(self, AverageRule::Cell)
    }

    pub fn average_with(&self, rule: AverageRule) -> T {
        average_over_domain(self, rule)
    }

    /// `3 h^2 * scale` at `node`, where `scale` is the largest centered
    /// second difference `|f(x+h) - 2 f(x) + f(x-h)| / h^2` over axes whose
    /// neighbors both carry values. Used as the stated discretization
    /// allowance when comparing against Monte Carlo estimates.
    pub fn discretization_allowance(&self, node: usize) -> T {
        let grid = &self.grid;
        let mut scale = T::zero();
        for axis in 0..grid.dim() {
            let h = grid.spacing()[axis];
            if let (Some(m), Some(p)) = (
                grid.neighbor(node, axis, false),
                grid.neighbor(node, axis, true),
            ) {
                let (fm, fp) = (self.values[m], self.values[p]);
                if !fm.is_nan() && !fp.is_nan() {
                    let d2 = (fp - T::lit(2.0) * self.values[node] + fm).abs() / (h * h);
                    scale = scale.max(d2);
                }
            }
        }
        let h = grid.h_max();
        T::lit(3.0) * h * h * scale
    }

    pub fn tag(&self) -> String {
        match &self.problem {
            Problem::MeanResidenceTime => "mrt".into(),
            Problem::Escape(ids) => {
                let labels = self.grid.domain().labels();
                let names: Vec<&str> = ids.iter().map(|&i| labels[i].as_str()).collect();
                format!("escape({})", names.join("+"))
            }
        }
    }
}

/// `(1/|D|) ∫_D field`.
pub fn average_over_domain<T: Real>(field: &FieldSolution<T>, rule: AverageRule) -> T {
    let grid = &field.grid;
    match rule {
        AverageRule::Cell => {
            let mut num = T::zero();
            let mut den = T::zero();
            for (v, &w) in field.values.iter().zip(grid.weights()) {
                if w > T::zero() && !v.is_nan() {
                    num = num + w * *v;
                    den = den + w;
                }
            }
            num / den
        }
        AverageRule::Nodal => {
            let escape: &[usize] = match &field.problem {
                Problem::Escape(ids) => ids,
                Problem::MeanResidenceTime => &[],
            };
            let mut sum = T::zero();
            let mut count = 0usize;
            for node in 0..grid.node_count() {
                match grid.kind(node) {
                    NodeKind::Interior => sum = sum + field.values[node],
                    NodeKind::Boundary(label) => {
                        // Cuboid edges and corners belong to every face they touch.
                        let on_gamma = match grid.domain() {
                            Domain::Cuboid(_) => {
                                let idx = grid.multi_index(node);
                                escape.iter().any(|&l| {
                                    let k = l / 2;
                                    idx[k] == if l % 2 == 0 { 0 } else { grid.dims()[k] - 1 }
                                })
                            }
                            Domain::Eddy(_) => escape.contains(&label),
                        };
                        if on_gamma {
                            sum = sum + T::one();
                        }
                    }
                    NodeKind::Exterior => continue,
                }
                count += 1;
            }
            sum / T::from_usize_lossy(count)
        }
    }
}

/// Assembled and factorized operator for one model on one grid, reusable
/// across boundary data.
pub struct FieldSolver<T: Real> {
    grid: Arc<Grid<T>>,
    system: LinearSystem<T>,
    ilu: Ilu0<T>,
    diffusion: Vec<Vec<T>>,
    ellipticity: Option<EllipticityCertificate<T>>,
    pub options: SolverOptions<T>,
}

impl<T: Real> FieldSolver<T> {
    pub fn new(model: &SdeModel<T>, grid: Arc<Grid<T>>, options: SolverOptions<T>) -> Result<Self> {
        let system = assemble(model, &grid)?;
        let ilu = Ilu0::new(&system.matrix)?;
        let n = grid.dim();
        let diffusion = (0..grid.unknown_count())
            .map(|u| {
                let mut s = vec![T::zero(); n];
                model.diffusion_diagonal_into(&grid.coords(grid.node_of_unknown(u)), &mut s);
                s.into_iter().map(|v| v * v).collect()
            })
            .collect();
        let ellipticity = check_ellipticity(
            model,
            grid.domain(),
            4096,
            T::lit(DEFAULT_ELLIPTICITY_THRESHOLD),
            0,
        )
        .ok();
        Ok(Self {
            grid,
            system,
            ilu,
            diffusion,
            ellipticity,
            options,
        })
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn system(&self) -> &LinearSystem<T> {
        &self.system
    }

    pub fn ellipticity(&self) -> Option<&EllipticityCertificate<T>> {
        self.ellipticity.as_ref()
    }

    /// Solves `L u = source + boundary terms` and returns interior values.
    pub fn solve_raw<G>(&self, source: T, g: G) -> Result<SolveOutcome<T>>
    where
        G: Fn(usize, &BoundaryCoupling<T>) -> T,
    {
        let rhs = self.system.rhs(source, g);
        bicgstab(&self.system.matrix, &self.ilu, &rhs, &self.options)
    }

    /// Solves `A u = f` in `D` with `u = g` on the boundary. Returns one value
    /// per grid node, `NaN` outside.
    pub fn solve_dirichlet<F, G>(&self, f: F, g: G) -> Result<Vec<T>>
    where
        F: Fn(&[T]) -> T,
        G: Fn(&[T]) -> T,
    {
        let grid = &self.grid;
        let coords: Vec<Vec<T>> = (0..grid.unknown_count())
            .map(|u| grid.coords(grid.node_of_unknown(u)))
            .collect();
        let rhs = self.system.rhs_with(
            |row| -f(&coords[row]),
            |row, c| {
                let mut p = coords[row].clone();
                p[c.axis] = if c.plus {
                    p[c.axis] + c.dist
                } else {
                    p[c.axis] - c.dist
                };
                g(&p)
            },
        );
        let out = bicgstab(&self.system.matrix, &self.ilu, &rhs, &self.options)?;
        Ok((0..grid.node_count())
            .map(|node| match grid.kind(node) {
                NodeKind::Interior => out.x[grid.unknown_of_node(node).expect("interior")],
                NodeKind::Boundary(_) => g(&grid.coords(node)),
                NodeKind::Exterior => T::nan(),
            })
            .collect())
    }

    fn field(
        &self,
        problem: Problem,
        out: SolveOutcome<T>,
        boundary: impl Fn(usize) -> T,
    ) -> FieldSolution<T> {
        let grid = &self.grid;
        let values = (0..grid.node_count())
            .map(|node| match grid.kind(node) {
                NodeKind::Interior => out.x[grid.unknown_of_node(node).expect("interior")],
                NodeKind::Boundary(label) => boundary(label),
                NodeKind::Exterior => T::nan(),
            })
            .collect();
        FieldSolution {
            grid: grid.clone(),
            problem,
            values,
            residual: out.residual,
            iterations: out.iterations,
            assembly: self.system.report,
            ellipticity: self.ellipticity.clone(),
        }
    }

    pub fn mean_residence_time(&self) -> Result<FieldSolution<T>> {
        let out = self.solve_raw(T::one(), |_, _| T::zero())?;
        Ok(self.field(Problem::MeanResidenceTime, out, |_| T::zero()))
    }

    /// Escape through the union of `labels`.
    pub fn escape_probability(&self, labels: &[usize]) -> Result<FieldSolution<T>> {
        let count = self.grid.domain().labels().len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= count) {
            return Err(Error::UnknownLabel(format!("label id {bad}")));
        }
        let mut ids = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let indicator = |l: usize| {
            if ids.contains(&l) {
                T::one()
            } else {
                T::zero()
            }
        };
        let out = self.solve_raw(T::zero(), |_, c| indicator(c.label))?;
        Ok(self.field(Problem::Escape(ids.clone()), out, indicator))
    }

    /// First-order effect of detecting exits only at times `k dt`.
    ///
    /// A discretely monitored path behaves like one killed on a boundary
    /// pushed outward by `0.5826 sqrt(a_nn dt)`. The induced change `w` of
    /// the field solves `A w = 0` with `w` equal to that shift times the
    /// inward slope of the field at each boundary crossing. Returns `w` per
    /// grid node (`NaN` outside).
    pub fn discrete_monitoring_shift(&self, field: &FieldSolution<T>, dt: T) -> Result<Vec<T>> {
        let grid = &self.grid;
        let boundary_value = |label: usize| match &field.problem {
            Problem::MeanResidenceTime => T::zero(),
            Problem::Escape(ids) => {
                if ids.contains(&label) {
                    T::one()
                } else {
                    T::zero()
                }
            }
        };
        let c = T::lit(SIEGMUND_CONSTANT);
        let out = self.solve_raw(T::zero(), |row, cp| {
            let node = grid.node_of_unknown(row);
            let a = self.diffusion[row][cp.axis];
            let shift = c * (a * dt).sqrt();
            shift * (field.values[node] - boundary_value(cp.label)) / cp.dist
        })?;
        Ok((0..grid.node_count())
            .map(|node| match grid.unknown_of_node(node) {
                Some(u) => out.x[u],
                None if grid.kind(node) == NodeKind::Exterior => T::nan(),
                None => T::zero(),
            })
            .collect())
    }
}

/// `-zeta(1/2) / sqrt(2 pi)`: mean overshoot of a Gaussian random walk in
/// units of its step standard deviation.
pub const SIEGMUND_CONSTANT: f64 = 0.5826;

/// Builds the grid for `domain` at `resolution` nodes per axis.
pub fn build_grid<T: Real>(domain: Domain<T>, resolution: usize) -> Result<Arc<Grid<T>>> {
    Ok(Arc::new(Grid::new(domain, resolution)?))
}

pub fn mean_residence_time<T: Real>(
    model: &SdeModel<T>,
    grid: Arc<Grid<T>>,
    options: SolverOptions<T>,
) -> Result<FieldSolution<T>> {
    FieldSolver::new(model, grid, options)?.mean_residence_time()
}

pub fn escape_probability<T: Real>(
    model: &SdeModel<T>,
    grid: Arc<Grid<T>>,
    labels: &[String],
    options: SolverOptions<T>,
) -> Result<FieldSolution<T>> {
    let ids = grid.domain().resolve_labels(labels)?;
    FieldSolver::new(model, grid, options)?.escape_probability(&ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{
        builtin_model, Builtin, DiffusionSpec, Drift, JetParams, NoiseParams, PolynomialDrift,
    };

    fn diffusion_model(n: usize, s: f64) -> SdeModel<f64> {
        SdeModel::new(
            Drift::Polynomial(PolynomialDrift::zero(n)),
            DiffusionSpec::additive(vec![s; n]),
            "diffusion",
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_mrt_is_exact() {
        // 1/2 u'' = -1 on [0, 2]: u = x (2 - x); quadratics are reproduced exactly.
        let grid = build_grid(Domain::cuboid(vec![0.0], vec![2.0]).unwrap(), 21).unwrap();
        let f = mean_residence_time(
            &diffusion_model(1, 1.0),
            grid.clone(),
            SolverOptions::default(),
        )
        .unwrap();
        for node in 0..grid.node_count() {
            let x = grid.coords(node)[0];
            assert!((f.values[node] - x * (2.0 - x)).abs() < 1e-9);
        }
    }

    #[test]
    fn whole_boundary_escape_is_one() {
        let grid = build_grid(Domain::eddy(JetParams::default()).unwrap(), 64).unwrap();
        let m = builtin_model(Builtin::JetAdditive, NoiseParams::new(0.3f64.sqrt())).unwrap();
        let f = escape_probability(&m, grid, &["all".into()], SolverOptions::default()).unwrap();
        for v in f.interior_values() {
            assert!(
                (v - 1.0).abs() < 1e-8,
                "{v} residual {} its {}",
                f.residual,
                f.iterations
            );
        }
        assert!((f.average() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn nodal_rule_counts_closed_faces() {
        // p = 1 everywhere: on a 3^3 grid 27 nodes, Γ = {xmin, xmax} closure has 18 nodes.
        let grid = build_grid(Domain::cuboid(vec![0.0; 3], vec![1.0; 3]).unwrap(), 3).unwrap();
        let values = vec![1.0f64; 27];
        let f = FieldSolution {
            grid,
            problem: Problem::Escape(vec![0, 1]),
            values,
            residual: 0.0,
            iterations: 0,
            assembly: AssemblyReport {
                rows: 1,
                nnz: 1,
                central: 0,
                upwind: 0,
                degenerate: 0,
                max_peclet: 0.0,
                m_matrix: true,
            },
            ellipticity: None,
        };
        assert!((average_over_domain(&f, AverageRule::Nodal) - 19.0 / 27.0).abs() < 1e-15);
        assert!((average_over_domain(&f, AverageRule::Cell) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monitoring_shift_matches_interval_formula() {
        // Brownian motion on [0, L]: widening by delta on both sides changes
        // u = x (L - x) by delta L to first order.
        let grid = build_grid(Domain::cuboid(vec![0.0], vec![1.0]).unwrap(), 41).unwrap();
        let solver = FieldSolver::new(
            &diffusion_model(1, 1.0),
            grid.clone(),
            SolverOptions::default(),
        )
        .unwrap();
        let u = solver.mean_residence_time().unwrap();
        let dt = 1e-4;
        let w = solver.discrete_monitoring_shift(&u, dt).unwrap();
        let delta = SIEGMUND_CONSTANT * dt.sqrt();
        let mid = grid.nearest_node(&[0.5]);
        assert!(
            (w[mid] - delta).abs() < 0.05 * delta,
            "{} vs {}",
            w[mid],
            delta
        );
    }
}
