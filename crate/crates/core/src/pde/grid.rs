use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::domain::Domain;

/// Classification of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Unknown of the linear system.
    Interior,
    /// Node on `∂D` carrying a boundary label (cuboid faces).
    Boundary(usize),
    Exterior,
}

/// Neighbour of an interior node along one axis direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link<T> {
    /// Another unknown, one grid spacing away.
    Node(usize),
    /// Boundary at distance `dist <= h`, carrying `label`.
    Dirichlet { dist: T, label: usize },
}

/// Tensor-product grid over the domain's bounding box with interior nodes,
/// boundary nodes and cut links to `∂D`.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    domain: Domain<T>,
    dims: Vec<usize>,
    lower: Vec<T>,
    h: Vec<T>,
    kinds: Vec<NodeKind>,
    unknown_nodes: Vec<usize>,
    unknown_of_node: Vec<usize>,
    links: Vec<Link<T>>,
    weights: Vec<T>,
}

const NONE: usize = usize::MAX;

impl<T: Real> Grid<T> {
    /// Minimum nodes per axis for the eddy mask.
    pub const MIN_EDDY_RESOLUTION: usize = 32;

    /// `resolution` nodes per axis spanning the bounding box, end points
    /// included.
    pub fn new(domain: Domain<T>, resolution: usize) -> Result<Self> {
        match &domain {
            Domain::Eddy(_) if resolution < Self::MIN_EDDY_RESOLUTION => {
                Err(Error::InvalidArgument(format!(
                    "eddy grids need at least {} nodes per axis, got {resolution}",
                    Self::MIN_EDDY_RESOLUTION
                )))
            }
            Domain::Cuboid(_) if resolution < 3 => Err(Error::InvalidArgument(format!(
                "cuboid grids need at least 3 nodes per axis, got {resolution}"
            ))),
            Domain::Eddy(_) => Self::masked(domain, resolution),
            Domain::Cuboid(_) => Self::boxed(domain, resolution),
        }
    }

    fn skeleton(domain: Domain<T>, resolution: usize) -> Self {
        let (lo, hi) = domain.bounding_box();
        let n = lo.len();
        let h = (0..n)
            .map(|k| (hi[k] - lo[k]) / T::from_usize_lossy(resolution - 1))
            .collect();
        let total = resolution.pow(n as u32);
        Self {
            domain,
            dims: vec![resolution; n],
            lower: lo,
            h,
            kinds: vec![NodeKind::Exterior; total],
            unknown_nodes: Vec::new(),
            unknown_of_node: vec![NONE; total],
            links: Vec::new(),
            weights: vec![T::zero(); total],
        }
    }

    fn boxed(domain: Domain<T>, resolution: usize) -> Result<Self> {
        let mut g = Self::skeleton(domain, resolution);
        let n = g.dim();
        for node in 0..g.node_count() {
            let idx = g.multi_index(node);
            let face = (0..n).find_map(|k| {
                if idx[k] == 0 {
                    Some(2 * k)
                } else if idx[k] == resolution - 1 {
                    Some(2 * k + 1)
                } else {
                    None
                }
            });
            g.kinds[node] = match face {
                Some(label) => NodeKind::Boundary(label),
                None => NodeKind::Interior,
            };
            let mut w = T::one();
            for k in 0..n {
                let edge = idx[k] == 0 || idx[k] == resolution - 1;
                w = w * if edge { g.h[k] / T::lit(2.0) } else { g.h[k] };
            }
            g.weights[node] = w;
        }
        g.number_unknowns();
        for u in 0..g.unknown_nodes.len() {
            let node = g.unknown_nodes[u];
            for k in 0..n {
                for plus in [false, true] {
                    let nb = g
                        .neighbor(node, k, plus)
                        .expect("interior node has neighbours");
                    let link = match g.kinds[nb] {
                        NodeKind::Interior => Link::Node(g.unknown_of_node[nb]),
                        NodeKind::Boundary(label) => Link::Dirichlet {
                            dist: g.h[k],
                            label,
                        },
                        NodeKind::Exterior => unreachable!("box grids have no exterior nodes"),
                    };
                    g.links.push(link);
                }
            }
        }
        Ok(g)
    }

    fn masked(domain: Domain<T>, resolution: usize) -> Result<Self> {
        let mut g = Self::skeleton(domain, resolution);
        let n = g.dim();
        let seed_point: Vec<T> = match &g.domain {
            Domain::Eddy(e) => e.center().to_vec(),
            Domain::Cuboid(_) => unreachable!(),
        };
        let start = g.nearest_node(&seed_point);
        let inside = |g: &Self, node: usize| g.domain.level(&g.coords(node)) > T::zero();
        if !inside(&g, start) {
            return Err(Error::NotInterior(
                seed_point.iter().map(|v| v.to_f64_lossy()).collect(),
            ));
        }
        // Flood fill the component containing the seed.
        let mut queue = VecDeque::from([start]);
        g.kinds[start] = NodeKind::Interior;
        while let Some(node) = queue.pop_front() {
            for k in 0..n {
                for plus in [false, true] {
                    if let Some(nb) = g.neighbor(node, k, plus) {
                        if g.kinds[nb] == NodeKind::Exterior && inside(&g, nb) {
                            g.kinds[nb] = NodeKind::Interior;
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        g.number_unknowns();
        let min_dist = T::lit(1e-6);
        for u in 0..g.unknown_nodes.len() {
            let node = g.unknown_nodes[u];
            let p = g.coords(node);
            let mut w = T::one();
            for k in 0..n {
                let mut extent = T::zero();
                for plus in [false, true] {
                    let nb = g.neighbor(node, k, plus);
                    let link = match nb {
                        Some(nb) if g.kinds[nb] == NodeKind::Interior => {
                            Link::Node(g.unknown_of_node[nb])
                        }
                        _ => {
                            let mut q = p.clone();
                            q[k] = if plus { q[k] + g.h[k] } else { q[k] - g.h[k] };
                            let t = g.domain.crossing_fraction(&p, &q);
                            let mut hit = p.clone();
                            hit[k] = p[k] + (q[k] - p[k]) * t;
                            Link::Dirichlet {
                                dist: (t * g.h[k]).max(min_dist * g.h[k]),
                                label: g.domain.boundary_label(&hit),
                            }
                        }
                    };
                    extent = extent
                        + match link {
                            Link::Node(_) => g.h[k],
                            Link::Dirichlet { dist, .. } => dist,
                        } / T::lit(2.0);
                    g.links.push(link);
                }
                w = w * extent;
            }
            g.weights[node] = w;
        }
        Ok(g)
    }

    fn number_unknowns(&mut self) {
        for node in 0..self.kinds.len() {
            if self.kinds[node] == NodeKind::Interior {
                self.unknown_of_node[node] = self.unknown_nodes.len();
                self.unknown_nodes.push(node);
            }
        }
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[T] {
        &self.h
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_nodes.len()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Grid node of unknown `u`.
    pub fn node_of_unknown(&self, u: usize) -> usize {
        self.unknown_nodes[u]
    }

    pub fn unknown_of_node(&self, node: usize) -> Option<usize> {
        let u = self.unknown_of_node[node];
        (u != NONE).then_some(u)
    }

    /// Links of unknown `u`, ordered `[axis0-, axis0+, axis1-, ...]`.
    pub fn links(&self, u: usize) -> &[Link<T>] {
        let m = 2 * self.dim();
        &self.links[u * m..(u + 1) * m]
    }

    /// Quadrature weight (dual-cell measure inside `D`) of every node.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Row-major multi-index with axis 0 varying fastest.
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rem = node;
        self.dims
            .iter()
            .map(|&d| {
                let i = rem % d;
                rem /= d;
                i
            })
            .collect()
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.dims)
            .rev()
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn coords(&self, node: usize) -> Vec<T> {
        self.multi_index(node)
            .into_iter()
            .enumerate()
            .map(|(k, i)| self.lower[k] + self.h[k] * T::from_usize_lossy(i))
            .collect()
    }

    pub fn neighbor(&self, node: usize, axis: usize, plus: bool) -> Option<usize> {
        let stride: usize = self.dims[..axis].iter().product();
        let i = (node / stride) % self.dims[axis];
        if plus {
            (i + 1 < self.dims[axis]).then_some(node + stride)
        } else {
            (i > 0).then_some(node - stride)
        }
    }

    pub fn nearest_node(&self, p: &[T]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|k| {
                let f = ((p[k] - self.lower[k]) / self.h[k]).round().to_f64_lossy();
                f.clamp(0.0, (self.dims[k] - 1) as f64) as usize
            })
            .collect();
        self.node_index(&idx)
    }

    /// Largest spacing.
    pub fn h_max(&self) -> T {
        self.h.iter().copied().fold(T::zero(), T::max)
    }

    /// Measure of `D` from the quadrature weights.
    pub fn measure(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::JetParams;

    #[test]
    fn cuboid_grid_layout() {
        let d = Domain::cuboid(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 1.0]).unwrap();
        let g = Grid::<f64>::new(d, 5).unwrap();
        assert_eq!(g.node_count(), 125);
        assert_eq!(g.unknown_count(), 27);
        assert!((g.measure() - 2.0).abs() < 1e-12);
        assert_eq!(g.kind(0), NodeKind::Boundary(0));
        let top = g.node_index(&[2, 2, 4]);
        assert_eq!(g.kind(top), NodeKind::Boundary(5));
        let u = g.unknown_of_node(g.node_index(&[2, 2, 3])).unwrap();
        assert_eq!(
            g.links(u)[5],
            Link::Dirichlet {
                dist: 0.25,
                label: 5
            }
        );
        for node in 0..g.node_count() {
            assert_eq!(g.node_index(&g.multi_index(node)), node);
        }
    }

    #[test]
    fn eddy_mask_has_no_exterior_leakage() {
        let d = Domain::eddy(JetParams::<f64>::default()).unwrap();
        let g = Grid::new(d, 64).unwrap();
        assert!(g.unknown_count() > 500);
        let r = g.nearest_node(&[-0.2, 0.8]);
        assert_eq!(g.kind(r), NodeKind::Interior);
        for u in 0..g.unknown_count() {
            for (j, link) in g.links(u).iter().enumerate() {
                match *link {
                    Link::Node(v) => assert_eq!(g.kind(g.node_of_unknown(v)), NodeKind::Interior),
                    Link::Dirichlet { dist, label } => {
                        assert!(dist > 0.0 && dist <= g.spacing()[j / 2] * (1.0 + 1e-12));
                        assert!(label < 2);
                    }
                }
            }
        }
    }

    #[test]
    fn eddy_area_converges() {
        let area = |n| {
            let d = Domain::eddy(JetParams::<f64>::default()).unwrap();
            Grid::new(d, n).unwrap().measure()
        };
        let (a, b) = (area(128), area(256));
        assert!(((a - b) / b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn coarse_eddy_rejected() {
        let d = Domain::eddy(JetParams::<f64>::default()).unwrap();
        assert!(Grid::new(d, 16).is_err());
    }
}
