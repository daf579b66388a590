use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::JetParams;

/// Reference interior point of the default eddy.
pub const EDDY_REFERENCE: [f64; 2] = [-0.2, 0.8];

/// Residence region with labeled boundary components.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain<T> {
    Eddy(EddyDomain<T>),
    Cuboid(Cuboid<T>),
}

/// Axis-aligned box in any dimension. Faces are labeled `xmin`, `xmax`,
/// `ymin`, ... (or `x1min`, ... above three dimensions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> Cuboid<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "cuboid bounds need equal non-zero lengths, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(k) = (0..lower.len()).find(|&k| !(lower[k] < upper[k])) {
            return Err(Error::InvalidArgument(format!(
                "cuboid axis {k}: lower bound {} is not below upper bound {}",
                lower[k], upper[k]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Label index of the face `axis`, `upper_side`.
    pub fn face(axis: usize, upper_side: bool) -> usize {
        2 * axis + usize::from(upper_side)
    }
}

/// Recirculation cell of the Bickley jet bounded by the separatrix through
/// two neighbouring saddles of the stream function.
#[derive(Debug, Clone, PartialEq)]
pub struct EddyDomain<T> {
    jet: JetParams<T>,
    psi_star: T,
    /// `+1` if the eddy is `{psi > psi_star}`, `-1` otherwise.
    orientation: T,
    saddles: [[T; 2]; 2],
    center: [T; 2],
    lower: [T; 2],
    upper: [T; 2],
}

impl<T: Real> EddyDomain<T> {
    /// Locates the saddles adjacent to `reference` and the eddy extent.
    pub fn new(jet: JetParams<T>, reference: [T; 2]) -> Result<Self> {
        jet.validate()?;
        let k = jet.k();
        let half = T::PI() / k;
        let m0 = (reference[0] / half).floor().to_f64_lossy() as i64;
        let mut left: Option<[T; 2]> = None;
        let mut right: Option<[T; 2]> = None;
        let mut centers: Vec<[T; 2]> = Vec::new();
        for m in (m0 - 3)..=(m0 + 4) {
            let guess = [T::lit(m as f64) * half, reference[1]];
            let Some(p) = critical_point(&jet, guess) else {
                continue;
            };
            let e = jet.eval(p[0], p[1]);
            let det = e.psi_xx * e.psi_yy - e.psi_xy * e.psi_xy;
            if det < T::zero() {
                if p[0] < reference[0] && left.is_none_or(|l| p[0] > l[0]) {
                    left = Some(p);
                }
                if p[0] > reference[0] && right.is_none_or(|r| p[0] < r[0]) {
                    right = Some(p);
                }
            } else {
                centers.push(p);
            }
        }
        let (Some(left), Some(right)) = (left, right) else {
            return Err(Error::SaddleSearch(format!(
                "no saddle pair brackets x = {} near y = {}",
                reference[0], reference[1]
            )));
        };
        let center = centers
            .into_iter()
            .find(|c| c[0] > left[0] && c[0] < right[0])
            .ok_or_else(|| Error::SaddleSearch("no elliptic point between the saddles".into()))?;
        let psi_star = jet.psi(right[0], right[1]);
        let psi_left = jet.psi(left[0], left[1]);
        let scale = psi_star.abs().max(T::one());
        if (psi_left - psi_star).abs() > T::lit(1e-8) * scale {
            return Err(Error::SaddleSearch(format!(
                "saddle levels differ: {psi_left} vs {psi_star}"
            )));
        }
        let diff = jet.psi(reference[0], reference[1]) - psi_star;
        if diff == T::zero() {
            return Err(Error::NotInterior(vec![
                reference[0].to_f64_lossy(),
                reference[1].to_f64_lossy(),
            ]));
        }
        let orientation = diff.signum();
        if (jet.psi(center[0], center[1]) - psi_star) * orientation <= T::zero() {
            return Err(Error::SaddleSearch(
                "reference point lies outside the saddle cell".into(),
            ));
        }
        let mut d = Self {
            jet,
            psi_star,
            orientation,
            saddles: [left, right],
            center,
            lower: [left[0], center[1]],
            upper: [right[0], center[1]],
        };
        // Vertical extent through the centre, where the cell is widest.
        let ym = d.midline(center[0]);
        let top = d.arc_crossing(center[0], ym, T::one())?;
        let bottom = d.arc_crossing(center[0], ym, -T::one())?;
        let pad = (top - bottom) * T::lit(0.02);
        d.lower[1] = bottom - pad;
        d.upper[1] = top + pad;
        if !d.contains(&reference) {
            return Err(Error::NotInterior(vec![
                reference[0].to_f64_lossy(),
                reference[1].to_f64_lossy(),
            ]));
        }
        Ok(d)
    }

    pub fn jet(&self) -> &JetParams<T> {
        &self.jet
    }

    pub fn psi_star(&self) -> T {
        self.psi_star
    }

    pub fn saddles(&self) -> [[T; 2]; 2] {
        self.saddles
    }

    pub fn center(&self) -> [T; 2] {
        self.center
    }

    pub fn bounding_box(&self) -> ([T; 2], [T; 2]) {
        (self.lower, self.upper)
    }

    /// Positive inside the cell; zero on the separatrix.
    #[inline]
    pub fn stream_level(&self, x: T, y: T) -> T {
        (self.jet.psi(x, y) - self.psi_star) * self.orientation
    }

    /// `y` where `psi_y(x, .) = 0` inside the cell, i.e. the streamline
    /// extremum separating the upper and lower arcs.
    pub fn midline(&self, x: T) -> T {
        let mut y = self.center[1];
        for _ in 0..50 {
            let e = self.jet.eval(x, y);
            if e.psi_yy == T::zero() {
                break;
            }
            let step = e.psi_y / e.psi_yy;
            y = y - step;
            if step.abs() <= T::epsilon() * T::lit(4.0) * y.abs().max(T::one()) {
                break;
            }
        }
        if y.is_finite() {
            y
        } else {
            self.center[1]
        }
    }

    /// Separatrix crossing above (`dir = 1`) or below (`dir = -1`) `y0` on the
    /// vertical line through `x`.
    fn arc_crossing(&self, x: T, y0: T, dir: T) -> Result<T> {
        let step = T::lit(0.01);
        let mut inside = y0;
        let mut outside = y0;
        let mut found = false;
        for i in 1..=400 {
            let y = y0 + dir * step * T::from_usize_lossy(i);
            if self.stream_level(x, y) <= T::zero() {
                outside = y;
                found = true;
                break;
            }
            inside = y;
        }
        if !found {
            return Err(Error::SaddleSearch("eddy is not bounded vertically".into()));
        }
        for _ in 0..100 {
            let mid = (inside + outside) / T::lit(2.0);
            if self.stream_level(x, mid) > T::zero() {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok((inside + outside) / T::lit(2.0))
    }

    pub fn contains(&self, p: &[T]) -> bool {
        p[0] > self.saddles[0][0]
            && p[0] < self.saddles[1][0]
            && p[1] > self.lower[1]
            && p[1] < self.upper[1]
            && self.stream_level(p[0], p[1]) > T::zero()
    }

    /// `0` (crest) above the midline, `1` (trough) below.
    pub fn arc_label(&self, p: &[T]) -> usize {
        let x = p[0].max(self.saddles[0][0]).min(self.saddles[1][0]);
        usize::from(p[1] < self.midline(x))
    }
}

/// Newton iteration on `grad psi = 0`.
fn critical_point<T: Real>(jet: &JetParams<T>, guess: [T; 2]) -> Option<[T; 2]> {
    let (mut x, mut y) = (guess[0], guess[1]);
    for _ in 0..100 {
        let e = jet.eval(x, y);
        let det = e.psi_xx * e.psi_yy - e.psi_xy * e.psi_xy;
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let dx = (e.psi_yy * e.psi_x - e.psi_xy * e.psi_y) / det;
        let dy = (e.psi_xx * e.psi_y - e.psi_xy * e.psi_x) / det;
        x = x - dx;
        y = y - dy;
        let g = jet.gradient(x, y);
        if (dx.abs() + dy.abs()) <= T::epsilon() * T::lit(16.0) * (x.abs() + y.abs()).max(T::one())
            || (g.1.abs() + g.2.abs()) <= T::epsilon() * T::lit(8.0)
        {
            return Some([x, y]);
        }
    }
    let g = jet.gradient(x, y);
    ((g.1.abs() + g.2.abs()) <= T::epsilon().sqrt()).then_some([x, y])
}

impl<T: Real> Domain<T> {
    /// Default eddy containing `(-0.2, 0.8)`.
    pub fn eddy(jet: JetParams<T>) -> Result<Self> {
        Ok(Domain::Eddy(EddyDomain::new(
            jet,
            [T::lit(EDDY_REFERENCE[0]), T::lit(EDDY_REFERENCE[1])],
        )?))
    }

    pub fn cuboid(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        Ok(Domain::Cuboid(Cuboid::new(lower, upper)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Eddy(_) => 2,
            Domain::Cuboid(c) => c.dim(),
        }
    }

    /// Names of the boundary components, indexed by label id.
    pub fn labels(&self) -> Vec<String> {
        match self {
            Domain::Eddy(_) => vec!["crest".into(), "trough".into()],
            Domain::Cuboid(c) => {
                let names = crate::basis::variable_names(c.dim());
                names
                    .iter()
                    .flat_map(|v| [format!("{v}min"), format!("{v}max")])
                    .collect()
            }
        }
    }

    pub fn label_id(&self, name: &str) -> Result<usize> {
        self.labels()
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    /// Resolves a list of label names; `"all"` selects every component.
    pub fn resolve_labels(&self, names: &[String]) -> Result<Vec<usize>> {
        if names.iter().any(|n| n == "all") {
            return Ok((0..self.labels().len()).collect());
        }
        let mut ids = names
            .iter()
            .map(|n| self.label_id(n))
            .collect::<Result<Vec<_>>>()?;
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match self {
            Domain::Eddy(e) => {
                let (l, u) = e.bounding_box();
                (l.to_vec(), u.to_vec())
            }
            Domain::Cuboid(c) => (c.lower.clone(), c.upper.clone()),
        }
    }

    /// Open-set membership.
    pub fn contains(&self, p: &[T]) -> bool {
        match self {
            Domain::Eddy(e) => e.contains(p),
            Domain::Cuboid(c) => (0..c.dim()).all(|k| p[k] > c.lower[k] && p[k] < c.upper[k]),
        }
    }

    /// Positive inside, zero on the boundary, negative outside. Only its sign
    /// and zero set are meaningful.
    pub fn level(&self, p: &[T]) -> T {
        match self {
            Domain::Eddy(e) => {
                let s = e.stream_level(p[0], p[1]);
                s.min(p[0] - e.saddles[0][0])
                    .min(e.saddles[1][0] - p[0])
                    .min(p[1] - e.lower[1])
                    .min(e.upper[1] - p[1])
            }
            Domain::Cuboid(c) => (0..c.dim())
                .map(|k| (p[k] - c.lower[k]).min(c.upper[k] - p[k]))
                .fold(T::infinity(), T::min),
        }
    }

    /// Label of the boundary component nearest to a point on or near `∂D`.
    pub fn boundary_label(&self, p: &[T]) -> usize {
        match self {
            Domain::Eddy(e) => e.arc_label(p),
            Domain::Cuboid(c) => {
                let mut best = (T::infinity(), 0);
                for k in 0..c.dim() {
                    for (upper_side, d) in [
                        (false, (p[k] - c.lower[k]).abs()),
                        (true, (c.upper[k] - p[k]).abs()),
                    ] {
                        if d < best.0 {
                            best = (d, Cuboid::<T>::face(k, upper_side));
                        }
                    }
                }
                best.1
            }
        }
    }

    /// Label of the component crossed by the segment from `inside` to
    /// `outside`.
    pub fn exit_label(&self, inside: &[T], outside: &[T]) -> usize {
        match self {
            Domain::Cuboid(c) => {
                // First face plane hit along the segment.
                let mut best = (T::infinity(), 0);
                for k in 0..c.dim() {
                    let d = outside[k] - inside[k];
                    if outside[k] <= c.lower[k] && d != T::zero() {
                        let t = (c.lower[k] - inside[k]) / d;
                        if t < best.0 {
                            best = (t, Cuboid::<T>::face(k, false));
                        }
                    }
                    if outside[k] >= c.upper[k] && d != T::zero() {
                        let t = (c.upper[k] - inside[k]) / d;
                        if t < best.0 {
                            best = (t, Cuboid::<T>::face(k, true));
                        }
                    }
                }
                if best.0.is_finite() {
                    best.1
                } else {
                    self.boundary_label(outside)
                }
            }
            Domain::Eddy(_) => {
                let t = self.crossing_fraction(inside, outside);
                let p: Vec<T> = inside
                    .iter()
                    .zip(outside)
                    .map(|(&a, &b)| a + (b - a) * t)
                    .collect();
                self.boundary_label(&p)
            }
        }
    }

    /// Fraction `t in (0, 1]` along the segment at which `level` first
    /// vanishes, by bisection. Returns `1` if the far end is not outside.
    pub fn crossing_fraction(&self, inside: &[T], outside: &[T]) -> T {
        if self.level(outside) > T::zero() {
            return T::one();
        }
        let mut lo = T::zero();
        let mut hi = T::one();
        let mut p = inside.to_vec();
        for _ in 0..60 {
            let mid = (lo + hi) / T::lit(2.0);
            for (k, v) in p.iter_mut().enumerate() {
                *v = inside[k] + (outside[k] - inside[k]) * mid;
            }
            if self.level(&p) > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / T::lit(2.0)
    }

    /// Whether `p` lies on the closure of component `label` (cuboids only;
    /// the eddy arcs are identified by [`boundary_label`](Self::boundary_label)).
    pub fn on_closure_of(&self, p: &[T], label: usize, tol: T) -> bool {
        match self {
            Domain::Cuboid(c) => {
                let k = label / 2;
                let plane = if label.is_multiple_of(2) {
                    c.lower[k]
                } else {
                    c.upper[k]
                };
                (p[k] - plane).abs() <= tol
                    && (0..c.dim()).all(|j| p[j] >= c.lower[j] - tol && p[j] <= c.upper[j] + tol)
            }
            Domain::Eddy(e) => self.level(p).abs() <= tol && e.arc_label(p) == label,
        }
    }

    /// Interior sample points: a structured set (midline columns for the
    /// eddy, a lattice for cuboids) and uniform random fill.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(count);
        let structured = count.div_ceil(2);
        match self {
            Domain::Eddy(e) => {
                let (x0, x1) = (e.saddles[0][0], e.saddles[1][0]);
                for i in 0..structured {
                    let x = x0
                        + (x1 - x0) * (T::from_usize_lossy(i) + T::lit(0.5))
                            / T::from_usize_lossy(structured);
                    let p = vec![x, e.midline(x)];
                    if e.contains(&p) {
                        out.push(p);
                    }
                }
            }
            Domain::Cuboid(c) => {
                let n = c.dim();
                let per_axis = ((structured as f64).powf(1.0 / n as f64).floor() as usize).max(1);
                let total = per_axis.pow(n as u32);
                for idx in 0..total {
                    let mut rem = idx;
                    let p: Vec<T> = (0..n)
                        .map(|k| {
                            let i = rem % per_axis;
                            rem /= per_axis;
                            let f = (T::from_usize_lossy(i) + T::lit(0.5))
                                / T::from_usize_lossy(per_axis);
                            c.lower[k] + (c.upper[k] - c.lower[k]) * f
                        })
                        .collect();
                    out.push(p);
                }
            }
        }
        let (lo, hi) = self.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut attempts = 0usize;
        while out.len() < count && attempts < 1000 * count.max(1) {
            attempts += 1;
            let p: Vec<T> = lo
                .iter()
                .zip(&hi)
                .map(|(&a, &b)| a + (b - a) * T::lit(rng.random::<f64>()))
                .collect();
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}
