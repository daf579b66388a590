//! SDE models `dX = b(X) dt + sigma(X) dB`, benchmark systems, Brownian
//! paths, and Euler-Maruyama simulation that keeps the driving increments.

mod brownian;
mod jet;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use brownian::{sample_brownian, sample_brownian_stream, BrownianPath, NoiseStream};
pub use jet::{JetParams, StreamEval};
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryRecord};

/// Drift given as one coefficient vector per state component over a
/// polynomial library.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialDrift<T> {
    basis: BasisSpec,
    coeffs: Vec<Vec<T>>,
}

impl<T: Real> PolynomialDrift<T> {
    /// `coeffs[i]` drives component `i`; each has `basis.polynomial_len()` entries.
    pub fn new(basis: BasisSpec, coeffs: Vec<Vec<T>>) -> Result<Self> {
        let basis = basis.without_noise();
        if coeffs.len() != basis.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "drift components",
                expected: basis.state_dim(),
                actual: coeffs.len(),
            });
        }
        for c in &coeffs {
            if c.len() != basis.polynomial_len() {
                return Err(Error::DimensionMismatch {
                    context: "drift coefficients",
                    expected: basis.polynomial_len(),
                    actual: c.len(),
                });
            }
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zero(state_dim: usize) -> Self {
        let basis = BasisSpec::polynomial(state_dim, 0).expect("valid basis");
        Self {
            basis,
            coeffs: vec![vec![T::zero()]; state_dim],
        }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coeffs(&self) -> &[Vec<T>] {
        &self.coeffs
    }

    fn eval_into(&self, x: &[T], out: &mut [T], scratch: &mut Vec<T>) {
        scratch.resize(self.basis.polynomial_len(), T::zero());
        self.basis.eval_monomials(x, scratch);
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = crate::scalar::dot(c, scratch);
        }
    }
}

/// Deterministic part of the model.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift<T> {
    Polynomial(PolynomialDrift<T>),
    /// Closed-form jet velocity `(-psi_y, psi_x)`.
    Jet(JetParams<T>),
}

impl<T: Real> Drift<T> {
    pub fn state_dim(&self) -> usize {
        match self {
            Drift::Polynomial(p) => p.basis.state_dim(),
            Drift::Jet(_) => 2,
        }
    }
}

/// How `sigma(x)` depends on the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionKind {
    /// `sigma_kk = s_k`.
    Additive,
    /// `sigma_kk = s_k x_k`.
    DiagonalMultiplicative,
}

/// Diagonal diffusion: channel `k` drives component `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec<T> {
    pub kind: DiffusionKind,
    pub intensities: Vec<T>,
}

impl<T: Real> DiffusionSpec<T> {
    pub fn additive(intensities: Vec<T>) -> Self {
        Self {
            kind: DiffusionKind::Additive,
            intensities,
        }
    }

    pub fn multiplicative(intensities: Vec<T>) -> Self {
        Self {
            kind: DiffusionKind::DiagonalMultiplicative,
            intensities,
        }
    }

    pub fn channels(&self) -> usize {
        self.intensities.len()
    }

    /// Diagonal entries `sigma_kk(x)`.
    #[inline]
    pub fn diagonal_into(&self, x: &[T], out: &mut [T]) {
        match self.kind {
            DiffusionKind::Additive => out.copy_from_slice(&self.intensities),
            DiffusionKind::DiagonalMultiplicative => {
                for ((o, &s), &xi) in out.iter_mut().zip(&self.intensities).zip(x) {
                    *o = s * xi;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.intensities.iter().all(|s| *s == T::zero())
    }
}

/// A complete SDE: drift, diagonal diffusion and a provenance tag.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeModel<T> {
    pub drift: Drift<T>,
    pub diffusion: DiffusionSpec<T>,
    pub tag: String,
}

impl<T: Real> SdeModel<T> {
    pub fn new(
        drift: Drift<T>,
        diffusion: DiffusionSpec<T>,
        tag: impl Into<String>,
    ) -> Result<Self> {
        let n = drift.state_dim();
        if diffusion.channels() != n {
            return Err(Error::DimensionMismatch {
                context: "diagonal diffusion channels",
                expected: n,
                actual: diffusion.channels(),
            });
        }
        Ok(Self {
            drift,
            diffusion,
            tag: tag.into(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.drift.state_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.channels()
    }

    /// `b(x)` into `out`, no allocation after the first call with `scratch`.
    #[inline]
    pub fn drift_into(&self, x: &[T], out: &mut [T], scratch: &mut Vec<T>) {
        match &self.drift {
            Drift::Polynomial(p) => p.eval_into(x, out, scratch),
            Drift::Jet(j) => {
                let (u, v) = j.velocity(x[0], x[1]);
                out[0] = u;
                out[1] = v;
            }
        }
    }

    pub fn drift_at(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.state_dim()];
        let mut scratch = Vec::new();
        self.drift_into(x, &mut out, &mut scratch);
        out
    }

    #[inline]
    pub fn diffusion_diagonal_into(&self, x: &[T], out: &mut [T]) {
        self.diffusion.diagonal_into(x, out);
    }

    /// Full `n x m` diffusion matrix `sigma(x)`.
    pub fn sigma_at(&self, x: &[T]) -> crate::linalg::Matrix<T> {
        let n = self.state_dim();
        let mut d = vec![T::zero(); n];
        self.diffusion_diagonal_into(x, &mut d);
        let mut m = crate::linalg::Matrix::zeros(n, self.noise_dim());
        for (k, v) in d.into_iter().enumerate() {
            m[(k, k)] = v;
        }
        m
    }

    /// One Euler-Maruyama step in place.
    #[inline]
    pub fn euler_step(&self, x: &mut [T], dt: T, increments: &[T], work: &mut StepWork<T>) {
        let n = x.len();
        work.ensure(n);
        self.drift_into(x, &mut work.drift, &mut work.scratch);
        self.diffusion.diagonal_into(x, &mut work.sigma);
        for i in 0..n {
            x[i] = x[i] + work.drift[i] * dt + work.sigma[i] * increments[i];
        }
    }
}

/// Reusable buffers for [`SdeModel::euler_step`].
#[derive(Debug, Default, Clone)]
pub struct StepWork<T> {
    drift: Vec<T>,
    sigma: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> StepWork<T> {
    fn ensure(&mut self, n: usize) {
        if self.drift.len() != n {
            self.drift = vec![T::zero(); n];
            self.sigma = vec![T::zero(); n];
        }
    }
}

/// Benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    JetAdditive,
    JetMultiplicative,
    Linear3d,
    Lorenz,
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::JetAdditive => "jet-additive",
            Builtin::JetMultiplicative => "jet-multiplicative",
            Builtin::Linear3d => "linear3d",
            Builtin::Lorenz => "lorenz",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Builtin::JetAdditive | Builtin::JetMultiplicative => 2,
            Builtin::Linear3d | Builtin::Lorenz => 3,
        }
    }

    /// Initial condition used for the published tables.
    pub fn default_x0<T: Real>(&self) -> Vec<T> {
        let v: &[f64] = match self {
            Builtin::JetAdditive | Builtin::JetMultiplicative => &[-0.2, 0.8],
            Builtin::Linear3d => &[1.0, 1.0, 1.0],
            Builtin::Lorenz => &[-8.0, 7.0, 27.0],
        };
        v.iter().map(|&x| T::lit(x)).collect()
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jet-additive" => Ok(Builtin::JetAdditive),
            "jet-multiplicative" => Ok(Builtin::JetMultiplicative),
            "linear3d" => Ok(Builtin::Linear3d),
            "lorenz" => Ok(Builtin::Lorenz),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Noise parameter of a built-in system.
///
/// Jet systems take the diffusion coefficient `sigma` directly. The 3D systems
/// take the intensity `epsilon`, with diffusion `sqrt(epsilon)` per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams<T> {
    pub intensity: T,
    pub jet: JetParams<T>,
}

impl<T: Real> NoiseParams<T> {
    pub fn new(intensity: T) -> Self {
        Self {
            intensity,
            jet: JetParams::default(),
        }
    }
}

/// Builds a built-in model by name.
pub fn make_builtin<T: Real>(name: &str, noise: NoiseParams<T>) -> Result<SdeModel<T>> {
    builtin_model(name.parse()?, noise)
}

pub fn builtin_model<T: Real>(which: Builtin, noise: NoiseParams<T>) -> Result<SdeModel<T>> {
    if noise.intensity < T::zero() || !noise.intensity.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise intensity must be finite and non-negative, got {}",
            noise.intensity
        )));
    }
    match which {
        Builtin::JetAdditive | Builtin::JetMultiplicative => {
            noise.jet.validate()?;
            let s = vec![noise.intensity; 2];
            let diffusion = if which == Builtin::JetAdditive {
                DiffusionSpec::additive(s)
            } else {
                DiffusionSpec::multiplicative(s)
            };
            SdeModel::new(Drift::Jet(noise.jet), diffusion, which.name())
        }
        Builtin::Linear3d => {
            let drift = quadratic_drift(&[
                &[([1, 0, 0], -0.1), ([0, 1, 0], -2.0)],
                &[([1, 0, 0], 2.0), ([0, 1, 0], -0.1)],
                &[([0, 0, 1], -0.3)],
            ]);
            let s = noise.intensity.sqrt();
            SdeModel::new(drift, DiffusionSpec::additive(vec![s; 3]), which.name())
        }
        Builtin::Lorenz => {
            let (sigma, rho, beta) = (10.0, 28.0, 8.0 / 3.0);
            let drift = quadratic_drift(&[
                &[([1, 0, 0], -sigma), ([0, 1, 0], sigma)],
                &[([1, 0, 0], rho), ([1, 0, 1], -1.0), ([0, 1, 0], -1.0)],
                &[([1, 1, 0], 1.0), ([0, 0, 1], -beta)],
            ]);
            let s = noise.intensity.sqrt();
            SdeModel::new(drift, DiffusionSpec::additive(vec![s; 3]), which.name())
        }
    }
}

fn quadratic_drift<T: Real>(components: &[&[([u32; 3], f64)]]) -> Drift<T> {
    let basis = BasisSpec::polynomial(3, 2).expect("valid basis");
    let coeffs = components
        .iter()
        .map(|terms| {
            let mut c = vec![T::zero(); basis.polynomial_len()];
            for (e, v) in terms.iter() {
                c[basis.term_index(e).expect("degree-2 term")] = T::lit(*v);
            }
            c
        })
        .collect();
    Drift::Polynomial(PolynomialDrift::new(basis, coeffs).expect("consistent drift"))
}

/// Euler-Maruyama driven by a recorded Brownian path.
///
/// `x_{i+1} = x_i + b(x_i) dt + sigma(x_i) dB_i`. Aborts with the step index if
/// a state component stops being finite.
pub fn euler_maruyama<T: Real>(
    model: &SdeModel<T>,
    x0: &[T],
    path: &BrownianPath<T>,
) -> Result<TrajectoryRecord<T>> {
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial condition",
            expected: n,
            actual: x0.len(),
        });
    }
    if path.channels() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            context: "Brownian channels",
            expected: model.noise_dim(),
            actual: path.channels(),
        });
    }
    let steps = path.steps();
    let dt = path.dt();
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut work = StepWork::default();
    for i in 0..steps {
        model.euler_step(&mut x, dt, path.increment(i), &mut work);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: i + 1 });
        }
        states.extend_from_slice(&x);
    }
    Ok(TrajectoryRecord::new(
        n,
        states,
        path.clone(),
        model.tag.clone(),
    ))
}

/// Simulates one trajectory per initial condition. Member `i` uses noise
/// stream `i` of `seed`, so results do not depend on scheduling.
pub fn simulate_ensemble<T: Real>(
    model: &SdeModel<T>,
    x0_list: &[Vec<T>],
    steps: usize,
    dt: T,
    seed: u64,
) -> Result<Vec<TrajectoryRecord<T>>> {
    x0_list
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let path = sample_brownian_stream(
                steps,
                model.noise_dim(),
                dt,
                NoiseStream::new(seed, i as u64),
            )?;
            euler_maruyama(model, x0, &path)
        })
        .collect()
}

/// Initial positions for the 20-trajectory jet/eddy layout: ten in the
/// northern eddy row, five in the jet core, five in the southern row.
pub fn jet_layout_initial_positions<T: Real>() -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(20);
    for i in 0..10 {
        out.push(vec![T::lit(-3.0 + 0.6 * i as f64), T::lit(0.8)]);
    }
    for i in 0..5 {
        out.push(vec![T::lit(-2.0 + 1.0 * i as f64), T::lit(0.0)]);
    }
    for i in 0..5 {
        out.push(vec![T::lit(-2.0 + 1.0 * i as f64), T::lit(-0.8)]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(eps: f64) -> SdeModel<f64> {
        builtin_model(Builtin::Linear3d, NoiseParams::new(eps)).unwrap()
    }

    #[test]
    fn linear3d_drift() {
        let b = linear(0.9).drift_at(&[1.0, 1.0, 1.0]);
        let want = [-2.1, 1.9, -0.3];
        for (g, w) in b.iter().zip(want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn lorenz_drift() {
        let m = make_builtin("lorenz", NoiseParams::new(0.9)).unwrap();
        let b = m.drift_at(&[-8.0, 7.0, 27.0]);
        assert_eq!(b, vec![150.0, -15.0, -128.0]);
    }

    #[test]
    fn unknown_builtin_rejected() {
        assert!(matches!(
            make_builtin::<f64>("duffing", NoiseParams::new(0.1)),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn zero_drift_zero_noise_is_constant() {
        let m = SdeModel::new(
            Drift::Polynomial(PolynomialDrift::<f64>::zero(2)),
            DiffusionSpec::additive(vec![0.0, 0.0]),
            "null",
        )
        .unwrap();
        let path = sample_brownian(100, 2, 0.01, 3).unwrap();
        let rec = euler_maruyama(&m, &[0.3, -0.7], &path).unwrap();
        for i in 0..=100 {
            assert_eq!(rec.state(i), &[0.3, -0.7]);
        }
    }

    #[test]
    fn linear3d_noiseless_tracks_exponential() {
        let m = linear(0.0);
        let path = sample_brownian(100, 3, 0.01, 1).unwrap();
        let rec = euler_maruyama(&m, &[1.0, 1.0, 1.0], &path).unwrap();
        let z = rec.state(100)[2];
        assert!((z - (-0.3f64).exp()).abs() <= 0.01, "z(1) = {z}");
        assert!((rec.times()[100] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_jet_conserves_stream_function() {
        let jet = JetParams::<f64>::default();
        let m = builtin_model(Builtin::JetAdditive, NoiseParams::new(0.0)).unwrap();
        let dt = 0.01;
        let path = sample_brownian(2000, 2, dt, 5).unwrap();
        let rec = euler_maruyama(&m, &[-0.2, 0.8], &path).unwrap();
        let mut worst = 0.0f64;
        for i in 0..2000 {
            let a = rec.state(i);
            let b = rec.state(i + 1);
            worst = worst.max((jet.psi(b[0], b[1]) - jet.psi(a[0], a[1])).abs());
        }
        // Euler's local error is second order in dt; allow O(dt) with margin.
        assert!(worst <= dt * dt, "max per-step psi drift {worst}");
    }

    #[test]
    fn blow_up_is_reported() {
        // dx = x^2 dt from x0 = 10 escapes to infinity quickly.
        let basis = BasisSpec::polynomial(1, 2).unwrap();
        let drift = PolynomialDrift::new(basis, vec![vec![0.0, 0.0, 1.0]]).unwrap();
        let m = SdeModel::new(
            Drift::Polynomial(drift),
            DiffusionSpec::additive(vec![0.0]),
            "blowup",
        )
        .unwrap();
        let path = sample_brownian(10_000, 1, 0.1, 0).unwrap();
        match euler_maruyama(&m, &[10.0], &path) {
            Err(Error::BlowUp { step }) => assert!(step > 1 && step < 50),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn replaying_recorded_increments_reproduces_states() {
        let m = builtin_model(Builtin::JetMultiplicative, NoiseParams::new(0.3f64.sqrt())).unwrap();
        let path = sample_brownian(500, 2, 0.01, 99).unwrap();
        let a = euler_maruyama(&m, &[-0.2, 0.8], &path).unwrap();
        let b = euler_maruyama(&m, &[-0.2, 0.8], a.increments()).unwrap();
        assert_eq!(a.states(), b.states());
    }

    #[test]
    fn ensemble_members_are_independent_and_reproducible() {
        let m = linear(0.9);
        let x0 = vec![vec![1.0, 1.0, 1.0]; 4];
        let a = simulate_ensemble(&m, &x0, 50, 0.01, 7).unwrap();
        let b = simulate_ensemble(&m, &x0, 50, 0.01, 7).unwrap();
        assert_eq!(a.len(), 4);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.states(), rb.states());
        }
        assert_ne!(a[0].states(), a[1].states());
        // member 0 uses stream 0, identical to the single-path sampler
        let single = sample_brownian(50, 3, 0.01, 7).unwrap();
        assert_eq!(a[0].increments(), &single);
    }

    #[test]
    fn jet_layout_has_twenty_members() {
        let m = builtin_model(Builtin::JetAdditive, NoiseParams::new(0.3f64.sqrt())).unwrap();
        let x0 = jet_layout_initial_positions::<f64>();
        let recs = simulate_ensemble(&m, &x0, 100, 0.01, 1).unwrap();
        assert_eq!(recs.len(), 20);
    }

    #[test]
    fn single_precision_simulation() {
        let m = builtin_model(Builtin::Linear3d, NoiseParams::new(0.9f32)).unwrap();
        let path = sample_brownian(100, 3, 0.01f32, 4).unwrap();
        let rec = euler_maruyama(&m, &[1.0, 1.0, 1.0], &path).unwrap();
        assert!(rec.state(100).iter().all(|v| v.is_finite()));
    }
}
