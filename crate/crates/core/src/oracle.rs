//! Monte Carlo first-exit statistics by direct Euler-Maruyama simulation.
//!
//! Exits are detected naively: a path exits at the first step that lands
//! outside `D`. This overestimates residence times by roughly the effect of
//! pushing the boundary out by `0.5826 sqrt(a dt)`, reported as
//! [`ExitEstimate::boundary_shift`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pde::{Domain, SIEGMUND_CONSTANT};
use crate::report::KvReport;
use crate::scalar::Real;
use crate::sde::{NoiseStream, SdeModel, StepWork};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions<T> {
    pub paths: usize,
    pub dt: T,
    /// Paths still inside at this time are censored.
    pub horizon: T,
    pub seed: u64,
}

/// Exit statistics from one start point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitEstimate<T> {
    pub start: Vec<T>,
    pub paths: usize,
    pub dt: T,
    pub horizon: T,
    /// Mean exit time over exited paths.
    pub mean_exit_time: T,
    pub exit_time_se: T,
    pub labels: Vec<String>,
    /// Exits per boundary label.
    pub counts: Vec<usize>,
    pub censored: usize,
    /// Effective outward boundary displacement caused by discrete monitoring.
    pub boundary_shift: T,
}

impl<T: Real> ExitEstimate<T> {
    pub fn frequency(&self, label: usize) -> T {
        T::from_usize_lossy(self.counts[label]) / T::from_usize_lossy(self.paths)
    }

    /// Frequency of exiting through any of `labels` and its standard error.
    pub fn frequency_of(&self, labels: &[usize]) -> (T, T) {
        let hits: usize = labels.iter().map(|&l| self.counts[l]).sum();
        binomial(hits, self.paths)
    }

    /// Wilson score interval for the frequency of exiting through any of
    /// `labels` at normal quantile `z`. Unlike `f +- z se` it stays valid
    /// when no path (or every path) exits there.
    pub fn frequency_interval(&self, labels: &[usize], z: T) -> (T, T) {
        let hits: usize = labels.iter().map(|&l| self.counts[l]).sum();
        wilson(hits, self.paths, z)
    }

    pub fn censored_fraction(&self) -> T {
        T::from_usize_lossy(self.censored) / T::from_usize_lossy(self.paths)
    }

    pub fn to_report(&self) -> KvReport {
        let mut r = KvReport::new();
        r.push(
            "start",
            self.start
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        r.push("paths", self.paths);
        r.push_f64("dt", self.dt.to_f64_lossy());
        r.push_f64("horizon", self.horizon.to_f64_lossy());
        r.push_f64("mean_exit_time", self.mean_exit_time.to_f64_lossy());
        r.push_f64("exit_time_se", self.exit_time_se.to_f64_lossy());
        r.push("censored", self.censored);
        r.push_f64("boundary_shift", self.boundary_shift.to_f64_lossy());
        for (l, name) in self.labels.iter().enumerate() {
            let (f, se) = self.frequency_of(&[l]);
            r.push_f64(format!("frequency.{name}"), f.to_f64_lossy());
            r.push_f64(format!("frequency_se.{name}"), se.to_f64_lossy());
        }
        r
    }
}

fn binomial<T: Real>(hits: usize, n: usize) -> (T, T) {
    let nf = T::from_usize_lossy(n);
    let p = T::from_usize_lossy(hits) / nf;
    let var = if n > 1 {
        p * (T::one() - p) * nf / (nf - T::one())
    } else {
        T::zero()
    };
    (p, (var / nf).sqrt())
}

fn wilson<T: Real>(hits: usize, n: usize, z: T) -> (T, T) {
    let nf = T::from_usize_lossy(n);
    let p = T::from_usize_lossy(hits) / nf;
    let z2 = z * z;
    let denom = T::one() + z2 / nf;
    let center = (p + z2 / (T::lit(2.0) * nf)) / denom;
    let half = z / denom * (p * (T::one() - p) / nf + z2 / (T::lit(4.0) * nf * nf)).sqrt();
    (
        (center - half).max(T::zero()),
        (center + half).min(T::one()),
    )
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn validate<T: Real>(
    model: &SdeModel<T>,
    domain: &Domain<T>,
    opts: &OracleOptions<T>,
) -> Result<()> {
    if domain.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "domain dimension",
            expected: model.state_dim(),
            actual: domain.dim(),
        });
    }
    if opts.paths < 2 {
        return Err(Error::InvalidArgument(
            "at least two paths are needed for a standard error".into(),
        ));
    }
    if !(opts.dt > T::zero()) || !(opts.horizon >= opts.dt) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= horizon, got dt = {} and horizon = {}",
            opts.dt, opts.horizon
        )));
    }
    Ok(())
}

/// Largest diffusion coefficient over sampled interior points.
fn max_diffusion<T: Real>(model: &SdeModel<T>, domain: &Domain<T>, extra: &[T]) -> T {
    let n = model.state_dim();
    let mut s = vec![T::zero(); n];
    let mut best = T::zero();
    let mut visit = |p: &[T]| {
        model.diffusion_diagonal_into(p, &mut s);
        for v in &s {
            best = best.max(*v * *v);
        }
    };
    visit(extra);
    for p in domain.sample_points(256, 0) {
        visit(&p);
    }
    best
}

/// Simulates `opts.paths` paths from `x0`. Path `i` draws from noise stream
/// `i` of `opts.seed`, so the result does not depend on thread scheduling.
pub fn estimate_exit<T: Real>(
    model: &SdeModel<T>,
    domain: &Domain<T>,
    x0: &[T],
    opts: &OracleOptions<T>,
) -> Result<ExitEstimate<T>> {
    validate(model, domain, opts)?;
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "start point",
            expected: model.state_dim(),
            actual: x0.len(),
        });
    }
    if !domain.contains(x0) {
        return Err(Error::NotInterior(
            x0.iter().map(|v| v.to_f64_lossy()).collect(),
        ));
    }
    let n = model.state_dim();
    let max_steps = (opts.horizon / opts.dt).ceil().to_f64_lossy() as u64;
    let sqrt_dt = opts.dt.sqrt();
    let outcomes: Vec<Option<(usize, u64)>> = (0..opts.paths)
        .into_par_iter()
        .map_init(
            || {
                (
                    StepWork::default(),
                    vec![T::zero(); n],
                    vec![T::zero(); n],
                    vec![T::zero(); n],
                )
            },
            |(work, x, prev, db), i| {
                let mut rng = NoiseStream::new(opts.seed, i as u64).rng();
                x.copy_from_slice(x0);
                for step in 1..=max_steps {
                    prev.copy_from_slice(x);
                    for v in db.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = T::lit(z) * sqrt_dt;
                    }
                    model.euler_step(x, opts.dt, db, work);
                    if !domain.contains(x) {
                        return Some((domain.exit_label(prev, x), step));
                    }
                }
                None
            },
        )
        .collect();

    let labels = domain.labels();
    let mut counts = vec![0usize; labels.len()];
    let mut censored = 0;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut exited = 0usize;
    let dt = opts.dt.to_f64_lossy();
    for o in &outcomes {
        match *o {
            Some((label, steps)) => {
                counts[label] += 1;
                let t = steps as f64 * dt;
                sum += t;
                sum_sq += t * t;
                exited += 1;
            }
            None => censored += 1,
        }
    }
    let (mean, se) = if exited > 1 {
        let m = sum / exited as f64;
        let var = ((sum_sq - exited as f64 * m * m) / (exited - 1) as f64).max(0.0);
        (m, (var / exited as f64).sqrt())
    } else if exited == 1 {
        (sum, f64::INFINITY)
    } else {
        (f64::NAN, f64::INFINITY)
    };
    let a_max = max_diffusion(model, domain, x0);
    Ok(ExitEstimate {
        start: x0.to_vec(),
        paths: opts.paths,
        dt: opts.dt,
        horizon: opts.horizon,
        mean_exit_time: T::lit(mean),
        exit_time_se: T::lit(se),
        labels,
        counts,
        censored,
        boundary_shift: T::lit(SIEGMUND_CONSTANT) * (a_max * opts.dt).sqrt(),
    })
}

/// Average escape frequency over uniformly distributed starts.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageEscape<T> {
    pub mean: T,
    /// Standard error over start points.
    pub se: T,
    /// Half-width of the 99% confidence interval.
    pub half_width: T,
    pub starts: Vec<Vec<T>>,
    pub per_start: Vec<T>,
}

/// Seed used for start point `j` of [`estimate_average_escape`].
pub fn start_seed(seed: u64, j: usize) -> u64 {
    mix_seed(seed, j as u64)
}

pub fn estimate_average_escape<T: Real>(
    model: &SdeModel<T>,
    domain: &Domain<T>,
    gamma: &[usize],
    points: usize,
    opts: &OracleOptions<T>,
) -> Result<AverageEscape<T>> {
    validate(model, domain, opts)?;
    if points == 0 {
        return Err(Error::InvalidArgument(
            "need at least one start point".into(),
        ));
    }
    let count = domain.labels().len();
    if let Some(&bad) = gamma.iter().find(|&&l| l >= count) {
        return Err(Error::UnknownLabel(format!("label id {bad}")));
    }
    let (lo, hi) = domain.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, u64::MAX));
    let mut starts = Vec::with_capacity(points);
    let mut attempts = 0usize;
    while starts.len() < points {
        attempts += 1;
        if attempts > 10_000 * points {
            return Err(Error::InvalidArgument(
                "rejection sampling found no interior points".into(),
            ));
        }
        let p: Vec<T> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| a + (b - a) * T::lit(rng.random::<f64>()))
            .collect();
        if domain.contains(&p) {
            starts.push(p);
        }
    }
    let mut per_start = Vec::with_capacity(points);
    let mut single_se = T::zero();
    for (j, x0) in starts.iter().enumerate() {
        let o = OracleOptions {
            seed: start_seed(opts.seed, j),
            ..*opts
        };
        let est = estimate_exit(model, domain, x0, &o)?;
        let (f, se) = est.frequency_of(gamma);
        per_start.push(f);
        single_se = se;
    }
    let m = T::from_usize_lossy(points);
    let mean = per_start.iter().copied().sum::<T>() / m;
    let se = if points > 1 {
        let var = per_start
            .iter()
            .map(|&f| (f - mean) * (f - mean))
            .sum::<T>()
            / (m - T::one());
        (var / m).sqrt()
    } else {
        single_se
    };
    Ok(AverageEscape {
        mean,
        se,
        half_width: T::lit(Z99) * se,
        starts,
        per_start,
    })
}

/// Exit-time estimates at `dt` and `dt / 2` with common seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct DtSensitivity<T> {
    pub coarse: ExitEstimate<T>,
    pub fine: ExitEstimate<T>,
    pub time_shift: T,
    /// Halving the step moved the mean exit time by more than one standard
    /// error of the coarse estimate.
    pub flagged: bool,
}

pub fn dt_sensitivity<T: Real>(
    model: &SdeModel<T>,
    domain: &Domain<T>,
    x0: &[T],
    opts: &OracleOptions<T>,
) -> Result<DtSensitivity<T>> {
    let coarse = estimate_exit(model, domain, x0, opts)?;
    let fine_opts = OracleOptions {
        dt: opts.dt / T::lit(2.0),
        ..*opts
    };
    let fine = estimate_exit(model, domain, x0, &fine_opts)?;
    let time_shift = coarse.mean_exit_time - fine.mean_exit_time;
    let flagged = time_shift.abs() > coarse.exit_time_se;
    Ok(DtSensitivity {
        coarse,
        fine,
        time_shift,
        flagged,
    })
}
