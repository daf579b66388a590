use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Identifies an independent random stream: a base seed and a stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `steps x channels` Gaussian increments with variance `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath<T> {
    dt: T,
    channels: usize,
    increments: Vec<T>,
}

impl<T: Real> BrownianPath<T> {
    pub fn from_increments(dt: T, channels: usize, increments: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if channels == 0 || !increments.len().is_multiple_of(channels) {
            return Err(Error::DimensionMismatch {
                context: "Brownian increments",
                expected: channels,
                actual: increments.len(),
            });
        }
        Ok(Self {
            dt,
            channels,
            increments,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.channels
    }

    /// Increments of step `i`, one per channel.
    #[inline]
    pub fn increment(&self, i: usize) -> &[T] {
        &self.increments[i * self.channels..(i + 1) * self.channels]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.increments
    }
}

/// Reproducible path from stream 0 of `seed`.
pub fn sample_brownian<T: Real>(
    steps: usize,
    channels: usize,
    dt: T,
    seed: u64,
) -> Result<BrownianPath<T>> {
    sample_brownian_stream(steps, channels, dt, NoiseStream::new(seed, 0))
}

pub fn sample_brownian_stream<T: Real>(
    steps: usize,
    channels: usize,
    dt: T,
    stream: NoiseStream,
) -> Result<BrownianPath<T>> {
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "Brownian path needs at least one step".into(),
        ));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut rng = stream.rng();
    let sd = dt.to_f64_lossy().sqrt();
    let increments = (0..steps * channels)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(z * sd)
        })
        .collect();
    BrownianPath::from_increments(dt, channels, increments)
}
