//! Bickley-jet stream function `psi = -tanh(y) + a sech^2(y) cos(kx) + c y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Meander amplitude `a` and beta-plane parameter `beta`.
///
/// `c = (1 + sqrt(1 - 3 beta / 2)) / 3` and `k = sqrt(6 c)` are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetParams<T> {
    pub a: T,
    pub beta: T,
}

/// Value, gradient and Hessian of the stream function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamEval<T> {
    pub psi: T,
    pub psi_x: T,
    pub psi_y: T,
    pub psi_xx: T,
    pub psi_xy: T,
    pub psi_yy: T,
}

impl<T: Real> Default for JetParams<T> {
    fn default() -> Self {
        Self {
            a: T::lit(0.01),
            beta: T::lit(1.0 / 3.0),
        }
    }
}

impl<T: Real> JetParams<T> {
    pub fn new(a: T, beta: T) -> Result<Self> {
        let p = Self { a, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.beta;
        if !(b >= T::zero() && b <= T::lit(2.0) / T::lit(3.0)) {
            return Err(Error::BetaOutOfRange(b.to_f64_lossy()));
        }
        Ok(())
    }

    pub fn c(&self) -> T {
        let disc = (T::one() - T::lit(1.5) * self.beta).max(T::zero());
        (T::one() + disc.sqrt()) / T::lit(3.0)
    }

    pub fn k(&self) -> T {
        (T::lit(6.0) * self.c()).sqrt()
    }

    /// Meander wavelength `2 pi / k`.
    pub fn wavelength(&self) -> T {
        T::TAU() / self.k()
    }

    #[inline]
    pub fn psi(&self, x: T, y: T) -> T {
        let sech2 = sech2(y);
        -y.tanh() + self.a * sech2 * (self.k() * x).cos() + self.c() * y
    }

    /// `(psi, psi_x, psi_y)`.
    #[inline]
    pub fn gradient(&self, x: T, y: T) -> (T, T, T) {
        let k = self.k();
        let c = self.c();
        let th = y.tanh();
        let s2 = T::one() - th * th;
        let (sin, cos) = (k * x).sin_cos();
        let psi = -th + self.a * s2 * cos + c * y;
        let psi_x = -self.a * k * s2 * sin;
        let psi_y = -s2 - T::lit(2.0) * self.a * s2 * th * cos + c;
        (psi, psi_x, psi_y)
    }

    /// Velocity field `(-psi_y, psi_x)`.
    #[inline]
    pub fn velocity(&self, x: T, y: T) -> (T, T) {
        let (_, px, py) = self.gradient(x, y);
        (-py, px)
    }

    pub fn eval(&self, x: T, y: T) -> StreamEval<T> {
        let k = self.k();
        let two = T::lit(2.0);
        let (psi, psi_x, psi_y) = self.gradient(x, y);
        let th = y.tanh();
        let s2 = T::one() - th * th;
        let (sin, cos) = (k * x).sin_cos();
        let psi_xx = -self.a * k * k * s2 * cos;
        let psi_xy = two * self.a * k * s2 * th * sin;
        let d2_sech2 = T::lit(4.0) * s2 * th * th - two * s2 * s2;
        let psi_yy = two * s2 * th + self.a * cos * d2_sech2;
        StreamEval {
            psi,
            psi_x,
            psi_y,
            psi_xx,
            psi_xy,
            psi_yy,
        }
    }
}

#[inline]
fn sech2<T: Real>(y: T) -> T {
    let th = y.tanh();
    T::one() - th * th
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_value() {
        let jet = JetParams::<f64>::new(0.01, 1.0 / 3.0).unwrap();
        assert!((jet.psi(0.0, 0.0) - 0.01).abs() < 1e-15);
        let c = (1.0 + 0.5f64.sqrt()) / 3.0;
        assert!((jet.c() - c).abs() < 1e-15);
        assert!((jet.k() - (6.0 * c).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psi_x_vanishes_on_axis() {
        let jet = JetParams::<f64>::default();
        for y in [-3.0, -0.5, 0.0, 0.8, 2.0] {
            assert_eq!(jet.gradient(0.0, y).1, 0.0);
        }
    }

    #[test]
    fn beta_range_enforced() {
        assert!(JetParams::new(0.01, -0.1).is_err());
        assert!(JetParams::new(0.01, 0.7).is_err());
        assert!(JetParams::new(0.01, 2.0 / 3.0).is_ok());
        assert!(JetParams::new(0.01, 0.0).is_ok());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let jet = JetParams::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs().max(b.abs()).max(1e-3));
        for _ in 0..50 {
            let x = rng.random_range(-4.0..4.0);
            let y = rng.random_range(-2.5..2.5);
            let e = jet.eval(x, y);
            let fx = (jet.psi(x + h, y) - jet.psi(x - h, y)) / (2.0 * h);
            let fy = (jet.psi(x, y + h) - jet.psi(x, y - h)) / (2.0 * h);
            assert!(rel(e.psi_x, fx) <= 1e-6, "psi_x {} vs {}", e.psi_x, fx);
            assert!(rel(e.psi_y, fy) <= 1e-6, "psi_y {} vs {}", e.psi_y, fy);
            let gxx = (jet.gradient(x + h, y).1 - jet.gradient(x - h, y).1) / (2.0 * h);
            let gxy = (jet.gradient(x, y + h).1 - jet.gradient(x, y - h).1) / (2.0 * h);
            let gyy = (jet.gradient(x, y + h).2 - jet.gradient(x, y - h).2) / (2.0 * h);
            assert!(rel(e.psi_xx, gxx) <= 1e-6);
            assert!(rel(e.psi_xy, gxy) <= 1e-6);
            assert!(rel(e.psi_yy, gyy) <= 1e-6);
        }
    }
}
