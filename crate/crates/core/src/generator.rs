//! The generator `A g = b . grad g + 1/2 Tr[a H(g)]` with `a = sigma sigma^T`.

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::pde::Domain;
use crate::scalar::Real;
use crate::sde::SdeModel;

/// Drift and diffusion tensor at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCoefficients<T> {
    pub drift: Vec<T>,
    /// `sigma(x) sigma(x)^T`.
    pub diffusion: Matrix<T>,
}

pub fn coefficients_at<T: Real>(model: &SdeModel<T>, x: &[T]) -> Result<GeneratorCoefficients<T>> {
    check_len(model, x)?;
    let sigma = model.sigma_at(x);
    let diffusion = sigma.matmul(&sigma.transpose())?;
    Ok(GeneratorCoefficients {
        drift: model.drift_at(x),
        diffusion,
    })
}

fn check_len<T: Real>(model: &SdeModel<T>, x: &[T]) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "evaluation point",
            expected: model.state_dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Twice-differentiable test function.
pub trait ScalarField<T> {
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T]) -> Vec<T>;
    fn hessian(&self, x: &[T]) -> Matrix<T>;
}

/// Wraps a plain function; derivatives by central differences with step `h`.
pub struct FiniteDifferenceField<F, T> {
    f: F,
    h: T,
}

impl<F, T: Real> FiniteDifferenceField<F, T>
where
    F: Fn(&[T]) -> T,
{
    pub fn new(f: F, h: T) -> Self {
        Self { f, h }
    }
}

impl<F, T: Real> ScalarField<T> for FiniteDifferenceField<F, T>
where
    F: Fn(&[T]) -> T,
{
    fn value(&self, x: &[T]) -> T {
        (self.f)(x)
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut p = x.to_vec();
        (0..x.len())
            .map(|k| {
                p[k] = x[k] + self.h;
                let fp = (self.f)(&p);
                p[k] = x[k] - self.h;
                let fm = (self.f)(&p);
                p[k] = x[k];
                (fp - fm) / (T::lit(2.0) * self.h)
            })
            .collect()
    }

    fn hessian(&self, x: &[T]) -> Matrix<T> {
        let n = x.len();
        let h = self.h;
        let f0 = (self.f)(x);
        let mut m = Matrix::zeros(n, n);
        let mut p = x.to_vec();
        for i in 0..n {
            p[i] = x[i] + h;
            let fp = (self.f)(&p);
            p[i] = x[i] - h;
            let fm = (self.f)(&p);
            p[i] = x[i];
            m[(i, i)] = (fp - T::lit(2.0) * f0 + fm) / (h * h);
            for j in 0..i {
                let mut eval = |si: T, sj: T| {
                    p[i] = x[i] + si * h;
                    p[j] = x[j] + sj * h;
                    let v = (self.f)(&p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                let one = T::one();
                let v = (eval(one, one) - eval(one, -one) - eval(-one, one) + eval(-one, -one))
                    / (T::lit(4.0) * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// `b(x) . grad g(x) + 1/2 sum_ij a_ij(x) d_ij g(x)`.
pub fn apply_generator<T: Real, G: ScalarField<T> + ?Sized>(
    model: &SdeModel<T>,
    g: &G,
    x: &[T],
) -> Result<T> {
    let c = coefficients_at(model, x)?;
    let grad = g.gradient(x);
    let hess = g.hessian(x);
    let n = x.len();
    let mut out = c.drift.iter().zip(&grad).map(|(&b, &d)| b * d).sum::<T>();
    let mut tr = T::zero();
    for i in 0..n {
        for j in 0..n {
            tr = tr + c.diffusion[(i, j)] * hess[(i, j)];
        }
    }
    out = out + tr / T::lit(2.0);
    Ok(out)
}

/// Outcome of a uniform-ellipticity check over sampled interior points.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityCertificate<T> {
    pub samples: usize,
    /// Minimum over samples of the smallest eigenvalue of `a(x)`.
    pub min_eigenvalue: T,
    /// Sample attaining the minimum.
    pub argmin: Vec<T>,
    pub threshold: T,
    pub pass: bool,
}

/// Default lower bound `C` for [`check_ellipticity`].
pub const DEFAULT_ELLIPTICITY_THRESHOLD: f64 = 1e-3;

pub fn check_ellipticity<T: Real>(
    model: &SdeModel<T>,
    domain: &Domain<T>,
    samples: usize,
    threshold: T,
    seed: u64,
) -> Result<EllipticityCertificate<T>> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "ellipticity check needs at least one sample".into(),
        ));
    }
    if domain.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "domain dimension",
            expected: model.state_dim(),
            actual: domain.dim(),
        });
    }
    let points = domain.sample_points(samples, seed);
    let mut best: Option<(T, Vec<T>)> = None;
    for p in &points {
        let c = coefficients_at(model, p)?;
        let lam = symmetric_eigenvalues(&c.diffusion)[0];
        if best.as_ref().is_none_or(|(m, _)| lam < *m) {
            best = Some((lam, p.clone()));
        }
    }
    let (min_eigenvalue, argmin) =
        best.ok_or_else(|| Error::InvalidArgument("no interior sample found".into()))?;
    Ok(EllipticityCertificate {
        samples: points.len(),
        min_eigenvalue,
        argmin,
        threshold,
        pass: min_eigenvalue >= threshold && min_eigenvalue > T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{builtin_model, Builtin, JetParams, NoiseParams};

    struct Poly<F>(F);

    impl<F: Fn(&[f64]) -> (f64, Vec<f64>, Matrix<f64>)> ScalarField<f64> for Poly<F> {
        fn value(&self, x: &[f64]) -> f64 {
            (self.0)(x).0
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            (self.0)(x).1
        }
        fn hessian(&self, x: &[f64]) -> Matrix<f64> {
            (self.0)(x).2
        }
    }

    fn jet(which: Builtin) -> SdeModel<f64> {
        builtin_model(which, NoiseParams::new(0.3f64.sqrt())).unwrap()
    }

    #[test]
    fn diffusion_tensors() {
        let c = coefficients_at(&jet(Builtin::JetAdditive), &[0.4, -1.3]).unwrap();
        assert!(
            (c.diffusion[(0, 0)] - 0.3).abs() < 1e-15 && (c.diffusion[(1, 1)] - 0.3).abs() < 1e-15
        );
        assert_eq!(c.diffusion[(0, 1)], 0.0);
        let c = coefficients_at(&jet(Builtin::JetMultiplicative), &[0.4, -1.3]).unwrap();
        assert!((c.diffusion[(0, 0)] - 0.3 * 0.16).abs() < 1e-14);
        assert!((c.diffusion[(1, 1)] - 0.3 * 1.69).abs() < 1e-14);
        let zero = builtin_model::<f64>(Builtin::Lorenz, NoiseParams::new(0.0)).unwrap();
        let c = coefficients_at(&zero, &[1.0, 2.0, 3.0]).unwrap();
        assert!(c.diffusion.as_slice().iter().all(|&v| v == 0.0));
        assert!(coefficients_at(&zero, &[1.0]).is_err());
    }

    #[test]
    fn generator_examples() {
        let lin = builtin_model::<f64>(Builtin::Linear3d, NoiseParams::new(0.9)).unwrap();
        let z = Poly(|_: &[f64]| (0.0, vec![0.0, 0.0, 1.0], Matrix::zeros(3, 3)));
        let x = [0.3, -0.7, 0.45];
        assert!((apply_generator(&lin, &z, &x).unwrap() + 0.3 * 0.45).abs() < 1e-15);

        let konst = Poly(|_: &[f64]| (2.0, vec![0.0; 3], Matrix::zeros(3, 3)));
        assert_eq!(apply_generator(&lin, &konst, &x).unwrap(), 0.0);

        let sq = Poly(|p: &[f64]| {
            let mut h = Matrix::zeros(3, 3);
            h[(0, 0)] = 2.0;
            (p[0] * p[0], vec![2.0 * p[0], 0.0, 0.0], h)
        });
        let b1 = -0.1 * x[0] - 2.0 * x[1];
        assert!((apply_generator(&lin, &sq, &x).unwrap() - (2.0 * x[0] * b1 + 0.9)).abs() < 1e-13);
    }

    #[test]
    fn matches_finite_difference_composite() {
        // Independent oracle: evaluate g on a 9-point stencil and combine.
        let m = jet(Builtin::JetMultiplicative);
        let g = |p: &[f64]| (1.3 * p[0]).sin() * (0.7 * p[1]).exp() + p[0] * p[0] * p[1];
        let field = FiniteDifferenceField::new(g, 1e-4);
        let x: [f64; 2] = [-1.1, 0.75];
        let exact = {
            let (s, c) = (1.3 * x[0]).sin_cos();
            let e = (0.7 * x[1]).exp();
            let gx = 1.3 * c * e + 2.0 * x[0] * x[1];
            let gy = 0.7 * s * e + x[0] * x[0];
            let gxx = -1.69 * s * e + 2.0 * x[1];
            let gyy = 0.49 * s * e;
            let b = m.drift_at(&x);
            b[0] * gx + b[1] * gy + 0.5 * (0.3 * x[0] * x[0] * gxx + 0.3 * x[1] * x[1] * gyy)
        };
        let mut prev = f64::INFINITY;
        for h in [0.04, 0.02, 0.01] {
            let f = FiniteDifferenceField::new(g, h);
            let err = (apply_generator(&m, &f, &x).unwrap() - exact).abs();
            assert!(err < prev / 3.0, "h = {h}: {err} vs {prev}");
            prev = err;
        }
        assert!((apply_generator(&m, &field, &x).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn ellipticity_certificates() {
        let eddy = Domain::eddy(JetParams::default()).unwrap();
        let cert = check_ellipticity(&jet(Builtin::JetAdditive), &eddy, 256, 1e-3, 1).unwrap();
        assert!(cert.pass);
        assert!((cert.min_eigenvalue - 0.3).abs() < 1e-12);

        let cert =
            check_ellipticity(&jet(Builtin::JetMultiplicative), &eddy, 4096, 1e-3, 1).unwrap();
        assert!(!cert.pass);
        assert!(cert.min_eigenvalue < 1e-3);

        let zero = builtin_model::<f64>(Builtin::JetAdditive, NoiseParams::new(0.0)).unwrap();
        let cert = check_ellipticity(&zero, &eddy, 16, 1e-3, 1).unwrap();
        assert!(!cert.pass);
        assert_eq!(cert.min_eigenvalue, 0.0);
        assert!(check_ellipticity(&zero, &eddy, 0, 1e-3, 1).is_err());
    }
}
