//! Gaussian-process random fields for coefficients, sources and boundary data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, DenseMatrix};
use crate::scalar::Scalar;

pub const DEFAULT_JITTER: f64 = 1e-8;
pub const DEFAULT_POSITIVITY_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { std: f64, length_scale: f64 },
    /// Periodic kernel on a scalar parameter; only the first coordinate of a
    /// point is used.
    ExpSineSquared { std: f64, length_scale: f64, period: f64 },
}

impl Kernel {
    pub fn std(&self) -> f64 {
        match *self {
            Kernel::Rbf { std, .. } | Kernel::ExpSineSquared { std, .. } => std,
        }
    }

    fn unit(&self) -> Self {
        match *self {
            Kernel::Rbf { length_scale, .. } => Kernel::Rbf { std: 1.0, length_scale },
            Kernel::ExpSineSquared { length_scale, period, .. } => {
                Kernel::ExpSineSquared { std: 1.0, length_scale, period }
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { std, length_scale } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                std * std * (-d2 / (2.0 * length_scale * length_scale)).exp()
            }
            Kernel::ExpSineSquared { std, length_scale, period } => {
                let s = (std::f64::consts::PI * (x[0] - y[0]).abs() / period).sin();
                std * std * (-2.0 * s * s / (length_scale * length_scale)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpSpec {
    pub kernel: Kernel,
    pub mean: f64,
    pub seed: u64,
}

impl GpSpec {
    pub fn rbf(mean: f64, std: f64, length_scale: f64, seed: u64) -> Self {
        Self { kernel: Kernel::Rbf { std, length_scale }, mean, seed }
    }

    pub fn exp_sine_squared(mean: f64, std: f64, length_scale: f64, period: f64, seed: u64) -> Self {
        Self { kernel: Kernel::ExpSineSquared { std, length_scale, period }, mean, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("GP {name} must be positive, got {v}")))
            }
        };
        match self.kernel {
            Kernel::Rbf { std, length_scale } => {
                pos("std", std)?;
                pos("length_scale", length_scale)?;
            }
            Kernel::ExpSineSquared { std, length_scale, period } => {
                pos("std", std)?;
                pos("length_scale", length_scale)?;
                pos("period", period)?;
            }
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidArgument(format!("GP mean must be finite, got {}", self.mean)));
        }
        Ok(())
    }
}

/// Covariance matrix `K[i][j] = kernel(points[i], points[j])`.
pub fn covariance<T: Scalar>(spec: &GpSpec, points: &[Vec<T>]) -> DenseMatrix<T> {
    let pts: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|v| v.to_f64_lossy()).collect()).collect();
    DenseMatrix::from_fn(pts.len(), pts.len(), |i, j| T::lit(spec.kernel.eval(&pts[i], &pts[j])))
}

#[derive(Debug, Clone)]
enum Factor<T> {
    Dense(DenseMatrix<T>),
    /// Separable lattice: `L = L_y (x) L_x` with x fastest.
    Kronecker(DenseMatrix<T>, DenseMatrix<T>),
}

/// Factorized sampler: draws are `mean + std * (L z)` with `L L^T` the
/// unit-variance covariance plus jitter.
#[derive(Debug, Clone)]
pub struct GpSampler<T> {
    spec: GpSpec,
    factor: Factor<T>,
}

fn factor_unit<T: Scalar>(kernel: &Kernel, points: &[Vec<f64>], jitter: f64) -> Result<DenseMatrix<T>> {
    let unit = kernel.unit();
    let k = DenseMatrix::from_fn(points.len(), points.len(), |i, j| T::lit(unit.eval(&points[i], &points[j])));
    cholesky(&k, T::lit(jitter)).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::InvalidArgument(format!(
            "GP covariance not factorizable at pivot {pivot} (value {value:e}); increase the jitter above {jitter:e}"
        )),
        other => other,
    })
}

impl<T: Scalar> GpSampler<T> {
    /// Sampler on an arbitrary point set. `jitter` is relative to `std^2`.
    pub fn new(spec: &GpSpec, points: &[Vec<T>], jitter: f64) -> Result<Self> {
        spec.validate()?;
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|v| v.to_f64_lossy()).collect()).collect();
        Ok(Self { spec: *spec, factor: Factor::Dense(factor_unit(&spec.kernel, &pts, jitter)?) })
    }

    /// Sampler on the `m x m` lattice covering `[0,1]^2` (x fastest), using the
    /// separability of the RBF kernel. Other kernels fall back to a dense factor.
    pub fn lattice_2d(spec: &GpSpec, m: usize, jitter: f64) -> Result<Self> {
        spec.validate()?;
        if m < 2 {
            return Err(Error::InvalidArgument(format!("lattice needs at least 2 points per axis, got {m}")));
        }
        let axis: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64 / (m - 1) as f64]).collect();
        match spec.kernel {
            Kernel::Rbf { .. } => {
                let l = factor_unit::<T>(&spec.kernel, &axis, jitter)?;
                Ok(Self { spec: *spec, factor: Factor::Kronecker(l.clone(), l) })
            }
            Kernel::ExpSineSquared { .. } => {
                let pts: Vec<Vec<T>> = (0..m * m)
                    .map(|k| vec![T::lit(axis[k % m][0]), T::lit(axis[k / m][0])])
                    .collect();
                Self::new(spec, &pts, jitter)
            }
        }
    }

    pub fn spec(&self) -> &GpSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        match &self.factor {
            Factor::Dense(l) => l.nrows(),
            Factor::Kronecker(ly, lx) => ly.nrows() * lx.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unit-variance, zero-mean correlated draw `L z`.
    fn correlated(&self, rng: &mut ChaCha8Rng) -> Vec<T> {
        let z: Vec<T> = (0..self.len())
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                T::lit(v)
            })
            .collect();
        match &self.factor {
            Factor::Dense(l) => lower_matvec(l, &z),
            Factor::Kronecker(ly, lx) => {
                let (my, mx) = (ly.nrows(), lx.nrows());
                // rows of z indexed by y; apply L_x to each row, then L_y across rows
                let mut tmp = vec![T::zero(); my * mx];
                for j in 0..my {
                    let row = lower_matvec(lx, &z[j * mx..(j + 1) * mx]);
                    tmp[j * mx..(j + 1) * mx].copy_from_slice(&row);
                }
                let mut out = vec![T::zero(); my * mx];
                for j in 0..my {
                    for jp in 0..=j {
                        let w = ly[(j, jp)];
                        for i in 0..mx {
                            out[j * mx + i] += w * tmp[jp * mx + i];
                        }
                    }
                }
                out
            }
        }
    }

    /// Next draw from `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<T> {
        let mean = T::lit(self.spec.mean);
        let std = T::lit(self.spec.kernel.std());
        self.correlated(rng).into_iter().map(|v| mean + std * v).collect()
    }

    /// Generator seeded from the spec.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.spec.seed)
    }
}

fn lower_matvec<T: Scalar>(l: &DenseMatrix<T>, z: &[T]) -> Vec<T> {
    (0..l.nrows())
        .map(|i| {
            let row = l.row(i);
            let mut acc = T::zero();
            for k in 0..=i {
                acc += row[k] * z[k];
            }
            acc
        })
        .collect()
}

/// One draw at `points` from the generator seeded by `spec.seed`.
pub fn sample_field<T: Scalar>(spec: &GpSpec, points: &[Vec<T>], jitter: f64) -> Result<Vec<T>> {
    let s = GpSampler::new(spec, points, jitter)?;
    let mut rng = s.rng();
    Ok(s.draw(&mut rng))
}

/// Clamps values below `floor` up to `floor`; returns the clamped samples and
/// how many entries were changed.
pub fn positivity_guard<T: Scalar>(samples: &[T], floor: T) -> Result<(Vec<T>, usize)> {
    if !(floor > T::zero()) {
        return Err(Error::InvalidArgument(format!("positivity floor must be > 0, got {floor}")));
    }
    let mut count = 0;
    let out = samples
        .iter()
        .map(|&v| {
            if v < floor || v.is_nan() {
                count += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    Ok((out, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|i| vec![i as f64 / (m - 1) as f64]).collect()
    }

    #[test]
    fn kernel_values() {
        let k = GpSpec::rbf(1.0, 0.2, 0.1, 0);
        let c: crate::linalg::DenseMatrix<f64> = covariance(&k, &[vec![0.3], vec![0.3]]);
        assert!((c[(0, 1)] - 0.04).abs() < 1e-15);
        let k = GpSpec::rbf(0.0, 1.0, 0.1, 0);
        let c: crate::linalg::DenseMatrix<f64> = covariance(&k, &[vec![0.0], vec![0.1f64]]);
        assert!((c[(0, 1)] - (-0.5f64).exp()).abs() < 1e-12);
        assert!((c[(0, 1)] - 0.60653).abs() < 1e-5);
        let p = GpSpec::exp_sine_squared(0.0, 0.7, 0.5, 4.0, 0);
        let c: crate::linalg::DenseMatrix<f64> = covariance(&p, &[vec![0.25], vec![4.25]]);
        assert!((c[(0, 1)] - 0.49).abs() < 1e-14);
    }

    #[test]
    fn seeded_draws_repeat() {
        let spec = GpSpec::rbf(1.0, 0.2, 0.1, 42);
        let a = sample_field(&spec, &line(50), DEFAULT_JITTER).unwrap();
        let b = sample_field(&spec, &line(50), DEFAULT_JITTER).unwrap();
        assert_eq!(a, b);
        let c = sample_field(&GpSpec { seed: 43, ..spec }, &line(50), DEFAULT_JITTER).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vanishing_variance_gives_mean() {
        let spec = GpSpec::rbf(2.5, 1e-12, 0.1, 3);
        let s = sample_field(&spec, &line(40), DEFAULT_JITTER).unwrap();
        assert!(s.iter().all(|v| (v - 2.5).abs() < 1e-5));
    }

    #[test]
    fn affine_pushforward_is_bit_exact() {
        let pts = line(30);
        let base = sample_field(&GpSpec::rbf(0.0, 1.0, 0.1, 9), &pts, DEFAULT_JITTER).unwrap();
        let shifted = sample_field(&GpSpec::rbf(1.0, 0.2, 0.1, 9), &pts, DEFAULT_JITTER).unwrap();
        for (b, s) in base.iter().zip(&shifted) {
            assert_eq!(*s, 1.0 + 0.2 * b);
        }
    }

    #[test]
    fn kronecker_matches_dense_factor_statistics() {
        let m = 6;
        let spec = GpSpec::rbf(0.0, 1.0, 0.3, 1);
        let pts: Vec<Vec<f64>> =
            (0..m * m).map(|k| vec![(k % m) as f64 / 5.0, (k / m) as f64 / 5.0]).collect();
        let kron = GpSampler::<f64>::lattice_2d(&spec, m, DEFAULT_JITTER).unwrap();
        let Factor::Kronecker(ly, lx) = &kron.factor else { panic!("expected Kronecker factor") };
        // (L_y (x) L_x)(L_y (x) L_x)^T reproduces the covariance up to jitter
        let ky = ly.matmul(&ly.transpose()).unwrap();
        let kx = lx.matmul(&lx.transpose()).unwrap();
        let full = covariance(&spec, &pts);
        for a in 0..m * m {
            for b in 0..m * m {
                let v = ky[(a / m, b / m)] * kx[(a % m, b % m)];
                assert!((v - full[(a, b)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn guard_clamps() {
        let (v, c) = positivity_guard(&[-0.1, 0.5], 0.05).unwrap();
        assert_eq!(v, vec![0.05, 0.5]);
        assert_eq!(c, 1);
        let (v, c) = positivity_guard(&[0.3, 1.0], 0.05).unwrap();
        assert_eq!((v, c), (vec![0.3, 1.0], 0));
        assert!(positivity_guard(&[1.0], 0.0).is_err());
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(GpSpec::rbf(0.0, -1.0, 0.1, 0).validate().is_err());
        assert!(GpSpec::exp_sine_squared(0.0, 1.0, 0.1, 0.0, 0).validate().is_err());
    }
}
