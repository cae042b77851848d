//! Correction operators `r -> I(M(k, H r))` used by the hybrid iteration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{residual_to_function, residual_to_function_augmented, PaddingMode, StructuredGrid};
use crate::linalg::{sine_transform_1d, sine_transform_2d, DenseMatrix};
use crate::mionet::MionetModel;
use crate::scalar::Scalar;

/// Linear map from a residual vector to a correction vector.
pub trait Corrector<T: Scalar>: Send + Sync {
    /// Length of the vectors the corrector acts on.
    fn size(&self) -> usize;

    fn correct(&self, r: &[T]) -> Result<Vec<T>>;

    /// Starting iterate for the right-hand side `b`; by default the
    /// correction of `b` itself, i.e. the model solution from a zero guess.
    fn initial_guess(&self, b: &[T]) -> Result<Vec<T>> {
        self.correct(b)
    }
}

impl<T: Scalar, C: Corrector<T> + ?Sized> Corrector<T> for Box<C> {
    fn size(&self) -> usize {
        (**self).size()
    }
    fn correct(&self, r: &[T]) -> Result<Vec<T>> {
        (**self).correct(r)
    }
    fn initial_guess(&self, b: &[T]) -> Result<Vec<T>> {
        (**self).initial_guess(b)
    }
}

impl<T: Scalar, C: Corrector<T> + ?Sized> Corrector<T> for Arc<C> {
    fn size(&self) -> usize {
        (**self).size()
    }
    fn correct(&self, r: &[T]) -> Result<Vec<T>> {
        (**self).correct(r)
    }
    fn initial_guess(&self, b: &[T]) -> Result<Vec<T>> {
        (**self).initial_guess(b)
    }
}

fn check_len<T>(r: &[T], n: usize) -> Result<()> {
    if r.len() != n {
        return Err(Error::Dimension(format!("residual of length {} for a corrector of size {n}", r.len())));
    }
    Ok(())
}

/// Trained operator model as a corrector on a solver grid.
///
/// The coefficient encoding and the trunk outputs at the grid nodes are
/// computed once; each correction costs one linear branch evaluation and a
/// `nodes x p` product.
#[derive(Debug, Clone)]
pub struct MionetCorrector<T> {
    model: Arc<MionetModel<T>>,
    grid: StructuredGrid<T>,
    padding: PaddingMode,
    augmented: bool,
    bk: Vec<T>,
    trunk: DenseMatrix<T>,
}

impl<T: Scalar> MionetCorrector<T> {
    /// Corrector for the interior-unknown system on `grid` with coefficient
    /// samples `k_samples` taken at the model's coefficient sensors.
    pub fn new(model: Arc<MionetModel<T>>, grid: StructuredGrid<T>, k_samples: &[T], padding: PaddingMode) -> Result<Self> {
        Self::build(model, grid, k_samples, padding, false)
    }

    /// Corrector for the augmented 2-d system whose unknowns include the
    /// boundary ring. Boundary entries of the correction equal the boundary
    /// residual, which inverts the identity block exactly.
    pub fn new_augmented(model: Arc<MionetModel<T>>, grid: StructuredGrid<T>, k_samples: &[T]) -> Result<Self> {
        Self::build(model, grid, k_samples, PaddingMode::Zero, true)
    }

    fn build(
        model: Arc<MionetModel<T>>,
        grid: StructuredGrid<T>,
        k_samples: &[T],
        padding: PaddingMode,
        augmented: bool,
    ) -> Result<Self> {
        if !model.is_solver_facing() {
            return Err(Error::InvalidArgument(
                "corrector needs a model that is linear in the forcing (linear branch, zero output bias)".into(),
            ));
        }
        if model.dim() != grid.dim() {
            return Err(Error::Dimension(format!("{}-d model on a {}-d grid", model.dim(), grid.dim())));
        }
        if k_samples.len() != model.k_sensors().len() {
            return Err(Error::Dimension(format!(
                "{} coefficient samples for {} sensors",
                k_samples.len(),
                model.k_sensors().len()
            )));
        }
        let bk = model.encode_k(k_samples)?;
        let trunk = model.encode_queries(&grid.interior_points())?;
        Ok(Self { model, grid, padding, augmented, bk, trunk })
    }

    pub fn model(&self) -> &MionetModel<T> {
        &self.model
    }

    /// Model output at the interior nodes for forcing samples at the sensors.
    pub fn apply_samples(&self, f_samples: &[T]) -> Result<Vec<T>> {
        let bf = self.model.encode_f(f_samples)?;
        Ok(self.model.merge(&self.bk, &bf, &self.trunk))
    }
}

impl<T: Scalar> Corrector<T> for MionetCorrector<T> {
    fn size(&self) -> usize {
        if self.augmented {
            self.grid.num_padded()
        } else {
            self.grid.num_interior()
        }
    }

    fn correct(&self, r: &[T]) -> Result<Vec<T>> {
        check_len(r, self.size())?;
        let func = if self.augmented {
            residual_to_function_augmented(&self.grid, r)?
        } else {
            residual_to_function(&self.grid, r, self.padding)?
        };
        let samples = func.eval_many(self.model.f_sensors())?;
        let interior = self.apply_samples(&samples)?;
        if !self.augmented {
            return Ok(interior);
        }
        let mut out = r.to_vec();
        for (k, v) in interior.into_iter().enumerate() {
            let (i, j) = self.grid.interior_to_padded(k);
            out[self.grid.padded_index(i, j)] = v;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Inverts the lowest discrete eigenmodes exactly.
    DiscreteExact,
    /// Projects the residual function onto `sin(i pi x)` and divides by the
    /// continuous eigenvalues `i^2 pi^2` (1-d only).
    ContinuousEig,
}

/// Ideal corrector for the unit-coefficient operator that is exact on the
/// lowest `n0` modes and zero on the rest.
#[derive(Debug, Clone)]
pub struct SpectralOracle<T> {
    grid: StructuredGrid<T>,
    n0: usize,
    mode: OracleMode,
    padding: PaddingMode,
    inv_lambda: Vec<T>,
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

impl<T: Scalar> SpectralOracle<T> {
    pub fn new(grid: StructuredGrid<T>, n0: usize, mode: OracleMode) -> Result<Self> {
        let n = grid.n();
        if n0 < 1 || n0 > n {
            return Err(Error::InvalidArgument(format!("n0 must lie in [1, {n}], got {n0}")));
        }
        if mode == OracleMode::ContinuousEig && grid.dim() != 1 {
            return Err(Error::InvalidArgument("the continuous-eigenfunction oracle is 1-d only".into()));
        }
        let h = grid.h().to_f64_lossy();
        let pi = std::f64::consts::PI;
        let inv_lambda = match (mode, grid.dim()) {
            (OracleMode::DiscreteExact, 1) => {
                (1..=n0).map(|i| T::lit(h / (4.0 * (pi * h * i as f64 / 2.0).sin().powi(2)))).collect()
            }
            (OracleMode::DiscreteExact, _) => {
                // index (b-1)*n + (a-1) as in the 2-d sine transform
                (0..n * n)
                    .map(|idx| {
                        let (a, b) = (idx % n + 1, idx / n + 1);
                        if a.max(b) > n0 {
                            T::zero()
                        } else {
                            let l = 4.0 - 2.0 * (a as f64 * pi * h).cos() - 2.0 * (b as f64 * pi * h).cos();
                            T::lit(1.0 / l)
                        }
                    })
                    .collect()
            }
            (OracleMode::ContinuousEig, _) => (1..=n0).map(|i| T::lit(1.0 / (pi * pi * (i * i) as f64))).collect(),
        };
        Ok(Self { grid, n0, mode, padding: PaddingMode::Replicate, inv_lambda })
    }

    pub fn with_padding(mut self, padding: PaddingMode) -> Self {
        self.padding = padding;
        self
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    fn continuous(&self, r: &[T]) -> Result<Vec<T>> {
        let beta = residual_to_function(&self.grid, r, self.padding)?;
        let v: Vec<f64> = beta.padded_values().iter().map(|x| x.to_f64_lossy()).collect();
        let cells = self.grid.n() + 1;
        let h = self.grid.h().to_f64_lossy();
        let pi = std::f64::consts::PI;
        // c_i = 2 int beta(x) sin(i pi x) dx
        let mut coef = vec![0.0f64; self.n0];
        for e in 0..cells {
            let a = e as f64 * h;
            for &(s, w) in &GAUSS5 {
                let t = 0.5 * (s + 1.0);
                let x = a + t * h;
                let bx = v[e] + t * (v[e + 1] - v[e]);
                let wx = 0.5 * h * w * bx;
                for (i, c) in coef.iter_mut().enumerate() {
                    *c += 2.0 * wx * ((i + 1) as f64 * pi * x).sin();
                }
            }
        }
        Ok((0..self.grid.n())
            .map(|j| {
                let x = (j + 1) as f64 * h;
                let mut acc = 0.0;
                for (i, &c) in coef.iter().enumerate() {
                    acc += c * self.inv_lambda[i].to_f64_lossy() * ((i + 1) as f64 * pi * x).sin();
                }
                T::lit(acc)
            })
            .collect())
    }
}

impl<T: Scalar> Corrector<T> for SpectralOracle<T> {
    fn size(&self) -> usize {
        self.grid.num_interior()
    }

    fn correct(&self, r: &[T]) -> Result<Vec<T>> {
        check_len(r, self.size())?;
        match (self.mode, self.grid.dim()) {
            (OracleMode::ContinuousEig, _) => self.continuous(r),
            (OracleMode::DiscreteExact, 1) => {
                let mut a = sine_transform_1d(r)?;
                for (i, ai) in a.iter_mut().enumerate() {
                    *ai = if i < self.n0 { *ai * self.inv_lambda[i] } else { T::zero() };
                }
                sine_transform_1d(&a)
            }
            (OracleMode::DiscreteExact, _) => {
                let n = self.grid.n();
                let mut a = sine_transform_2d(r, n)?;
                for (ai, &l) in a.iter_mut().zip(&self.inv_lambda) {
                    *ai *= l;
                }
                sine_transform_2d(&a, n)
            }
        }
    }
}

/// `factor * inner.correct(r)`; a factor away from one gives a deliberately
/// miscalibrated corrector.
#[derive(Debug, Clone)]
pub struct ScaledCorrector<C, T> {
    pub inner: C,
    pub factor: T,
}

impl<T: Scalar, C: Corrector<T>> Corrector<T> for ScaledCorrector<C, T> {
    fn size(&self) -> usize {
        self.inner.size()
    }

    fn correct(&self, r: &[T]) -> Result<Vec<T>> {
        Ok(self.inner.correct(r)?.into_iter().map(|v| v * self.factor).collect())
    }

    fn initial_guess(&self, b: &[T]) -> Result<Vec<T>> {
        Ok(self.inner.initial_guess(b)?.into_iter().map(|v| v * self.factor).collect())
    }
}

/// Free-function constructors.
pub fn mionet_corrector<T: Scalar>(
    model: Arc<MionetModel<T>>,
    grid: StructuredGrid<T>,
    k_samples: &[T],
    padding: PaddingMode,
) -> Result<MionetCorrector<T>> {
    MionetCorrector::new(model, grid, k_samples, padding)
}

pub fn spectral_oracle_corrector<T: Scalar>(grid: StructuredGrid<T>, n0: usize, mode: OracleMode) -> Result<SpectralOracle<T>> {
    SpectralOracle::new(grid, n0, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_stiffness;
    use crate::linalg::sine_basis;
    use crate::mionet::{sensor_lattice, Activation, Architecture};

    fn one(_: &[f64]) -> f64 {
        1.0
    }

    #[test]
    fn discrete_oracle_annihilates_low_modes() {
        let n = 24;
        let g = StructuredGrid::new_1d(n).unwrap();
        let a = assemble_stiffness(&g, one).unwrap();
        let o = SpectralOracle::new(g, 6, OracleMode::DiscreteExact).unwrap();
        let xi = sine_basis::<f64>(n);
        for i in 0..n {
            let v = xi.row(i).to_vec();
            let c = o.correct(&a.spmv(&v).unwrap()).unwrap();
            let want = if i < 6 { 0.0 } else { 1.0 };
            for (x, y) in v.iter().zip(&c) {
                assert!((x - y - want * x).abs() < 1e-12, "mode {}", i + 1);
            }
        }
    }

    #[test]
    fn full_oracle_inverts_2d_operator() {
        let g = StructuredGrid::new_2d(7).unwrap();
        let a = assemble_stiffness(&g, one).unwrap();
        let o = SpectralOracle::new(g, 7, OracleMode::DiscreteExact).unwrap();
        let x: Vec<f64> = (0..49).map(|k| ((k * 5) % 13) as f64 - 6.0).collect();
        let y = o.correct(&a.spmv(&x).unwrap()).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-11);
        }
    }

    #[test]
    fn oracles_are_linear_and_vanish_at_zero() {
        let g = StructuredGrid::new_1d(15).unwrap();
        for mode in [OracleMode::DiscreteExact, OracleMode::ContinuousEig] {
            let o = SpectralOracle::new(g, 5, mode).unwrap();
            assert_eq!(o.correct(&[0.0; 15]).unwrap(), vec![0.0; 15]);
            let r: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
            let c1 = o.correct(&r).unwrap();
            let c2 = o.correct(&r.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
            for (a, b) in c1.iter().zip(&c2) {
                assert!((2.0 * a - b).abs() <= 1e-10 * b.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn oracle_rejects_bad_n0() {
        let g = StructuredGrid::<f64>::new_1d(8).unwrap();
        assert!(SpectralOracle::new(g, 0, OracleMode::DiscreteExact).is_err());
        assert!(SpectralOracle::new(g, 9, OracleMode::DiscreteExact).is_err());
        let g2 = StructuredGrid::<f64>::new_2d(8).unwrap();
        assert!(SpectralOracle::new(g2, 3, OracleMode::ContinuousEig).is_err());
    }

    #[test]
    fn mionet_corrector_is_linear() {
        let arch = Architecture {
            branch_k: vec![10, 12, 8],
            branch_f: vec![10, 8],
            trunk: vec![1, 12, 8],
            activation: Activation::Tanh,
        };
        let m = Arc::new(MionetModel::<f64>::new(&arch, sensor_lattice(1, 10), sensor_lattice(1, 10), 5).unwrap());
        let g = StructuredGrid::new_1d(20).unwrap();
        let c = MionetCorrector::new(m, g, &[1.0; 10], PaddingMode::Replicate).unwrap();
        assert_eq!(c.correct(&[0.0; 20]).unwrap(), vec![0.0; 20]);
        let r: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let c1 = c.correct(&r).unwrap();
        let c2 = c.correct(&r.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        for (a, b) in c1.iter().zip(&c2) {
            assert!((2.0 * a - b).abs() <= 1e-10 * b.abs().max(1e-12));
        }
        assert!(c.correct(&[0.0; 19]).is_err());
    }

    #[test]
    fn continuous_oracle_error_grows_with_mode_and_shrinks_with_h() {
        let spectrum = |n: usize| {
            let g = StructuredGrid::<f64>::new_1d(n).unwrap();
            let o = SpectralOracle::new(g, 8, OracleMode::ContinuousEig).unwrap();
            crate::spectral::model_error_spectrum(&o, &g, 8).unwrap().norms
        };
        let (coarse, fine) = (spectrum(31), spectrum(63));
        for i in 0..8 {
            if i > 0 {
                assert!(coarse[i] > coarse[i - 1]);
            }
            // at least first order in h; measured close to second order
            assert!(coarse[i] / fine[i] > 2.0, "mode {}: {} -> {}", i + 1, coarse[i], fine[i]);
        }
        assert!(coarse[0] < 1e-2);
    }
}
