//! Eigen-diagnostics of the 1-d operator, spectral error maps, the `Rate(M)`
//! convergence bounds and local-mode analysis of Gauss-Seidel.

use std::io::Write;

use num_complex::Complex64;

use crate::correctors::Corrector;
use crate::error::{Error, Result};
use crate::fem::StructuredGrid;
use crate::hybrid::IterationTrace;
use crate::linalg::{norm2, sine_basis, sine_transform_1d, sine_transform_2d, CsrMatrix, DenseMatrix};
use crate::scalar::Scalar;
use crate::smoothers::{smoother_step, SmootherKind};

/// Floor added before taking logarithms of spectral coefficients.
pub const HEATMAP_FLOOR: f64 = 1e-300;

/// Eigenvalues `(4/h) sin^2(pi h i / 2)` and the orthonormal sine basis
/// (row `i - 1` holds `xi^i`) of the unit-coefficient 1-d stiffness matrix.
pub fn eigenpairs_1d<T: Scalar>(n: usize) -> Result<(Vec<T>, DenseMatrix<T>)> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one interior node".into()));
    }
    let h = 1.0 / (n + 1) as f64;
    let lambda = (1..=n)
        .map(|i| T::lit(4.0 / h * (std::f64::consts::PI * h * i as f64 / 2.0).sin().powi(2)))
        .collect();
    Ok((lambda, sine_basis(n)))
}

/// `log10 |alpha_i^(m)|`, mode index by row and step by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralHeatmap {
    pub values: DenseMatrix<f64>,
}

impl SpectralHeatmap {
    pub fn modes(&self) -> usize {
        self.values.nrows()
    }

    pub fn steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, mode: usize, step: usize) -> f64 {
        self.values.row(mode - 1)[step]
    }

    /// One CSV row per mode, one column per step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.modes() {
            let row: Vec<String> = self.values.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Spectral coefficients of the stored error vectors of a 1-d (or 2-d with
/// `n` per axis) trace.
pub fn spectral_heatmap<T: Scalar>(trace: &IterationTrace<T>, n: usize) -> Result<SpectralHeatmap> {
    let cols = trace.steps.len();
    let mut columns = Vec::with_capacity(cols);
    for s in &trace.steps {
        let e = s
            .error
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("step {} has no stored error vector", s.step)))?;
        let alpha = if e.len() == n {
            sine_transform_1d(e)?
        } else if e.len() == n * n {
            sine_transform_2d(e, n)?
        } else {
            return Err(Error::Dimension(format!("error vector of length {} for n = {n}", e.len())));
        };
        columns.push(alpha);
    }
    let rows = columns.first().map_or(n, Vec::len);
    let values =
        DenseMatrix::from_fn(rows, cols, |i, m| (columns[m][i].to_f64_lossy().abs() + HEATMAP_FLOOR).log10());
    Ok(SpectralHeatmap { values })
}

/// Inputs of the Richardson-hybrid rate bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub eta1: f64,
    pub eta2: f64,
    /// Model error carried by the low modes.
    pub eps: f64,
    /// Error mass carried by the high modes.
    pub r: f64,
}

impl RateParams {
    pub fn new(eta1: f64, eta2: f64, eps: f64, r: f64) -> Result<Self> {
        let p = Self { eta1, eta2, eps, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.eta2 && self.eta2 < self.eta1 && self.eta1 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < eta2 < eta1 < 1, got eta1 = {}, eta2 = {}",
                self.eta1, self.eta2
            )));
        }
        if !(self.eps >= 0.0) || !(self.r >= 0.0) {
            return Err(Error::InvalidArgument("eps and R must be non-negative".into()));
        }
        Ok(())
    }

    /// Contraction factors of Richardson with `omega = h/4` on `n` nodes when
    /// the corrector handles the lowest `n0` modes.
    pub fn richardson_etas(n: usize, n0: usize) -> (f64, f64) {
        let h = 1.0 / (n + 1) as f64;
        let c = |i: usize| (std::f64::consts::PI * h * i as f64 / 2.0).cos().powi(2);
        (c(1), c(n0 + 1))
    }
}

/// `eta1 * (eps/eta1 + R/eta2 * (eta2/eta1)^M)^(1/M)`.
pub fn rate_bound(m: usize, p: &RateParams) -> f64 {
    let m = m.max(1) as f64;
    let inner = p.eps / p.eta1 + p.r / p.eta2 * (p.eta2 / p.eta1).powf(m);
    p.eta1 * inner.powf(1.0 / m)
}

fn argmin_by(m_max: usize, f: impl Fn(usize) -> f64) -> usize {
    let mut best = (1, f(1));
    for m in 2..=m_max.max(1) {
        let v = f(m);
        if v < best.1 {
            best = (m, v);
        }
    }
    best.0
}

/// Smallest minimizer of [`rate_bound`] over `1..=m_max`.
pub fn argmin_rate(p: &RateParams, m_max: usize) -> usize {
    argmin_by(m_max, |m| rate_bound(m, p))
}

/// Correction period above which the Richardson hybrid is guaranteed to
/// converge: `2 + floor(-ln ||I - MA|| / ln rho(I - wA))`, at least 1.
pub fn richardson_m_bound(norm_ima: f64, rho_iwa: f64) -> Result<usize> {
    if !(rho_iwa > 0.0 && rho_iwa < 1.0) || !(norm_ima > 0.0) || !norm_ima.is_finite() {
        return Err(Error::InvalidArgument(format!("need 0 < rho < 1 and a positive norm, got {rho_iwa}, {norm_ima}")));
    }
    let b = 2.0 + (-norm_ima.ln() / rho_iwa.ln()).floor();
    Ok(b.max(1.0) as usize)
}

/// Gauss-Seidel amplification `|(e^{i t1} + e^{i t2}) / (4 - e^{i t1} - e^{i t2})|`.
pub fn gs_symbol(theta1: f64, theta2: f64) -> f64 {
    let z1 = Complex64::from_polar(1.0, theta1);
    let z2 = Complex64::from_polar(1.0, theta2);
    ((z1 + z2) / (4.0 - z1 - z2)).norm()
}

fn in_high_set(t: (f64, f64), lo: f64) -> bool {
    let m = t.0.abs().max(t.1.abs());
    m >= lo && m <= std::f64::consts::PI
}

/// Pulls a point into `{rho pi <= |theta|_inf <= pi}`.
fn project_high(t: (f64, f64), lo: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let (a, b) = (t.0.clamp(-pi, pi), t.1.clamp(-pi, pi));
    if a.abs().max(b.abs()) >= lo {
        return (a, b);
    }
    if a.abs() >= b.abs() {
        (lo.copysign(if a == 0.0 { 1.0 } else { a }), b)
    } else {
        (a, lo.copysign(if b == 0.0 { 1.0 } else { b }))
    }
}

/// Max of [`gs_symbol`] over the high frequencies `rho pi <= |theta|_inf <= pi`,
/// from a `resolution^2` scan refined by a shrinking pattern search.
pub fn smoothing_factor(rho: f64, resolution: usize) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) || resolution < 2 {
        return Err(Error::InvalidArgument(format!("need 0 < rho < 1 and resolution >= 2, got {rho}, {resolution}")));
    }
    let pi = std::f64::consts::PI;
    let lo = rho * pi;
    let step = 2.0 * pi / (resolution - 1) as f64;
    let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
    let mut consider = |t: (f64, f64)| {
        if in_high_set(t, lo) {
            let v = gs_symbol(t.0, t.1);
            if v > best.0 {
                best = (v, t);
            }
        }
    };
    for i in 0..resolution {
        let a = -pi + i as f64 * step;
        for j in 0..resolution {
            consider((a, -pi + j as f64 * step));
        }
        // the inner boundary of the set, where the maximum usually sits
        for s in [-lo, lo] {
            consider((s, a));
            consider((a, s));
        }
    }
    let (mut v, mut t) = best;
    let mut h = step;
    while h > 1e-12 {
        let mut moved = false;
        for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (h, -h), (-h, h), (-h, -h)] {
            let c = project_high((t.0 + da, t.1 + db), lo);
            let cv = gs_symbol(c.0, c.1);
            if cv > v {
                v = cv;
                t = c;
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(v)
}

/// `zeta0 * (eps/zeta0 + R/zeta_rho * (zeta_rho/zeta0)^(M-1))^(1/M)`.
pub fn rate_bound_gs(m: usize, zeta0: f64, zeta_rho: f64, eps: f64, r: f64) -> Result<f64> {
    if !(0.0 < zeta_rho && zeta_rho < zeta0 && zeta0 < 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < zeta_rho < zeta0 < 1, got {zeta_rho}, {zeta0}")));
    }
    let mf = m.max(1) as f64;
    let inner = eps / zeta0 + r / zeta_rho * (zeta_rho / zeta0).powf(mf - 1.0);
    Ok(zeta0 * inner.powf(1.0 / mf))
}

pub fn argmin_rate_gs(zeta0: f64, zeta_rho: f64, eps: f64, r: f64, m_max: usize) -> Result<usize> {
    rate_bound_gs(1, zeta0, zeta_rho, eps, r)?;
    Ok(argmin_by(m_max, |m| rate_bound_gs(m, zeta0, zeta_rho, eps, r).unwrap_or(f64::INFINITY)))
}

/// Observed per-sweep contraction of the lowest mode under Gauss-Seidel on
/// `a`. This is an empirical stand-in for `zeta0`, which has no closed form.
pub fn estimate_zeta0<T: Scalar>(a: &CsrMatrix<T>, grid: &StructuredGrid<T>, sweeps: usize) -> Result<f64> {
    if a.nrows() != grid.num_interior() {
        return Err(Error::Dimension("matrix does not match the grid".into()));
    }
    let sweeps = sweeps.max(2);
    let n = grid.n();
    let pi = std::f64::consts::PI;
    let h = grid.h().to_f64_lossy();
    let mut e: Vec<T> = (0..grid.num_interior())
        .map(|k| {
            let x = grid.interior_coords(k);
            T::lit(x.iter().map(|c| (pi * c.to_f64_lossy()).sin()).product::<f64>())
        })
        .collect();
    debug_assert!(n > 0 && h > 0.0);
    let zero = vec![T::zero(); e.len()];
    // skip a few sweeps so the ratio reflects the settled low mode
    let warm = sweeps / 2;
    let mut before = norm2(&e).to_f64_lossy();
    let mut start = before;
    for s in 0..sweeps {
        smoother_step(&SmootherKind::GaussSeidel, a, &zero, &mut e)?;
        let now = norm2(&e).to_f64_lossy();
        if s + 1 == warm {
            start = now;
        }
        before = now;
    }
    Ok((before / start).powf(1.0 / (sweeps - warm) as f64))
}

/// Per-mode model errors `e_i = xi^i - M(lambda_i xi^i)` of a corrector on the
/// unit-coefficient 1-d operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelErrorSpectrum {
    /// `||e_i||_2` for `i = 1..n`.
    pub norms: Vec<f64>,
    /// Sum over `i <= n0`.
    pub eps: f64,
    /// Sum over `i > n0`.
    pub r: f64,
    pub n0: usize,
}

impl ModelErrorSpectrum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,error_l2")?;
        for (i, e) in self.norms.iter().enumerate() {
            writeln!(w, "{},{e:e}", i + 1)?;
        }
        Ok(())
    }
}

pub fn model_error_spectrum<T: Scalar, C: Corrector<T> + ?Sized>(
    corrector: &C,
    grid: &StructuredGrid<T>,
    n0: usize,
) -> Result<ModelErrorSpectrum> {
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("model error spectrum is defined on 1-d grids".into()));
    }
    let n = grid.n();
    if corrector.size() != n {
        return Err(Error::Dimension(format!("corrector of size {} on {n} nodes", corrector.size())));
    }
    let (lambda, xi) = eigenpairs_1d::<T>(n)?;
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let v = xi.row(i);
        let r: Vec<T> = v.iter().map(|&x| x * lambda[i]).collect();
        let c = corrector.correct(&r)?;
        let e: Vec<T> = v.iter().zip(&c).map(|(&x, &y)| x - y).collect();
        norms.push(norm2(&e).to_f64_lossy());
    }
    let n0 = n0.min(n);
    let eps = norms[..n0].iter().sum();
    let r = norms[n0..].iter().sum();
    Ok(ModelErrorSpectrum { norms, eps, r, n0 })
}

/// Error propagation matrix of one hybrid period, `(I - BA)^(M-1) (I - C A)`,
/// built column by column. Intended for small systems (`n <= 64`).
pub fn hybrid_iteration_matrix<T: Scalar, C: Corrector<T> + ?Sized>(
    a: &CsrMatrix<T>,
    smoother: &SmootherKind<T>,
    corrector: &C,
    m: usize,
) -> Result<DenseMatrix<T>> {
    let n = a.nrows();
    if n > 64 {
        return Err(Error::InvalidArgument(format!("dense iteration matrix limited to 64 unknowns, got {n}")));
    }
    if m < 1 || corrector.size() != n {
        return Err(Error::InvalidArgument("need M >= 1 and a corrector of matching size".into()));
    }
    let zero = vec![T::zero(); n];
    let mut t = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = zero.clone();
        e[j] = T::one();
        let c = corrector.correct(&a.spmv(&e)?)?;
        for (x, y) in e.iter_mut().zip(&c) {
            *x -= *y;
        }
        for _ in 1..m {
            smoother_step(smoother, a, &zero, &mut e)?;
        }
        for i in 0..n {
            t.row_mut(i)[j] = e[i];
        }
    }
    Ok(t)
}

/// Spectral radius estimate `||T^k x|| ^ (1/k)` from a fixed start vector.
pub fn spectral_radius<T: Scalar>(t: &DenseMatrix<T>, iters: usize) -> Result<f64> {
    let n = t.nrows();
    let mut x: Vec<T> = (0..n).map(|i| T::lit(1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0)).collect();
    let mut log_growth = 0.0;
    let iters = iters.max(2);
    let burn = iters / 2;
    for k in 0..iters {
        x = t.matvec(&x)?;
        let s = norm2(&x).to_f64_lossy();
        if s == 0.0 {
            return Ok(0.0);
        }
        if k >= burn {
            log_growth += s.ln();
        }
        for v in x.iter_mut() {
            *v /= T::lit(s);
        }
    }
    Ok((log_growth / (iters - burn) as f64).exp())
}

/// CSV `M,rate` of [`rate_bound`] over `1..=m_max`.
pub fn write_rate_csv<W: Write>(p: &RateParams, m_max: usize, mut w: W) -> Result<()> {
    writeln!(w, "M,rate")?;
    for m in 1..=m_max {
        writeln!(w, "{m},{:.10}", rate_bound(m, p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correctors::{OracleMode, SpectralOracle};
    use crate::fem::assemble_stiffness;

    fn fig4() -> RateParams {
        RateParams::new(0.999, 0.5, 0.1, 10.0).unwrap()
    }

    #[test]
    fn first_eigenvalue_n3() {
        let (l, _) = eigenpairs_1d::<f64>(3).unwrap();
        assert!((l[0] - 16.0 * (std::f64::consts::PI / 8.0).sin().powi(2)).abs() < 1e-12);
        assert!((l[0] - 2.343146).abs() < 1e-6);
    }

    #[test]
    fn rate_formula_values() {
        assert!((rate_bound(20, &fig4()) - 0.8904).abs() < 5e-4);
        assert!((rate_bound(10_000, &fig4()) - 0.999).abs() < 1e-3);
        let p = RateParams::new(0.9, 0.5, 0.9, 0.0).unwrap();
        for m in [1, 7, 100] {
            assert!((rate_bound(m, &p) - 0.9).abs() < 1e-15);
        }
    }

    #[test]
    fn argmin_cases() {
        let m = argmin_rate(&fig4(), 200);
        assert!(m > 1 && m < 200);
        let no_high = RateParams::new(0.999, 0.5, 0.1, 0.0).unwrap();
        assert_eq!(argmin_rate(&no_high, 200), 1);
        let ms: Vec<usize> =
            [1e-1, 1e-2, 1e-3].iter().map(|&e| argmin_rate(&RateParams::new(0.999, 0.5, e, 10.0).unwrap(), 2000)).collect();
        assert!(ms[0] < ms[1] && ms[1] < ms[2], "{ms:?}");
    }

    #[test]
    fn guaranteed_period_bound() {
        assert_eq!(richardson_m_bound(1.0, 0.9).unwrap(), 2);
        assert_eq!(richardson_m_bound(10.0, 0.99).unwrap(), 231);
        assert!(richardson_m_bound(0.5, 0.9).unwrap() <= 2);
        assert!(richardson_m_bound(1.0, 1.0).is_err());
    }

    #[test]
    fn symbol_values() {
        let pi = std::f64::consts::PI;
        assert!((gs_symbol(pi / 2.0, 0.8f64.acos()) - 0.5).abs() < 1e-12);
        assert!((gs_symbol(pi, pi) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gs_symbol(0.0, 0.0), 1.0);
    }

    #[test]
    fn smoothing_factors() {
        let half = smoothing_factor(0.5, 512).unwrap();
        assert!((half - 0.5).abs() < 1e-4, "{half}");
        assert!(smoothing_factor(0.25, 128).unwrap() >= smoothing_factor(0.5, 128).unwrap());
        assert!(smoothing_factor(0.999, 128).unwrap() <= 0.5);
    }

    #[test]
    fn gs_bound_identities() {
        assert!((rate_bound_gs(13, 0.95, 0.4, 0.95, 0.0).unwrap() - 0.95).abs() < 1e-15);
        let v = rate_bound_gs(30, 0.99, 0.5, 0.05, 20.0).unwrap();
        assert!(v > 0.0 && v < 1.0);
        let m = argmin_rate_gs(0.99, 0.5, 0.05, 20.0, 500).unwrap();
        assert!(m > 1 && m < 500);
        assert!(rate_bound_gs(3, 0.5, 0.6, 0.1, 1.0).is_err());
    }

    #[test]
    fn oracle_error_spectrum() {
        let g = StructuredGrid::<f64>::new_1d(20).unwrap();
        let o = SpectralOracle::new(g, 5, OracleMode::DiscreteExact).unwrap();
        let s = model_error_spectrum(&o, &g, 5).unwrap();
        for (i, e) in s.norms.iter().enumerate() {
            let want = if i < 5 { 0.0 } else { 1.0 };
            assert!((e - want).abs() < 1e-12);
        }
        assert!(s.eps < 1e-11 && (s.r - 15.0).abs() < 1e-10);
    }

    #[test]
    fn period_spectral_radius_matches_closed_form() {
        let n = 16;
        let g = StructuredGrid::<f64>::new_1d(n).unwrap();
        let a = assemble_stiffness(&g, |_: &[f64]| 1.0).unwrap();
        let o = SpectralOracle::new(g, 4, OracleMode::DiscreteExact).unwrap();
        let rich = SmootherKind::Richardson { omega: 1.0 / (4.0 * 17.0) };
        let t = hybrid_iteration_matrix(&a, &rich, &o, 5).unwrap();
        let (_, eta2) = RateParams::richardson_etas(n, 4);
        let rho = spectral_radius(&t, 400).unwrap();
        assert!((rho / eta2.powi(4) - 1.0).abs() < 1e-6, "{rho}");
    }

    #[test]
    fn zeta0_for_gauss_seidel() {
        let g = StructuredGrid::<f64>::new_2d(15).unwrap();
        let a = assemble_stiffness(&g, |_: &[f64]| 1.0).unwrap();
        let z = estimate_zeta0(&a, &g, 40).unwrap();
        // lowest-mode GS factor is about cos^2(pi h)
        let want = (std::f64::consts::PI / 16.0).cos().powi(2);
        assert!((z - want).abs() < 1e-2, "{z} vs {want}");
    }

    #[test]
    fn single_mode_heatmap_decays_at_the_mode_rate() {
        use crate::hybrid::{hybrid_solve, HybridConfig, InnerSolver, StopRule};
        let n = 12;
        let g = StructuredGrid::<f64>::new_1d(n).unwrap();
        let a = assemble_stiffness(&g, |_: &[f64]| 1.0).unwrap();
        let (_, xi) = eigenpairs_1d::<f64>(n).unwrap();
        // reference solution xi^1 with a zero start gives e^(0) = xi^1
        let reference = xi.row(0).to_vec();
        let b = a.spmv(&reference).unwrap();
        let o = SpectralOracle::new(g, 1, OracleMode::DiscreteExact).unwrap();
        let mut cfg = HybridConfig::new(1000, InnerSolver::Smoother(SmootherKind::Richardson { omega: 1.0 / 52.0 }), StopRule::new(1e-300, 30).unwrap());
        cfg.use_initial_guess = false;
        cfg.record_errors = true;
        let t = hybrid_solve(&a, &b, &o, &cfg, Some(&reference)).unwrap();
        let hm = spectral_heatmap(&t, n).unwrap();
        assert_eq!((hm.modes(), hm.steps()), (n, 31));
        let slope = (std::f64::consts::PI / 26.0).cos().powi(2).log10();
        for m in 0..30 {
            assert!((hm.get(1, m + 1) - hm.get(1, m) - slope).abs() < 1e-9);
            for i in 2..=n {
                assert!(hm.get(i, m) < -12.0);
            }
        }
    }

    #[test]
    fn oracle_correction_clears_low_rows() {
        use crate::hybrid::{hybrid_solve, HybridConfig, InnerSolver, StepKind, StopRule};
        let n = 24;
        let g = StructuredGrid::<f64>::new_1d(n).unwrap();
        let a = assemble_stiffness(&g, |_: &[f64]| 1.0).unwrap();
        // every mode present with unit coefficient
        let reference = sine_transform_1d(&vec![1.0; n]).unwrap();
        let b = a.spmv(&reference).unwrap();
        let o = SpectralOracle::new(g, 5, OracleMode::DiscreteExact).unwrap();
        let mut cfg = HybridConfig::new(6, InnerSolver::Smoother(SmootherKind::Richardson { omega: 1.0 / 100.0 }), StopRule::new(1e-300, 6).unwrap());
        cfg.use_initial_guess = false;
        cfg.record_errors = true;
        let t = hybrid_solve(&a, &b, &o, &cfg, Some(&reference)).unwrap();
        assert_eq!(t.steps[6].kind, StepKind::Correct);
        let hm = spectral_heatmap(&t, n).unwrap();
        for i in 1..=5 {
            assert!(hm.get(i, 6) < -10.0);
            assert!(hm.get(i, 5) - hm.get(i, 0) > -1.0);
        }
        let mut csv = Vec::new();
        hm.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), n);
    }

    #[test]
    fn heatmap_needs_error_vectors() {
        let trace = IterationTrace::<f64> {
            steps: Vec::new(),
            status: crate::hybrid::SolveStatus::Converged,
            solution: vec![],
            total_ms: 0.0,
            corrector_ms: 0.0,
        };
        assert_eq!(spectral_heatmap(&trace, 4).unwrap().steps(), 0);
        let mut t2 = trace.clone();
        t2.steps.push(crate::hybrid::TraceStep {
            step: 0,
            kind: crate::hybrid::StepKind::Init,
            residual_l2: 0.0,
            error_l2: Some(0.0),
            error: Some(vec![0.0; 4]),
            time_ms: 0.0,
        });
        let hm = spectral_heatmap(&t2, 4).unwrap();
        assert!((0..4).all(|i| hm.values.row(i)[0] == -300.0));
        t2.steps[0].error = None;
        assert!(spectral_heatmap(&t2, 4).is_err());
    }

    #[test]
    fn rate_csv_has_the_curve() {
        let mut out = Vec::new();
        write_rate_csv(&fig4(), 30, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let line = text.lines().find(|l| l.starts_with("20,")).unwrap();
        let v: f64 = line[3..].parse().unwrap();
        assert!((v - 0.8904).abs() < 5e-4);
    }
}
