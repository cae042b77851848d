//! Cross-checks against nalgebra's dense linear algebra.

use nalgebra::DMatrix;

use himnet::correctors::{OracleMode, SpectralOracle};
use himnet::fem::{assemble_stiffness, StructuredGrid};
use himnet::gp::{covariance, GpSpec};
use himnet::linalg::{cholesky, operator_norm_2, DenseMatrix};
use himnet::mionet::sensor_lattice;
use himnet::smoothers::SmootherKind;
use himnet::spectral::{eigenpairs_1d, hybrid_iteration_matrix, spectral_radius};

fn to_na(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice())
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[test]
fn eigenvalues_match_dense_solver() {
    for n in [3, 20, 48] {
        let a = assemble_stiffness(&StructuredGrid::new_1d(n).unwrap(), |_: &[f64]| 1.0).unwrap();
        let ev = sorted_eigenvalues(&to_na(&a.to_dense()));
        let (lambda, _) = eigenpairs_1d::<f64>(n).unwrap();
        for (x, y) in ev.iter().zip(&lambda) {
            assert!((x - y).abs() < 1e-10 * y.max(1.0), "n = {n}: {x} vs {y}");
        }
    }
    let (l3, _) = eigenpairs_1d::<f64>(3).unwrap();
    assert!((l3[0] - 2.343146).abs() < 1e-6);
}

#[test]
fn two_d_spectrum_matches_tensor_formula() {
    let n = 9;
    let a = assemble_stiffness(&StructuredGrid::new_2d(n).unwrap(), |_: &[f64]| 1.0).unwrap();
    let ev = sorted_eigenvalues(&to_na(&a.to_dense()));
    let h = 1.0 / (n + 1) as f64;
    let mut want: Vec<f64> = (1..=n)
        .flat_map(|p| (1..=n).map(move |q| (p, q)))
        .map(|(p, q)| {
            let pi = std::f64::consts::PI;
            4.0 - 2.0 * (p as f64 * pi * h).cos() - 2.0 * (q as f64 * pi * h).cos()
        })
        .collect();
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (x, y) in ev.iter().zip(&want) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn cholesky_matches_dense_solver() {
    let pts = sensor_lattice::<f64>(1, 30);
    let k = covariance::<f64>(&GpSpec::rbf(0.0, 1.3, 0.05, 0), &pts);
    let jitter = 1e-8;
    let l = cholesky(&k, jitter).unwrap();
    let mut shifted = to_na(&k);
    for i in 0..30 {
        shifted[(i, i)] += jitter;
    }
    let na = shifted.clone().cholesky().unwrap().l();
    assert!((to_na(&l) - na).abs().max() < 1e-10);
    let ll = to_na(&l) * to_na(&l).transpose();
    assert!((ll - shifted).abs().max() < 1e-12);
}

#[test]
fn operator_norm_matches_svd() {
    let a = assemble_stiffness(&StructuredGrid::new_1d(12).unwrap(), |x: &[f64]| 1.0 + x[0]).unwrap();
    let est = operator_norm_2(|v: &[f64]| a.spmv(v).unwrap(), 12, 500, 3);
    let svd = to_na(&a.to_dense()).singular_values().max();
    assert!((est - svd).abs() < 1e-8 * svd);
}

#[test]
fn period_matrix_radius_matches_eigen_decomposition() {
    let n = 20;
    let g = StructuredGrid::new_1d(n).unwrap();
    let a = assemble_stiffness(&g, |_: &[f64]| 1.0).unwrap();
    let o = SpectralOracle::new(g, 6, OracleMode::DiscreteExact).unwrap();
    for (kind, m) in [(SmootherKind::Richardson { omega: 1.0 / 84.0 }, 6), (SmootherKind::GaussSeidel, 4)] {
        let t = hybrid_iteration_matrix(&a, &kind, &o, m).unwrap();
        let na = to_na(&t);
        let rho = na.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let est = spectral_radius(&t, 2000).unwrap();
        assert!((est / rho - 1.0).abs() < 1e-3, "{est} vs {rho}");
    }
}

#[test]
fn full_oracle_is_the_inverse() {
    let n = 6;
    let g = StructuredGrid::new_2d(n).unwrap();
    let a = assemble_stiffness(&g, |_: &[f64]| 1.0).unwrap();
    let inv = to_na(&a.to_dense()).try_inverse().unwrap();
    let o = SpectralOracle::new(g, n, OracleMode::DiscreteExact).unwrap();
    for j in 0..n * n {
        let mut e = vec![0.0; n * n];
        e[j] = 1.0;
        let c = himnet::correctors::Corrector::correct(&o, &e).unwrap();
        for i in 0..n * n {
            assert!((c[i] - inv[(i, j)]).abs() < 1e-12);
        }
    }
}
