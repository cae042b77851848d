//! Dense and sparse primitives: CSR storage, dense matrices with Cholesky,
//! the orthonormal sine transform and a 2-norm estimator for linear maps.
//!
//! Every reduction runs in index order, so results do not depend on thread
//! count or call history.

mod csr;
mod dense;

pub use csr::CsrMatrix;
pub use dense::{cholesky, cholesky_solve, DenseMatrix};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm2<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

#[inline]
pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Table of `sin(pi * k / (n + 1))` for `k in 0..2(n+1)`; products `i*j` are
/// reduced modulo the period before lookup so large mode numbers keep full
/// accuracy.
fn sine_table<T: Scalar>(n: usize) -> Vec<T> {
    let period = 2 * (n + 1);
    (0..period)
        .map(|k| T::lit((std::f64::consts::PI * k as f64 / (n + 1) as f64).sin()))
        .collect()
}

/// Orthonormal sine basis `xi[i][j] = sqrt(2h) sin(i pi h j)`, 1-based modes
/// and nodes stored 0-based. The matrix is symmetric and its own inverse.
pub fn sine_basis<T: Scalar>(n: usize) -> DenseMatrix<T> {
    let table = sine_table::<T>(n);
    let period = 2 * (n + 1);
    let scale = T::lit((2.0 / (n + 1) as f64).sqrt());
    DenseMatrix::from_fn(n, n, |i, j| scale * table[((i + 1) * (j + 1)) % period])
}

/// Coefficients `alpha = Xi^T v` of `v` in the discrete sine basis.
///
/// Applying the transform twice returns the input.
pub fn sine_transform_1d<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let n = v.len();
    if n < 1 {
        return Err(Error::InvalidArgument("sine transform of an empty vector".into()));
    }
    let table = sine_table::<T>(n);
    let period = 2 * (n + 1);
    let scale = T::lit((2.0 / (n + 1) as f64).sqrt());
    Ok((1..=n)
        .map(|i| {
            let mut acc = T::zero();
            for (j, &vj) in v.iter().enumerate() {
                acc += table[(i * (j + 1)) % period] * vj;
            }
            scale * acc
        })
        .collect())
}

/// Tensor-product sine transform of an `n x n` lexicographic array
/// (x index fastest). Output entry `(b-1)*n + (a-1)` holds the coefficient of
/// mode `a` in x and `b` in y.
pub fn sine_transform_2d<T: Scalar>(v: &[T], n: usize) -> Result<Vec<T>> {
    if n < 1 || v.len() != n * n {
        return Err(Error::Dimension(format!("2-d sine transform: {} values for n = {n}", v.len())));
    }
    let mut tmp = vec![T::zero(); n * n];
    for row in 0..n {
        let t = sine_transform_1d(&v[row * n..(row + 1) * n])?;
        tmp[row * n..(row + 1) * n].copy_from_slice(&t);
    }
    let mut out = vec![T::zero(); n * n];
    let mut col = vec![T::zero(); n];
    for a in 0..n {
        for (j, c) in col.iter_mut().enumerate() {
            *c = tmp[j * n + a];
        }
        let t = sine_transform_1d(&col)?;
        for (b, tb) in t.into_iter().enumerate() {
            out[b * n + a] = tb;
        }
    }
    Ok(out)
}

/// Estimates the largest singular value of a linear map on `R^n`.
///
/// The map is probed with the `n` unit basis vectors to form its matrix, then
/// power iteration runs on `M^T M` from a seeded random start. The estimate
/// approaches the true norm from below.
pub fn operator_norm_2<T, F>(apply: F, n: usize, iters: usize, seed: u64) -> T
where
    T: Scalar,
    F: Fn(&[T]) -> Vec<T>,
{
    if n == 0 {
        return T::zero();
    }
    let mut cols = Vec::with_capacity(n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        cols.push(apply(&e));
        e[j] = T::zero();
    }
    let m = cols[0].len();
    // M stored column-wise: M v = sum_j v_j col_j, M^T w = (col_j . w)_j
    let apply_m = |v: &[T]| {
        let mut out = vec![T::zero(); m];
        for (c, &vj) in cols.iter().zip(v) {
            axpy(vj, c, &mut out);
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<T> = (0..n).map(|_| T::lit(rng.random::<f64>() - 0.5)).collect();
    let nv = norm2(&v);
    if nv == T::zero() {
        v[0] = T::one();
    } else {
        v.iter_mut().for_each(|x| *x /= nv);
    }
    let mut est = T::zero();
    for _ in 0..iters.max(1) {
        let w = apply_m(&v);
        est = norm2(&w);
        let z: Vec<T> = cols.iter().map(|c| dot(c, &w)).collect();
        let nz = norm2(&z);
        if nz == T::zero() {
            break;
        }
        v = z.into_iter().map(|x| x / nz).collect();
    }
    let w = apply_m(&v);
    est.max(norm2(&w))
}
