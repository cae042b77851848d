//! Stationary iterations `mu <- mu + B (b - A mu)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{IterationTrace, StepKind, StopRule, Tracker};
use crate::linalg::CsrMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherKind<T> {
    Richardson { omega: T },
    Jacobi { omega: T },
    GaussSeidel,
    Sor { omega: T },
}

impl<T: Scalar> SmootherKind<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SmootherKind::Richardson { omega } | SmootherKind::Jacobi { omega } | SmootherKind::Sor { omega } => {
                if !omega.is_finite() || omega <= T::zero() {
                    return Err(Error::InvalidArgument(format!("relaxation weight must be positive, got {omega}")));
                }
                Ok(())
            }
            SmootherKind::GaussSeidel => Ok(()),
        }
    }

    fn needs_diagonal(&self) -> bool {
        !matches!(self, SmootherKind::Richardson { .. })
    }
}

fn check_shapes<T: Scalar>(a: &CsrMatrix<T>, b: &[T], mu: &[T]) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    if b.len() != a.nrows() || mu.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "system of size {} with b of length {} and mu of length {}",
            a.nrows(),
            b.len(),
            mu.len()
        )));
    }
    Ok(())
}

fn check_diagonal<T: Scalar>(a: &CsrMatrix<T>) -> Result<Vec<T>> {
    let d = a.diagonal();
    match d.iter().position(|&v| v == T::zero()) {
        Some(row) => Err(Error::ZeroDiagonal { row }),
        None => Ok(d),
    }
}

/// Forward sweep; `omega = 1` is Gauss-Seidel.
pub(crate) fn sor_sweep<T: Scalar>(a: &CsrMatrix<T>, b: &[T], mu: &mut [T], omega: T) -> Result<()> {
    let one = T::one();
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let mut acc = b[i];
        let mut diag = T::zero();
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                acc -= v * mu[j];
            }
        }
        if diag == T::zero() {
            return Err(Error::ZeroDiagonal { row: i });
        }
        let gs = acc / diag;
        mu[i] = if omega == one { gs } else { (one - omega) * mu[i] + omega * gs };
    }
    Ok(())
}

/// One step using a residual `r = b - A mu` the caller already holds.
fn step_with_residual<T: Scalar>(
    kind: &SmootherKind<T>,
    a: &CsrMatrix<T>,
    b: &[T],
    mu: &mut [T],
    r: &[T],
    diag: Option<&[T]>,
) -> Result<()> {
    match *kind {
        SmootherKind::Richardson { omega } => {
            for (m, &ri) in mu.iter_mut().zip(r) {
                *m += omega * ri;
            }
        }
        SmootherKind::Jacobi { omega } => {
            let d = diag.expect("diagonal precomputed for Jacobi");
            for ((m, &ri), &di) in mu.iter_mut().zip(r).zip(d) {
                *m += omega * ri / di;
            }
        }
        SmootherKind::GaussSeidel => sor_sweep(a, b, mu, T::one())?,
        SmootherKind::Sor { omega } => sor_sweep(a, b, mu, omega)?,
    }
    Ok(())
}

/// Applies one smoothing step to `mu` in place.
pub fn smoother_step<T: Scalar>(kind: &SmootherKind<T>, a: &CsrMatrix<T>, b: &[T], mu: &mut [T]) -> Result<()> {
    kind.validate()?;
    check_shapes(a, b, mu)?;
    let diag = if kind.needs_diagonal() { Some(check_diagonal(a)?) } else { None };
    match kind {
        SmootherKind::GaussSeidel | SmootherKind::Sor { .. } => step_with_residual(kind, a, b, mu, &[], None),
        _ => {
            let r = a.residual(b, mu)?;
            step_with_residual(kind, a, b, mu, &r, diag.as_deref())
        }
    }
}

/// Reusable smoother bound to one matrix: validates once, caches the diagonal.
#[derive(Debug, Clone)]
pub(crate) struct BoundSmoother<T> {
    kind: SmootherKind<T>,
    diag: Option<Vec<T>>,
}

impl<T: Scalar> BoundSmoother<T> {
    pub fn new(kind: SmootherKind<T>, a: &CsrMatrix<T>) -> Result<Self> {
        kind.validate()?;
        let diag = if kind.needs_diagonal() { Some(check_diagonal(a)?) } else { None };
        Ok(Self { kind, diag })
    }

    /// `r` must equal `b - A mu` on entry.
    pub fn step(&self, a: &CsrMatrix<T>, b: &[T], mu: &mut [T], r: &[T]) -> Result<()> {
        step_with_residual(&self.kind, a, b, mu, r, self.diag.as_deref())
    }
}

/// Iterates the smoother from `mu0` until the stop rule fires.
pub fn solve_stationary<T: Scalar>(
    kind: &SmootherKind<T>,
    a: &CsrMatrix<T>,
    b: &[T],
    mu0: &[T],
    stop: &StopRule<T>,
) -> Result<IterationTrace<T>> {
    solve_stationary_with_reference(kind, a, b, mu0, stop, None)
}

/// As [`solve_stationary`], also recording `||u_ref - mu||_2` per step.
pub fn solve_stationary_with_reference<T: Scalar>(
    kind: &SmootherKind<T>,
    a: &CsrMatrix<T>,
    b: &[T],
    mu0: &[T],
    stop: &StopRule<T>,
    reference: Option<&[T]>,
) -> Result<IterationTrace<T>> {
    let start = Instant::now();
    check_shapes(a, b, mu0)?;
    let smoother = BoundSmoother::new(*kind, a)?;
    let mut mu = mu0.to_vec();
    let mut tracker = Tracker::new(a, b, &mu, *stop, reference, false, start)?;
    let status = loop {
        if let Some(s) = tracker.check() {
            break s;
        }
        smoother.step(a, b, &mut mu, &tracker.residual)?;
        tracker.record(StepKind::Smooth, &mu)?;
    };
    Ok(tracker.finish(status, mu))
}
