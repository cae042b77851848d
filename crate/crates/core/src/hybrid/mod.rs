//! The hybrid iteration: `M - 1` smoother (or V-cycle) steps followed by one
//! corrector step, repeated until the residual is small.

mod trace;

use std::io::Write;
use std::time::Instant;

use crate::correctors::Corrector;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::multigrid::MgHierarchy;
use crate::scalar::Scalar;
use crate::smoothers::{BoundSmoother, SmootherKind};

pub(crate) use trace::Tracker;
pub use trace::{IterationTrace, ResidualNorm, SolveStatus, StepKind, StopRule, TraceStep, DIVERGENCE_FACTOR};

/// Step applied between corrections.
#[derive(Debug, Clone)]
pub enum InnerSolver<T> {
    Smoother(SmootherKind<T>),
    /// One V-cycle counts as one step.
    Multigrid(MgHierarchy<T>),
}

#[derive(Debug, Clone)]
pub struct HybridConfig<T> {
    /// Correction period: step `m` is a correction when `m % M == 0`.
    pub m: usize,
    pub inner: InnerSolver<T>,
    pub stop: StopRule<T>,
    /// Start from `corrector.initial_guess(b)` instead of zero.
    pub use_initial_guess: bool,
    /// Keep the full error vector per step (needs a reference solution).
    pub record_errors: bool,
}

impl<T: Scalar> HybridConfig<T> {
    pub fn new(m: usize, inner: InnerSolver<T>, stop: StopRule<T>) -> Self {
        Self { m, inner, stop, use_initial_guess: true, record_errors: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidArgument("correction period M must be at least 1".into()));
        }
        self.stop.validate()?;
        if let InnerSolver::Smoother(k) = &self.inner {
            k.validate()?;
        }
        Ok(())
    }
}

enum Inner<'a, T> {
    Smoother(BoundSmoother<T>),
    Multigrid(&'a MgHierarchy<T>),
}

/// Runs the hybrid iteration on `A mu = b`.
///
/// The residual is recomputed from scratch after every step. Divergence ends
/// the run with [`SolveStatus::Diverged`] rather than an error.
pub fn hybrid_solve<T: Scalar, C: Corrector<T> + ?Sized>(
    a: &CsrMatrix<T>,
    b: &[T],
    corrector: &C,
    cfg: &HybridConfig<T>,
    reference: Option<&[T]>,
) -> Result<IterationTrace<T>> {
    let start = Instant::now();
    cfg.validate()?;
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!("system {}x{} with b of length {}", a.nrows(), a.ncols(), b.len())));
    }
    if corrector.size() != n {
        return Err(Error::Dimension(format!("corrector of size {} for a system of size {n}", corrector.size())));
    }
    if cfg.record_errors && reference.is_none() {
        return Err(Error::InvalidArgument("error vectors requested without a reference solution".into()));
    }
    let inner = match &cfg.inner {
        InnerSolver::Smoother(kind) => Inner::Smoother(BoundSmoother::new(*kind, a)?),
        InnerSolver::Multigrid(h) => {
            if h.matrix().nrows() != n {
                return Err(Error::Dimension(format!(
                    "multigrid hierarchy of size {} for a system of size {n}",
                    h.matrix().nrows()
                )));
            }
            Inner::Multigrid(h)
        }
    };
    let mut corrector_ms = 0.0;
    let mut mu = if cfg.use_initial_guess {
        let t0 = Instant::now();
        let g = corrector.initial_guess(b)?;
        corrector_ms += t0.elapsed().as_secs_f64() * 1e3;
        if g.len() != n {
            return Err(Error::Dimension("initial guess length".into()));
        }
        g
    } else {
        vec![T::zero(); n]
    };
    let mut tracker = Tracker::new(a, b, &mu, cfg.stop, reference, cfg.record_errors, start)?;
    tracker.corrector_ms = corrector_ms;
    let mut m = 1usize;
    let status = loop {
        if let Some(s) = tracker.check() {
            break s;
        }
        let kind = if m % cfg.m == 0 {
            let t0 = Instant::now();
            let c = corrector.correct(&tracker.residual)?;
            tracker.corrector_ms += t0.elapsed().as_secs_f64() * 1e3;
            for (x, d) in mu.iter_mut().zip(c) {
                *x += d;
            }
            StepKind::Correct
        } else {
            match &inner {
                Inner::Smoother(s) => {
                    s.step(a, b, &mut mu, &tracker.residual)?;
                    StepKind::Smooth
                }
                Inner::Multigrid(h) => {
                    h.vcycle(b, &mut mu)?;
                    StepKind::Vcycle
                }
            }
        };
        tracker.record(kind, &mu)?;
        m += 1;
    };
    Ok(tracker.finish(status, mu))
}

/// One row of an M-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub iterations: usize,
    pub time_s: f64,
    pub status: SolveStatus,
    /// Baseline iterations divided by this run's iterations, when a baseline
    /// was given and the run converged.
    pub speedup: Option<f64>,
}

/// Runs [`hybrid_solve`] for every period in `m_values`; divergent runs are
/// recorded, not raised.
pub fn sweep_m<T: Scalar, C: Corrector<T> + ?Sized>(
    a: &CsrMatrix<T>,
    b: &[T],
    corrector: &C,
    m_values: &[usize],
    template: &HybridConfig<T>,
    baseline_iterations: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if m_values.is_empty() {
        return Err(Error::InvalidArgument("the list of correction periods is empty".into()));
    }
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let cfg = HybridConfig { m, record_errors: false, ..template.clone() };
        let trace = hybrid_solve(a, b, corrector, &cfg, None)?;
        let iterations = trace.iterations();
        let speedup = match (baseline_iterations, trace.status) {
            (Some(base), SolveStatus::Converged) => Some(base as f64 / iterations.max(1) as f64),
            _ => None,
        };
        rows.push(SweepRow { m, iterations, time_s: trace.total_ms / 1e3, status: trace.status, speedup });
    }
    Ok(rows)
}

/// CSV with columns `M,iterations,time_s,status,speedup`; diverged runs show
/// `div.` in the status column.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "M,iterations,time_s,status,speedup")?;
    for r in rows {
        let status = match r.status {
            SolveStatus::Diverged => "div.",
            s => s.as_str(),
        };
        let speedup = r.speedup.map(|s| format!("{s:.3}")).unwrap_or_default();
        writeln!(w, "{},{},{:.6},{},{}", r.m, r.iterations, r.time_s, status, speedup)?;
    }
    Ok(())
}

/// Geometric-mean contraction `(r[end] / r[end - window])^(1 / window)`.
pub fn window_rate<T: Scalar>(residuals: &[T], end: usize, window: usize) -> Result<f64> {
    if window == 0 || end >= residuals.len() || end < window {
        return Err(Error::InvalidArgument(format!(
            "window of {window} ending at {end} does not fit {} residuals",
            residuals.len()
        )));
    }
    let hi = residuals[end].to_f64_lossy();
    let lo = residuals[end - window].to_f64_lossy();
    Ok((hi / lo).powf(1.0 / window as f64))
}

/// Per-step contraction over the last `window` steps of the trace.
pub fn empirical_rate<T: Scalar>(trace: &IterationTrace<T>, window: usize) -> Result<f64> {
    let r = trace.residuals();
    if r.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    window_rate(&r, r.len() - 1, window)
}
