use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf, CsrMatrix};
use crate::scalar::Scalar;

/// Residual growth factor (relative to the starting residual) that marks a
/// run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualNorm {
    L2,
    Linf,
}

/// Stop when the chosen residual norm drops to `tol`, or after `max_iter` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule<T> {
    pub tol: T,
    pub max_iter: usize,
    pub norm: ResidualNorm,
}

impl<T: Scalar> StopRule<T> {
    pub fn new(tol: T, max_iter: usize) -> Result<Self> {
        let rule = Self { tol, max_iter, norm: ResidualNorm::L2 };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) || !self.tol.is_finite() {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn measure(&self, r: &[T]) -> T {
        match self.norm {
            ResidualNorm::L2 => norm2(r),
            ResidualNorm::Linf => norm_inf(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Init,
    Smooth,
    Correct,
    Vcycle,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Init => "init",
            StepKind::Smooth => "smooth",
            StepKind::Correct => "correct",
            StepKind::Vcycle => "vcycle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIter,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::Diverged => "diverged",
            SolveStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep<T> {
    pub step: usize,
    pub kind: StepKind,
    pub residual_l2: T,
    pub error_l2: Option<T>,
    /// Full error vector `reference - mu`, kept only when requested.
    pub error: Option<Vec<T>>,
    /// Milliseconds since the solve started.
    pub time_ms: f64,
}

/// Per-step history of a solve plus its final iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace<T> {
    pub steps: Vec<TraceStep<T>>,
    pub status: SolveStatus,
    pub solution: Vec<T>,
    pub total_ms: f64,
    /// Time spent inside corrector calls.
    pub corrector_ms: f64,
}

impl<T: Scalar> IterationTrace<T> {
    /// Number of update steps, not counting the initial entry.
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn residuals(&self) -> Vec<T> {
        self.steps.iter().map(|s| s.residual_l2).collect()
    }

    pub fn final_residual(&self) -> T {
        self.steps.last().map_or(T::nan(), |s| s.residual_l2)
    }

    /// CSV with header `step,kind,residual_l2,error_l2,time_ms`; the error
    /// column is left empty when no reference was given.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,kind,residual_l2,error_l2,time_ms")?;
        for s in &self.steps {
            let err = s.error_l2.map(|e| format!("{:e}", e.to_f64_lossy())).unwrap_or_default();
            writeln!(
                w,
                "{},{},{:e},{},{:.6}",
                s.step,
                s.kind.as_str(),
                s.residual_l2.to_f64_lossy(),
                err,
                s.time_ms
            )?;
        }
        Ok(())
    }
}

/// Shared bookkeeping for iterative loops: recomputes the residual from
/// scratch after every step, records the trace, and decides when to stop.
pub(crate) struct Tracker<'a, T> {
    a: &'a CsrMatrix<T>,
    b: &'a [T],
    stop: StopRule<T>,
    reference: Option<&'a [T]>,
    keep_errors: bool,
    start: Instant,
    r0: T,
    pub residual: Vec<T>,
    steps: Vec<TraceStep<T>>,
    pub corrector_ms: f64,
}

impl<'a, T: Scalar> Tracker<'a, T> {
    pub fn new(
        a: &'a CsrMatrix<T>,
        b: &'a [T],
        mu: &[T],
        stop: StopRule<T>,
        reference: Option<&'a [T]>,
        keep_errors: bool,
        start: Instant,
    ) -> Result<Self> {
        stop.validate()?;
        if let Some(r) = reference {
            if r.len() != mu.len() {
                return Err(Error::Dimension("reference solution length".into()));
            }
        }
        let residual = a.residual(b, mu)?;
        let mut t = Self {
            a,
            b,
            stop,
            reference,
            keep_errors,
            start,
            r0: norm2(&residual),
            residual,
            steps: Vec::new(),
            corrector_ms: 0.0,
        };
        t.push(StepKind::Init, mu);
        Ok(t)
    }

    fn push(&mut self, kind: StepKind, mu: &[T]) {
        let (error_l2, error) = match self.reference {
            Some(reference) => {
                let e: Vec<T> = reference.iter().zip(mu).map(|(&x, &y)| x - y).collect();
                (Some(norm2(&e)), self.keep_errors.then_some(e))
            }
            None => (None, None),
        };
        self.steps.push(TraceStep {
            step: self.steps.len(),
            kind,
            residual_l2: norm2(&self.residual),
            error_l2,
            error,
            time_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }

    /// Status implied by the current residual, if the loop should end.
    pub fn check(&self) -> Option<SolveStatus> {
        let rl2 = norm2(&self.residual);
        if !rl2.is_finite() || rl2 > T::lit(DIVERGENCE_FACTOR) * self.r0 {
            return Some(SolveStatus::Diverged);
        }
        if self.stop.measure(&self.residual) <= self.stop.tol {
            return Some(SolveStatus::Converged);
        }
        if self.steps.len() > self.stop.max_iter {
            return Some(SolveStatus::MaxIter);
        }
        None
    }

    pub fn record(&mut self, kind: StepKind, mu: &[T]) -> Result<()> {
        self.a.residual_into(self.b, mu, &mut self.residual)?;
        self.push(kind, mu);
        Ok(())
    }

    pub fn finish(self, status: SolveStatus, solution: Vec<T>) -> IterationTrace<T> {
        IterationTrace {
            steps: self.steps,
            status,
            solution,
            total_ms: self.start.elapsed().as_secs_f64() * 1e3,
            corrector_ms: self.corrector_ms,
        }
    }
}
