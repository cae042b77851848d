//! Geometric multigrid V-cycles on nested uniform grids.
//!
//! Every level is re-discretized with the same coefficient. Prolongation is
//! the P1 inclusion of the coarse finite-element space into the fine one, so
//! restriction of a finite-element residual is its plain transpose.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, StructuredGrid};
use crate::hybrid::{IterationTrace, StepKind, StopRule, Tracker};
use crate::linalg::{cholesky, cholesky_solve, CsrMatrix, DenseMatrix};
use crate::scalar::Scalar;
use crate::smoothers::sor_sweep;

/// Cycle parameters: number of levels and pre/post Gauss-Seidel sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MgParams {
    pub levels: usize,
    pub nu1: usize,
    pub nu2: usize,
}

impl MgParams {
    /// V(2,2) with as many levels as the grid allows while the coarsest
    /// level keeps at least `min_coarse` interior nodes per axis.
    pub fn auto<T: Scalar>(grid: &StructuredGrid<T>, min_coarse: usize) -> Self {
        let mut levels = 1;
        let mut g = *grid;
        while let Some(c) = g.coarsen() {
            if c.n() < min_coarse.max(1) {
                break;
            }
            g = c;
            levels += 1;
        }
        Self { levels: levels.max(2), nu1: 2, nu2: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct MgLevel<T> {
    pub grid: StructuredGrid<T>,
    pub a: CsrMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct MgHierarchy<T> {
    levels: Vec<MgLevel<T>>,
    /// `prolongations[l]` maps level `l+1` (coarser) to level `l`.
    prolongations: Vec<CsrMatrix<T>>,
    restrictions: Vec<CsrMatrix<T>>,
    nu1: usize,
    nu2: usize,
    coarse_factor: DenseMatrix<T>,
}

/// Linear interpolation from the coarse grid's interior nodes to the fine
/// grid's interior nodes. Coarse boundary values are zero.
pub fn prolongation<T: Scalar>(fine: &StructuredGrid<T>, coarse: &StructuredGrid<T>) -> Result<CsrMatrix<T>> {
    if fine.dim() != coarse.dim() || fine.n() + 1 != 2 * (coarse.n() + 1) {
        return Err(Error::InvalidArgument(format!(
            "grids with n = {} and n = {} are not nested by a factor of two",
            fine.n(),
            coarse.n()
        )));
    }
    let half = T::lit(0.5);
    let one = T::one();
    let mut trip = Vec::new();
    // coarse padded axis index and weight contributing to fine axis index a
    let axis = |a: usize| -> Vec<(usize, T)> {
        if a % 2 == 0 {
            vec![(a / 2, one)]
        } else {
            vec![(a / 2, half), (a / 2 + 1, half)]
        }
    };
    if fine.dim() == 1 {
        for k in 0..fine.num_interior() {
            let (i, _) = fine.interior_to_padded(k);
            for (ci, w) in axis(i) {
                if let Some(c) = coarse.interior_index(ci, 0) {
                    trip.push((k, c, w));
                }
            }
        }
    } else {
        for k in 0..fine.num_interior() {
            let (i, j) = fine.interior_to_padded(k);
            let sources: Vec<((usize, usize), T)> = match (i % 2, j % 2) {
                (0, 0) => vec![((i / 2, j / 2), one)],
                (1, 0) => vec![((i / 2, j / 2), half), ((i / 2 + 1, j / 2), half)],
                (0, 1) => vec![((i / 2, j / 2), half), ((i / 2, j / 2 + 1), half)],
                // cell centre lies on the cut diagonal of the coarse cell
                _ => vec![((i / 2, j / 2), half), ((i / 2 + 1, j / 2 + 1), half)],
            };
            for ((ci, cj), w) in sources {
                if let Some(c) = coarse.interior_index(ci, cj) {
                    trip.push((k, c, w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(fine.num_interior(), coarse.num_interior(), &trip)
}

/// Builds a `levels`-deep hierarchy for the operator `-div(k grad u)`.
pub fn build_hierarchy<T: Scalar>(
    grid: &StructuredGrid<T>,
    k: impl Fn(&[T]) -> T,
    levels: usize,
    nu1: usize,
    nu2: usize,
) -> Result<MgHierarchy<T>> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("multigrid needs at least 2 levels, got {levels}")));
    }
    let mut grids = vec![*grid];
    for _ in 1..levels {
        let last = grids.last().expect("non-empty");
        match last.coarsen() {
            Some(c) => grids.push(c),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "n + 1 = {} is not divisible by 2^{} with a non-empty coarsest grid",
                    grid.n() + 1,
                    levels - 1
                )))
            }
        }
    }
    let mut lv = Vec::with_capacity(levels);
    for g in &grids {
        lv.push(MgLevel { grid: *g, a: assemble_stiffness(g, &k)? });
    }
    let mut prolongations = Vec::with_capacity(levels - 1);
    for w in grids.windows(2) {
        prolongations.push(prolongation(&w[0], &w[1])?);
    }
    let restrictions = prolongations.iter().map(|p| p.transpose()).collect();
    let coarse_factor = cholesky(&lv.last().expect("non-empty").a.to_dense(), T::zero())?;
    Ok(MgHierarchy { levels: lv, prolongations, restrictions, nu1, nu2, coarse_factor })
}

impl<T: Scalar> MgHierarchy<T> {
    pub fn build(grid: &StructuredGrid<T>, k: impl Fn(&[T]) -> T, params: MgParams) -> Result<Self> {
        build_hierarchy(grid, k, params.levels, params.nu1, params.nu2)
    }

    pub fn levels(&self) -> &[MgLevel<T>] {
        &self.levels
    }

    pub fn prolongations(&self) -> &[CsrMatrix<T>] {
        &self.prolongations
    }

    pub fn sweeps(&self) -> (usize, usize) {
        (self.nu1, self.nu2)
    }

    /// Finest-level operator.
    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.levels[0].a
    }

    pub fn grid(&self) -> &StructuredGrid<T> {
        &self.levels[0].grid
    }

    /// One V(nu1, nu2) cycle on the finest level, updating `mu` in place.
    pub fn vcycle(&self, b: &[T], mu: &mut [T]) -> Result<()> {
        let n = self.matrix().nrows();
        if b.len() != n || mu.len() != n {
            return Err(Error::Dimension(format!(
                "V-cycle on {n} unknowns with b of length {} and mu of length {}",
                b.len(),
                mu.len()
            )));
        }
        self.cycle(0, b, mu)
    }

    fn cycle(&self, l: usize, b: &[T], x: &mut [T]) -> Result<()> {
        let a = &self.levels[l].a;
        if l + 1 == self.levels.len() {
            let sol = cholesky_solve(&self.coarse_factor, b)?;
            x.copy_from_slice(&sol);
            return Ok(());
        }
        for _ in 0..self.nu1 {
            sor_sweep(a, b, x, T::one())?;
        }
        let r = a.residual(b, x)?;
        let rc = self.restrictions[l].spmv(&r)?;
        let mut xc = vec![T::zero(); rc.len()];
        self.cycle(l + 1, &rc, &mut xc)?;
        let corr = self.prolongations[l].spmv(&xc)?;
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += *ci;
        }
        for _ in 0..self.nu2 {
            sor_sweep(a, b, x, T::one())?;
        }
        Ok(())
    }
}

/// Free-function form of [`MgHierarchy::vcycle`].
pub fn vcycle<T: Scalar>(h: &MgHierarchy<T>, b: &[T], mu: &mut [T]) -> Result<()> {
    h.vcycle(b, mu)
}

/// Repeats V-cycles from `mu0` until the stop rule fires.
pub fn solve_multigrid<T: Scalar>(
    h: &MgHierarchy<T>,
    b: &[T],
    mu0: &[T],
    stop: &StopRule<T>,
) -> Result<IterationTrace<T>> {
    let start = Instant::now();
    let a = h.matrix();
    if b.len() != a.nrows() || mu0.len() != a.nrows() {
        return Err(Error::Dimension("multigrid solve: vector lengths".into()));
    }
    let mut mu = mu0.to_vec();
    let mut tracker = Tracker::new(a, b, &mu, *stop, None, false, start)?;
    let status = loop {
        if let Some(s) = tracker.check() {
            break s;
        }
        h.vcycle(b, &mut mu)?;
        tracker.record(StepKind::Vcycle, &mu)?;
    };
    Ok(tracker.finish(status, mu))
}
