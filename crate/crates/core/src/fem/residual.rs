//! Residual vector to residual function, and function to nodal vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assemble::hat_integrals;
use crate::fem::grid::{GridFunction, StructuredGrid};
use crate::scalar::Scalar;

/// How boundary-ring values are filled when a function is built from
/// interior nodal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    Zero,
    #[default]
    Replicate,
}

/// Continuous piecewise-linear function on a structured grid, stored by its
/// nodal values on every node including the boundary ring.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn<T> {
    grid: StructuredGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> PiecewiseLinearFn<T> {
    pub fn from_padded(grid: StructuredGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.num_padded() {
            return Err(Error::Dimension(format!(
                "{} padded values for a grid with {} nodes",
                values.len(),
                grid.num_padded()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Builds from interior values, filling the boundary ring by `mode`.
    pub fn from_interior(grid: StructuredGrid<T>, interior: &[T], mode: PaddingMode) -> Result<Self> {
        if interior.len() != grid.num_interior() {
            return Err(Error::Dimension(format!(
                "{} interior values for a grid with {} unknowns",
                interior.len(),
                grid.num_interior()
            )));
        }
        let n = grid.n();
        let mut values = vec![T::zero(); grid.num_padded()];
        for p in 0..values.len() {
            let (i, j) = grid.padded_to_axes(p);
            values[p] = match grid.interior_index(i, j) {
                Some(k) => interior[k],
                None => match mode {
                    PaddingMode::Zero => T::zero(),
                    PaddingMode::Replicate => {
                        // nearest interior node = clamp each axis into 1..=n
                        let ci = i.clamp(1, n);
                        let cj = if grid.dim() == 1 { 0 } else { j.clamp(1, n) };
                        interior[grid.interior_index(ci, cj).expect("clamped index is interior")]
                    }
                },
            };
        }
        Ok(Self { grid, values })
    }

    /// Field sampled on a uniform lattice of `m` points per axis covering the
    /// closed domain, interpolated by P1.
    pub fn from_lattice(dim: usize, m: usize, samples: Vec<T>) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidArgument(format!("sensor lattice needs at least 3 points per axis, got {m}")));
        }
        Self::from_padded(StructuredGrid::new(dim, m - 2)?, samples)
    }

    pub fn grid(&self) -> &StructuredGrid<T> {
        &self.grid
    }

    pub fn padded_values(&self) -> &[T] {
        &self.values
    }

    pub fn interior_values(&self) -> Vec<T> {
        (0..self.grid.num_interior())
            .map(|k| {
                let (i, j) = self.grid.interior_to_padded(k);
                self.values[self.grid.padded_index(i, j)]
            })
            .collect()
    }

    /// Locates `x` along one axis: cell index, local coordinate in `[0,1]`,
    /// and the node index when `x` sits on a node.
    fn locate(&self, x: T) -> Option<(usize, T, Option<usize>)> {
        let cells = self.grid.n() + 1;
        let fc = T::from_count(cells);
        let tol = T::lit(1e-12);
        if !x.is_finite() || x < -tol || x > T::one() + tol {
            return None;
        }
        let t = (x * fc).max(T::zero()).min(fc);
        let r = t.round();
        if (t - r).abs() <= T::epsilon() * T::lit(8.0) * fc {
            let a = r.to_usize().unwrap_or(0).min(cells);
            let c = a.min(cells - 1);
            return Some((c, T::from_count(a - c), Some(a)));
        }
        let c = t.floor().to_usize().unwrap_or(0).min(cells - 1);
        Some((c, t - T::from_count(c), None))
    }

    /// P1 evaluation; errors outside the closed unit domain.
    pub fn eval(&self, x: &[T]) -> Result<T> {
        let outside = || Error::OutsideDomain(x.iter().map(|v| v.to_f64_lossy()).collect());
        if x.len() != self.grid.dim() {
            return Err(Error::Dimension(format!(
                "point of dimension {} for a {}-d function",
                x.len(),
                self.grid.dim()
            )));
        }
        let (ci, s, ni) = self.locate(x[0]).ok_or_else(outside)?;
        if self.grid.dim() == 1 {
            if let Some(a) = ni {
                return Ok(self.values[a]);
            }
            let (v0, v1) = (self.values[ci], self.values[ci + 1]);
            return Ok(v0 + s * (v1 - v0));
        }
        let (cj, t, nj) = self.locate(x[1]).ok_or_else(outside)?;
        if let (Some(a), Some(b)) = (ni, nj) {
            return Ok(self.values[self.grid.padded_index(a, b)]);
        }
        let v = |a: usize, b: usize| self.values[self.grid.padded_index(ci + a, cj + b)];
        let (v00, v10, v01, v11) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
        Ok(if s >= t {
            v00 + s * (v10 - v00) + t * (v11 - v10)
        } else {
            v00 + t * (v01 - v00) + s * (v11 - v01)
        })
    }

    /// Evaluates at many points.
    pub fn eval_many(&self, points: &[Vec<T>]) -> Result<Vec<T>> {
        points.iter().map(|p| self.eval(p)).collect()
    }
}

/// Lumped residual function: `beta_i = r_i / int phi_i` at interior nodes,
/// boundary ring filled by `mode`.
pub fn residual_to_function<T: Scalar>(
    grid: &StructuredGrid<T>,
    r: &[T],
    mode: PaddingMode,
) -> Result<PiecewiseLinearFn<T>> {
    if r.len() != grid.num_interior() {
        return Err(Error::Dimension(format!(
            "residual of length {} for {} unknowns",
            r.len(),
            grid.num_interior()
        )));
    }
    let w = hat_integrals(grid);
    let beta: Vec<T> = r
        .iter()
        .enumerate()
        .map(|(k, &rk)| {
            let (i, j) = grid.interior_to_padded(k);
            rk / w[grid.padded_index(i, j)]
        })
        .collect();
    PiecewiseLinearFn::from_interior(*grid, &beta, mode)
}

/// Residual function for the augmented system: interior entries are lumped
/// like [`residual_to_function`], boundary entries are residuals of identity
/// rows and therefore already nodal values; they are copied unchanged.
pub fn residual_to_function_augmented<T: Scalar>(grid: &StructuredGrid<T>, r: &[T]) -> Result<PiecewiseLinearFn<T>> {
    if r.len() != grid.num_padded() {
        return Err(Error::Dimension(format!(
            "augmented residual of length {} for {} nodes",
            r.len(),
            grid.num_padded()
        )));
    }
    let w = hat_integrals(grid);
    let values = r
        .iter()
        .enumerate()
        .map(|(p, &rp)| if grid.is_boundary_padded(p) { rp } else { rp / w[p] })
        .collect();
    PiecewiseLinearFn::from_padded(*grid, values)
}

/// Nodal interpolation at the interior nodes of `grid`.
pub fn interpolate_at_nodes<T: Scalar>(u: impl Fn(&[T]) -> T, grid: &StructuredGrid<T>) -> Result<GridFunction<T>> {
    let mut values = Vec::with_capacity(grid.num_interior());
    for k in 0..grid.num_interior() {
        let v = u(&grid.interior_coords(k));
        if !v.is_finite() {
            return Err(Error::NonFinite { node: k, value: v.to_f64_lossy() });
        }
        values.push(v);
    }
    GridFunction::new(*grid, values, false)
}

/// Nodal interpolation at every node including the boundary ring.
pub fn interpolate_at_padded<T: Scalar>(u: impl Fn(&[T]) -> T, grid: &StructuredGrid<T>) -> Result<GridFunction<T>> {
    let mut values = Vec::with_capacity(grid.num_padded());
    for p in 0..grid.num_padded() {
        let v = u(&grid.padded_coords(p));
        if !v.is_finite() {
            return Err(Error::NonFinite { node: p, value: v.to_f64_lossy() });
        }
        values.push(v);
    }
    GridFunction::new(*grid, values, true)
}
