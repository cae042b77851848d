use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform grid on `[0,1]` or `[0,1]^2` with `n` interior nodes per axis.
///
/// Nodes carry padded indices `0..=n+1` per axis; `0` and `n+1` are on the
/// boundary. In 2-d the node ordering is lexicographic with x fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredGrid<T> {
    dim: usize,
    n: usize,
    h: T,
}

impl<T: Scalar> StructuredGrid<T> {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 1 {
            return Err(Error::InvalidArgument("grid needs at least one interior node".into()));
        }
        Ok(Self { dim, n, h: T::one() / T::from_count(n + 1) })
    }

    pub fn new_1d(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn new_2d(n: usize) -> Result<Self> {
        Self::new(2, n)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior nodes per axis.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    /// Number of interior unknowns, `n` or `n^2`.
    pub fn num_interior(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Number of nodes including the boundary ring.
    pub fn num_padded(&self) -> usize {
        (self.n + 2).pow(self.dim as u32)
    }

    /// Coordinate of padded index `a` along one axis, computed as `a/(n+1)`.
    #[inline]
    pub fn axis_coord(&self, a: usize) -> T {
        T::from_count(a) / T::from_count(self.n + 1)
    }

    /// Padded axis indices of interior node `idx`.
    #[inline]
    pub fn interior_to_padded(&self, idx: usize) -> (usize, usize) {
        if self.dim == 1 {
            (idx + 1, 0)
        } else {
            (idx % self.n + 1, idx / self.n + 1)
        }
    }

    /// Flat padded index from padded axis indices.
    #[inline]
    pub fn padded_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * (self.n + 2) + i
        }
    }

    /// Padded axis indices of padded node `p`.
    #[inline]
    pub fn padded_to_axes(&self, p: usize) -> (usize, usize) {
        if self.dim == 1 {
            (p, 0)
        } else {
            (p % (self.n + 2), p / (self.n + 2))
        }
    }

    /// Interior index of padded axis indices, `None` on the boundary.
    #[inline]
    pub fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        let inside = |a: usize| a >= 1 && a <= self.n;
        if self.dim == 1 {
            inside(i).then(|| i - 1)
        } else {
            (inside(i) && inside(j)).then(|| (j - 1) * self.n + (i - 1))
        }
    }

    pub fn is_boundary_padded(&self, p: usize) -> bool {
        let (i, j) = self.padded_to_axes(p);
        self.interior_index(i, j).is_none()
    }

    /// Coordinates of padded axis indices.
    pub fn coords(&self, i: usize, j: usize) -> Vec<T> {
        if self.dim == 1 {
            vec![self.axis_coord(i)]
        } else {
            vec![self.axis_coord(i), self.axis_coord(j)]
        }
    }

    pub fn interior_coords(&self, idx: usize) -> Vec<T> {
        let (i, j) = self.interior_to_padded(idx);
        self.coords(i, j)
    }

    pub fn padded_coords(&self, p: usize) -> Vec<T> {
        let (i, j) = self.padded_to_axes(p);
        self.coords(i, j)
    }

    /// All interior node coordinates in unknown order.
    pub fn interior_points(&self) -> Vec<Vec<T>> {
        (0..self.num_interior()).map(|k| self.interior_coords(k)).collect()
    }

    /// All node coordinates including the boundary, in padded order.
    pub fn padded_points(&self) -> Vec<Vec<T>> {
        (0..self.num_padded()).map(|k| self.padded_coords(k)).collect()
    }

    /// Boundary parameter `t in [0,4)` of a boundary node, walking the unit
    /// square anticlockwise from the origin: bottom `t=x`, right `t=1+y`,
    /// top `t=2+(1-x)`, left `t=3+(1-y)`.
    pub fn boundary_parameter(&self, i: usize, j: usize) -> Option<T> {
        if self.dim != 2 {
            return None;
        }
        let m = self.n + 1;
        let one = T::one();
        let (x, y) = (self.axis_coord(i), self.axis_coord(j));
        if j == 0 {
            Some(x)
        } else if i == m {
            Some(one + y)
        } else if j == m {
            Some(T::lit(2.0) + (one - x))
        } else if i == 0 {
            Some(T::lit(3.0) + (one - y))
        } else {
            None
        }
    }

    /// Grid obtained by coarsening by two, if `n + 1` is even.
    pub fn coarsen(&self) -> Option<Self> {
        if (self.n + 1) % 2 != 0 || self.n < 3 {
            return None;
        }
        Self::new(self.dim, (self.n + 1) / 2 - 1).ok()
    }
}

/// Nodal values tied to a grid, either interior-only or with the boundary ring.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    pub grid: StructuredGrid<T>,
    pub values: Vec<T>,
    pub includes_boundary: bool,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: StructuredGrid<T>, values: Vec<T>, includes_boundary: bool) -> Result<Self> {
        let want = if includes_boundary { grid.num_padded() } else { grid.num_interior() };
        if values.len() != want {
            return Err(Error::Dimension(format!(
                "grid function has {} values, grid expects {want}",
                values.len()
            )));
        }
        Ok(Self { grid, values, includes_boundary })
    }

    pub fn zeros(grid: StructuredGrid<T>, includes_boundary: bool) -> Self {
        let len = if includes_boundary { grid.num_padded() } else { grid.num_interior() };
        Self { grid, values: vec![T::zero(); len], includes_boundary }
    }
}
