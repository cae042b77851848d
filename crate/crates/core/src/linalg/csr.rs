//! Compressed sparse row storage.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing inside each row and every stored
/// value is finite. Products are accumulated left to right along each row so
/// results are bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 {
            return Err(Error::Dimension(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                nrows + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[nrows] != values.len() || col_idx.len() != values.len() {
            return Err(Error::InvalidArgument(
                "row_ptr must start at 0 and end at nnz".into(),
            ));
        }
        for i in 0..nrows {
            let (s, e) = (row_ptr[i], row_ptr[i + 1]);
            if e < s {
                return Err(Error::InvalidArgument(format!("row_ptr decreases at row {i}")));
            }
            for k in s..e {
                if col_idx[k] >= ncols {
                    return Err(Error::InvalidArgument(format!(
                        "column {} out of range in row {i}",
                        col_idx[k]
                    )));
                }
                if k > s && col_idx[k] <= col_idx[k - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "columns not strictly increasing in row {i}"
                    )));
                }
                if !values[k].is_finite() {
                    return Err(Error::NonFinite { node: i, value: values[k].to_f64_lossy() });
                }
            }
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Assembles from `(row, col, value)` triplets. Duplicates are summed in
    /// input order; entries that sum to exactly zero are dropped unless they
    /// sit on the diagonal.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            // stable sort keeps summation order deterministic
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut acc = T::zero();
                while k < row.len() && row[k].0 == j {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != T::zero() || i == j {
                    col_idx.push(j);
                    values.push(acc);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_dense(m: &DenseMatrix<T>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != T::zero() {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip).expect("dense entries are finite")
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    /// Diagonal entries; missing entries read as zero.
    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = vec![T::zero(); self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[T], y: &mut [T]) -> Result<()> {
        if x.len() != self.ncols || y.len() != self.nrows {
            return Err(Error::Dimension(format!(
                "spmv: matrix is {}x{}, x has {}, y has {}",
                self.nrows,
                self.ncols,
                x.len(),
                y.len()
            )));
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (&j, &a) in cols.iter().zip(vals) {
                acc += a * x[j];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `r = b - A x`, written into `r`.
    pub fn residual_into(&self, b: &[T], x: &[T], r: &mut [T]) -> Result<()> {
        if b.len() != self.nrows || r.len() != self.nrows {
            return Err(Error::Dimension(format!(
                "residual: matrix has {} rows, b has {}, r has {}",
                self.nrows,
                b.len(),
                r.len()
            )));
        }
        self.spmv_into(x, r)?;
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        Ok(())
    }

    pub fn residual(&self, b: &[T], x: &[T]) -> Result<Vec<T>> {
        let mut r = vec![T::zero(); self.nrows];
        self.residual_into(b, x, &mut r)?;
        Ok(r)
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose of valid matrix")
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && *self == self.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spmv() {
        let a = CsrMatrix::<f64>::identity(3);
        assert_eq!(a.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let a = CsrMatrix::<f64>::identity(3);
        assert!(matches!(a.spmv(&[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, -1.0), (1, 1, 0.0), (0, 0, 0.5)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 2.5);
        assert_eq!(a.get(0, 1), 0.0);
        // zero diagonal entries are kept as structure
        assert_eq!(a.row(1).0, &[1]);
    }

    #[test]
    fn rejects_unsorted_columns() {
        let r = CsrMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let r = CsrMatrix::new(1, 1, vec![0, 1], vec![0], vec![f64::NAN]);
        assert!(r.is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (1, 0, -2.0), (1, 1, 3.0)]).unwrap();
        let t = a.transpose();
        assert_eq!(t.nrows(), 3);
        assert_eq!(t.get(2, 0), 1.0);
        assert_eq!(t.transpose(), a);
    }

    #[test]
    fn works_in_single_precision() {
        let a = CsrMatrix::<f32>::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        assert_eq!(a.spmv(&[1.0, 0.5]).unwrap(), vec![2.0f32, 2.0]);
    }
}
