//! P1 assembly on uniform grids.
//!
//! In 2-d each square cell `[i,i+1] x [j,j+1]` is split along the diagonal
//! from `(i,j)` to `(i+1,j+1)`. With that right-angled triangulation the
//! hypotenuse couplings vanish and the constant-coefficient stencil is the
//! five-point Laplacian, independent of `h`.

use crate::error::{Error, Result};
use crate::fem::grid::{GridFunction, StructuredGrid};
use crate::linalg::CsrMatrix;
use crate::scalar::Scalar;

/// Triangle vertex offsets (in cell units) for the two triangles of a cell.
const TRIANGLES: [[(usize, usize); 3]; 2] = [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]];

/// `(grad phi_a . grad phi_b) * area` on a unit-leg right triangle; the
/// 2-d stiffness is scale-free so this is also the physical element matrix.
fn unit_element_stiffness<T: Scalar>(tri: &[(usize, usize); 3]) -> [[T; 3]; 3] {
    let p: Vec<(f64, f64)> = tri.iter().map(|&(a, b)| (a as f64, b as f64)).collect();
    let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    let grads = [
        ((p[1].1 - p[2].1) / det, (p[2].0 - p[1].0) / det),
        ((p[2].1 - p[0].1) / det, (p[0].0 - p[2].0) / det),
        ((p[0].1 - p[1].1) / det, (p[1].0 - p[0].0) / det),
    ];
    let area = 0.5 * det.abs();
    let mut k = [[T::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = T::lit(area * (grads[a].0 * grads[b].0 + grads[a].1 * grads[b].1));
        }
    }
    k
}

/// Padded axis indices of each triangle, visited cell by cell.
fn for_each_triangle<T: Scalar>(grid: &StructuredGrid<T>, mut f: impl FnMut(usize, [(usize, usize); 3])) {
    let cells = grid.n() + 1;
    for cj in 0..cells {
        for ci in 0..cells {
            for (t, tri) in TRIANGLES.iter().enumerate() {
                f(t, tri.map(|(a, b)| (ci + a, cj + b)));
            }
        }
    }
}

fn centroid<T: Scalar>(grid: &StructuredGrid<T>, verts: &[(usize, usize); 3]) -> Vec<T> {
    let three = T::lit(3.0);
    let x = verts.iter().map(|&(i, _)| grid.axis_coord(i)).sum::<T>() / three;
    let y = verts.iter().map(|&(_, j)| grid.axis_coord(j)).sum::<T>() / three;
    vec![x, y]
}

fn checked_coefficient<T: Scalar>(k: &impl Fn(&[T]) -> T, x: &[T]) -> Result<T> {
    let v = k(x);
    if !v.is_finite() || v <= T::zero() {
        return Err(Error::InvalidCoefficient {
            location: x.iter().map(|c| c.to_f64_lossy()).collect(),
            value: v.to_f64_lossy(),
        });
    }
    Ok(v)
}

fn checked_source<T: Scalar>(f: &impl Fn(&[T]) -> T, x: &[T], node: usize) -> Result<T> {
    let v = f(x);
    if !v.is_finite() {
        return Err(Error::NonFinite { node, value: v.to_f64_lossy() });
    }
    Ok(v)
}

fn require_dim<T: Scalar>(grid: &StructuredGrid<T>, dim: usize) -> Result<()> {
    if grid.dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "expected a {dim}-d grid, got {}-d",
            grid.dim()
        )));
    }
    Ok(())
}

/// 1-d stiffness `A[i,j] = int k phi_i' phi_j'` with `k` taken at element midpoints.
pub fn assemble_stiffness_1d<T: Scalar>(grid: &StructuredGrid<T>, k: impl Fn(&[T]) -> T) -> Result<CsrMatrix<T>> {
    require_dim(grid, 1)?;
    let n = grid.n();
    let inv_h = T::from_count(n + 1);
    let half = T::lit(0.5);
    let mut trip = Vec::with_capacity(3 * n);
    for e in 0..=n {
        let mid = (grid.axis_coord(e) + grid.axis_coord(e + 1)) * half;
        let ke = checked_coefficient(&k, &[mid])? * inv_h;
        let nodes = [e, e + 1];
        for (a, &pa) in nodes.iter().enumerate() {
            let Some(ia) = grid.interior_index(pa, 0) else { continue };
            for (b, &pb) in nodes.iter().enumerate() {
                let Some(ib) = grid.interior_index(pb, 0) else { continue };
                trip.push((ia, ib, if a == b { ke } else { -ke }));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// 2-d stiffness on the right-angled triangulation, `k` taken at triangle centroids.
pub fn assemble_stiffness_2d<T: Scalar>(grid: &StructuredGrid<T>, k: impl Fn(&[T]) -> T) -> Result<CsrMatrix<T>> {
    require_dim(grid, 2)?;
    let locals = [unit_element_stiffness::<T>(&TRIANGLES[0]), unit_element_stiffness::<T>(&TRIANGLES[1])];
    let nu = grid.num_interior();
    let mut trip = Vec::with_capacity(7 * nu);
    let mut err = None;
    for_each_triangle(grid, |t, verts| {
        if err.is_some() {
            return;
        }
        let kc = match checked_coefficient(&k, &centroid(grid, &verts)) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        for a in 0..3 {
            let Some(ia) = grid.interior_index(verts[a].0, verts[a].1) else { continue };
            for b in 0..3 {
                let Some(ib) = grid.interior_index(verts[b].0, verts[b].1) else { continue };
                trip.push((ia, ib, kc * locals[t][a][b]));
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    CsrMatrix::from_triplets(nu, nu, &trip)
}

/// Dispatches on the grid dimension.
pub fn assemble_stiffness<T: Scalar>(grid: &StructuredGrid<T>, k: impl Fn(&[T]) -> T) -> Result<CsrMatrix<T>> {
    match grid.dim() {
        1 => assemble_stiffness_1d(grid, k),
        _ => assemble_stiffness_2d(grid, k),
    }
}

/// Load vector `b_i = int f phi_i` over every node of the padded grid.
/// Entries at boundary nodes integrate over the clipped hat.
fn load_padded<T: Scalar>(grid: &StructuredGrid<T>, f: &impl Fn(&[T]) -> T) -> Result<Vec<T>> {
    let mut b = vec![T::zero(); grid.num_padded()];
    let h = grid.h();
    if grid.dim() == 1 {
        let g = T::lit(0.5 / 3f64.sqrt());
        let half = T::lit(0.5);
        for e in 0..=grid.n() {
            let (x0, x1) = (grid.axis_coord(e), grid.axis_coord(e + 1));
            let mid = (x0 + x1) * half;
            for s in [half - g, half + g] {
                let x = mid + (s - half) * h;
                let fv = checked_source(f, &[x], e)?;
                let w = half * h * fv;
                b[e] += w * (T::one() - s);
                b[e + 1] += w * s;
            }
        }
        return Ok(b);
    }
    let two3 = T::lit(2.0 / 3.0);
    let sixth = T::lit(1.0 / 6.0);
    let bary = [[two3, sixth, sixth], [sixth, two3, sixth], [sixth, sixth, two3]];
    let w = h * h * T::lit(0.5) / T::lit(3.0);
    let mut err = None;
    for_each_triangle(grid, |_, verts| {
        if err.is_some() {
            return;
        }
        let pts: Vec<Vec<T>> = verts.iter().map(|&(i, j)| grid.coords(i, j)).collect();
        for lam in &bary {
            let x = lam[0] * pts[0][0] + lam[1] * pts[1][0] + lam[2] * pts[2][0];
            let y = lam[0] * pts[0][1] + lam[1] * pts[1][1] + lam[2] * pts[2][1];
            let node = grid.padded_index(verts[0].0, verts[0].1);
            let fv = match checked_source(f, &[x, y], node) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            };
            for a in 0..3 {
                b[grid.padded_index(verts[a].0, verts[a].1)] += w * fv * lam[a];
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(b),
    }
}

/// Load vector over interior nodes: 2-point Gauss per element in 1-d,
/// 3-point interior rule per triangle in 2-d.
pub fn assemble_load<T: Scalar>(grid: &StructuredGrid<T>, f: impl Fn(&[T]) -> T) -> Result<GridFunction<T>> {
    let padded = load_padded(grid, &f)?;
    let values = (0..grid.num_interior())
        .map(|k| {
            let (i, j) = grid.interior_to_padded(k);
            padded[grid.padded_index(i, j)]
        })
        .collect();
    GridFunction::new(*grid, values, false)
}

/// `int phi_i` for every padded node, counting only triangles (or elements)
/// inside the domain.
pub fn hat_integrals<T: Scalar>(grid: &StructuredGrid<T>) -> Vec<T> {
    let h = grid.h();
    if grid.dim() == 1 {
        let np = grid.num_padded();
        return (0..np)
            .map(|p| if p == 0 || p == np - 1 { h * T::lit(0.5) } else { h })
            .collect();
    }
    let mut count = vec![0usize; grid.num_padded()];
    for_each_triangle(grid, |_, verts| {
        for &(i, j) in &verts {
            count[grid.padded_index(i, j)] += 1;
        }
    });
    let unit = h * h / T::lit(6.0);
    count.into_iter().map(|c| unit * T::from_count(c)).collect()
}

/// Augmented 2-d system over all padded nodes for Dirichlet data `g`.
///
/// Boundary rows are identity rows with right-hand side `g(t)` at the node's
/// boundary parameter; interior rows carry the full stencil including the
/// couplings to boundary unknowns.
pub fn assemble_augmented_2d<T: Scalar>(
    grid: &StructuredGrid<T>,
    k: impl Fn(&[T]) -> T,
    f: impl Fn(&[T]) -> T,
    g: impl Fn(T) -> T,
) -> Result<(CsrMatrix<T>, GridFunction<T>)> {
    require_dim(grid, 2)?;
    let locals = [unit_element_stiffness::<T>(&TRIANGLES[0]), unit_element_stiffness::<T>(&TRIANGLES[1])];
    let np = grid.num_padded();
    let boundary: Vec<bool> = (0..np).map(|p| grid.is_boundary_padded(p)).collect();
    let mut trip = Vec::with_capacity(7 * np);
    let mut err = None;
    for_each_triangle(grid, |t, verts| {
        if err.is_some() {
            return;
        }
        let kc = match checked_coefficient(&k, &centroid(grid, &verts)) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        for a in 0..3 {
            let pa = grid.padded_index(verts[a].0, verts[a].1);
            if boundary[pa] {
                continue;
            }
            for b in 0..3 {
                let pb = grid.padded_index(verts[b].0, verts[b].1);
                trip.push((pa, pb, kc * locals[t][a][b]));
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut rhs = load_padded(grid, &f)?;
    for p in 0..np {
        if boundary[p] {
            trip.push((p, p, T::one()));
            let (i, j) = grid.padded_to_axes(p);
            let t = grid.boundary_parameter(i, j).expect("boundary node");
            let gv = g(t);
            if !gv.is_finite() {
                return Err(Error::NonFinite { node: p, value: gv.to_f64_lossy() });
            }
            rhs[p] = gv;
        }
    }
    let a = CsrMatrix::from_triplets(np, np, &trip)?;
    Ok((a, GridFunction::new(*grid, rhs, true)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(_: &[f64]) -> f64 {
        1.0
    }

    #[test]
    fn stiffness_1d_n3() {
        let g = StructuredGrid::new_1d(3).unwrap();
        let a = assemble_stiffness_1d(&g, one).unwrap().to_dense();
        let want = [[8.0, -4.0, 0.0], [-4.0, 8.0, -4.0], [0.0, -4.0, 8.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[(i, j)], want[i][j]);
            }
        }
        assert_eq!(assemble_stiffness_1d(&g, one).unwrap().spmv(&[1.0; 3]).unwrap(), vec![4.0, 0.0, 4.0]);
    }

    #[test]
    fn stiffness_scales_with_constant_k() {
        let g1 = StructuredGrid::new_1d(5).unwrap();
        let a1 = assemble_stiffness_1d(&g1, one).unwrap();
        let a2 = assemble_stiffness_1d(&g1, |_: &[f64]| 2.0).unwrap();
        assert_eq!(a1.scaled(2.0), a2);
        let g2 = StructuredGrid::new_2d(4).unwrap();
        let b1 = assemble_stiffness_2d(&g2, one).unwrap();
        let b3 = assemble_stiffness_2d(&g2, |_: &[f64]| 3.0).unwrap();
        assert_eq!(b1.scaled(3.0), b3);
    }

    #[test]
    fn five_point_stencil_2d() {
        let g = StructuredGrid::new_2d(5).unwrap();
        let a = assemble_stiffness_2d(&g, one).unwrap();
        let centre = g.interior_index(3, 3).unwrap();
        let (cols, vals) = a.row(centre);
        assert_eq!(cols.len(), 5);
        let mut v = vals.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(v, vec![-1.0, -1.0, -1.0, -1.0, 4.0]);
    }

    #[test]
    fn corner_row_sum_2d() {
        let g = StructuredGrid::new_2d(3).unwrap();
        let a = assemble_stiffness_2d(&g, one).unwrap();
        let y = a.spmv(&[1.0; 9]).unwrap();
        for k in [0usize, 2, 6, 8] {
            assert_eq!(y[k], 2.0);
        }
        assert_eq!(y[4], 0.0);
    }

    #[test]
    fn rejects_non_positive_k() {
        let g = StructuredGrid::new_1d(3).unwrap();
        let r = assemble_stiffness_1d(&g, |x: &[f64]| x[0] - 0.5);
        assert!(matches!(r, Err(Error::InvalidCoefficient { .. })));
        let g2 = StructuredGrid::new_2d(3).unwrap();
        assert!(assemble_stiffness_2d(&g2, |_: &[f64]| f64::NAN).is_err());
    }

    #[test]
    fn load_of_constant_source() {
        let g = StructuredGrid::new_1d(7).unwrap();
        let b = assemble_load(&g, one).unwrap();
        for v in &b.values {
            assert!((v - 0.125).abs() < 1e-15);
        }
        let g2 = StructuredGrid::new_2d(7).unwrap();
        let b2 = assemble_load(&g2, one).unwrap();
        for v in &b2.values {
            assert!((v - 1.0 / 64.0).abs() < 1e-15);
        }
        let z = assemble_load(&g2, |_: &[f64]| 0.0).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_rejects_non_finite() {
        let g = StructuredGrid::new_1d(3).unwrap();
        assert!(assemble_load(&g, |_: &[f64]| f64::INFINITY).is_err());
    }

    #[test]
    fn hat_integrals_2d_boundary_clipping() {
        let g = StructuredGrid::<f64>::new_2d(3).unwrap();
        let w = hat_integrals(&g);
        let h2 = 1.0 / 16.0;
        assert!((w[g.padded_index(2, 2)] - h2).abs() < 1e-16);
        // corners on the cut diagonal touch two triangles, the others one
        assert!((w[g.padded_index(0, 0)] - h2 / 3.0).abs() < 1e-16);
        assert!((w[g.padded_index(4, 0)] - h2 / 6.0).abs() < 1e-16);
        assert!((w[g.padded_index(2, 0)] - h2 / 2.0).abs() < 1e-16);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn augmented_boundary_rows_are_identity() {
        let g = StructuredGrid::new_2d(3).unwrap();
        let (a, rhs) = assemble_augmented_2d(&g, one, |_: &[f64]| 0.0, |t: f64| t).unwrap();
        for p in 0..g.num_padded() {
            if g.is_boundary_padded(p) {
                let (cols, vals) = a.row(p);
                assert_eq!(cols, &[p]);
                assert_eq!(vals, &[1.0]);
                let (i, j) = g.padded_to_axes(p);
                assert_eq!(rhs.values[p], g.boundary_parameter(i, j).unwrap());
            }
        }
    }

    #[test]
    fn augmented_constant_is_discrete_solution() {
        let g = StructuredGrid::new_2d(5).unwrap();
        let k = |x: &[f64]| 1.0 + x[0] * x[1];
        let (a, rhs) = assemble_augmented_2d(&g, k, |_: &[f64]| 0.0, |_: f64| 1.0).unwrap();
        let r = a.residual(&rhs.values, &vec![1.0; g.num_padded()]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }
}
