//! Sequential ground truth: global gathers, direct global assembly, entry
//! comparison and reference solves.

use crate::assembly::StructuredGrid;
use crate::error::{Error, Result};
use crate::matrix::CooMatrix;
use crate::repart::RepartitionedSystem;

/// Largest grid the reference assembly accepts.
pub const ASSEMBLY_GUARD: usize = 1_000_000;
/// Largest system the reference solver accepts.
pub const SOLVE_GUARD: usize = 100_000;

/// Gather all GPU parts into one global COO on group rank 0 of the active
/// group. Collective over the active group; other members get `None`.
pub fn gather_global(system: &RepartitionedSystem) -> Result<Option<CooMatrix>> {
    let group = system.comm();
    let triplets = system.matrix().global_triplets();
    let rows: Vec<usize> = triplets.iter().map(|t| t.0).collect();
    let cols: Vec<usize> = triplets.iter().map(|t| t.1).collect();
    let vals: Vec<f64> = triplets.iter().map(|t| t.2).collect();
    let Some(parts) = group.gather(0, (rows, (cols, vals)))? else {
        return Ok(None);
    };
    let n = system.partition().total_cells();
    let all = parts
        .into_iter()
        .flat_map(|(r, (c, v))| {
            r.into_iter()
                .zip(c)
                .zip(v)
                .map(|((r, c), v)| (r, c, v))
                .collect::<Vec<_>>()
        })
        .collect();
    CooMatrix::from_triplets(n, n, all).map(Some)
}

/// Gather a distributed vector (one slice per GPU part) on group rank 0.
pub fn gather_vector(system: &RepartitionedSystem, x: &[f64]) -> Result<Option<Vec<f64>>> {
    let parts = system.comm().gather(0, x.to_vec())?;
    Ok(parts.map(|p| p.concat()))
}

/// Unit 7-point Laplacian of the whole grid, assembled directly.
pub fn reference_global_assemble(grid: &StructuredGrid) -> Result<CooMatrix> {
    let n = grid.total_cells();
    if n > ASSEMBLY_GUARD {
        return Err(Error::SizeGuard {
            size: n,
            limit: ASSEMBLY_GUARD,
        });
    }
    let d = grid.dims();
    let axes = grid.active_axes();
    let diag = 2.0 * axes.len() as f64;
    let mut triplets = Vec::with_capacity(n * (1 + 2 * axes.len()));
    for id in 0..n {
        let ijk = grid.cell_coords(id);
        triplets.push((id, id, diag));
        for &a in &axes {
            if ijk[a] > 0 {
                let mut nb = ijk;
                nb[a] -= 1;
                triplets.push((id, grid.cell_id(nb), -1.0));
            }
            if ijk[a] + 1 < d[a] {
                let mut nb = ijk;
                nb[a] += 1;
                triplets.push((id, grid.cell_id(nb), -1.0));
            }
        }
    }
    CooMatrix::from_triplets(n, n, triplets)
}

/// Reference matrix with the diagonal scaled by `factor`.
pub fn scale_diagonal(a: &CooMatrix, factor: f64) -> CooMatrix {
    let mut out = a.clone();
    let rows = a.rows().to_vec();
    let cols = a.cols().to_vec();
    for (k, v) in out.vals_mut().iter_mut().enumerate() {
        if rows[k] == cols[k] {
            *v *= factor;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub row: usize,
    pub col: usize,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareReport {
    pub pattern_equal: bool,
    pub shape_equal: bool,
    pub mismatch_count: usize,
    /// First ten mismatches in row-major order.
    pub mismatches: Vec<Mismatch>,
}

impl CompareReport {
    pub fn is_empty(&self) -> bool {
        self.pattern_equal && self.shape_equal && self.mismatch_count == 0
    }
}

const REPORTED_MISMATCHES: usize = 10;

/// Compare two canonical matrices: exact pattern, values within
/// `tol * max(1, |a|)`.
pub fn compare_matrices(a: &CooMatrix, b: &CooMatrix, tol: f64) -> CompareReport {
    let mut report = CompareReport {
        pattern_equal: true,
        shape_equal: a.n_rows() == b.n_rows() && a.n_cols() == b.n_cols(),
        ..Default::default()
    };
    let push = |report: &mut CompareReport, m: Mismatch| {
        report.mismatch_count += 1;
        if report.mismatches.len() < REPORTED_MISMATCHES {
            report.mismatches.push(m);
        }
    };
    let (mut i, mut j) = (0, 0);
    while i < a.nnz() || j < b.nnz() {
        let ka = (i < a.nnz()).then(|| (a.rows()[i], a.cols()[i]));
        let kb = (j < b.nnz()).then(|| (b.rows()[j], b.cols()[j]));
        match (ka, kb) {
            (Some(x), Some(y)) if x == y => {
                let (va, vb) = (a.vals()[i], b.vals()[j]);
                if !((va - vb).abs() <= tol * va.abs().max(1.0)) {
                    push(
                        &mut report,
                        Mismatch {
                            row: x.0,
                            col: x.1,
                            left: Some(va),
                            right: Some(vb),
                        },
                    );
                }
                i += 1;
                j += 1;
            }
            (Some(x), y) if y.is_none_or(|y| x < y) => {
                report.pattern_equal = false;
                push(
                    &mut report,
                    Mismatch {
                        row: x.0,
                        col: x.1,
                        left: Some(a.vals()[i]),
                        right: None,
                    },
                );
                i += 1;
            }
            (_, Some(y)) => {
                report.pattern_equal = false;
                push(
                    &mut report,
                    Mismatch {
                        row: y.0,
                        col: y.1,
                        left: None,
                        right: Some(b.vals()[j]),
                    },
                );
                j += 1;
            }
            (_, None) => unreachable!("loop condition"),
        }
    }
    report
}

fn tridiagonal_bands(a: &CooMatrix) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = a.n_rows();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for (r, c, v) in a.triplets() {
        match c as isize - r as isize {
            -1 => lower[r] = v,
            0 => diag[r] = v,
            1 => upper[r] = v,
            _ => return None,
        }
    }
    Some((lower, diag, upper))
}

/// Thomas elimination for a tridiagonal system.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
        if denom == 0.0 {
            return Err(Error::Consistency(format!("zero pivot in row {i}")));
        }
        c[i] = upper[i] / denom;
        d[i] = (b[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sequential reference solve of an SPD system: exact elimination for
/// tridiagonal matrices, conjugate gradient to `tol` otherwise.
pub fn reference_solve(a: &CooMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if n > SOLVE_GUARD {
        return Err(Error::SizeGuard {
            size: n,
            limit: SOLVE_GUARD,
        });
    }
    if b.len() != n || a.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some((l, d, u)) = tridiagonal_bands(a) {
        return solve_tridiagonal(&l, &d, &u, b);
    }
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let max_iter = 10 * n + 100;
    for it in 1..=max_iter {
        let q = a.matvec(&p)?;
        let step = rr / p.iter().zip(&q).map(|(x, y)| x * y).sum::<f64>();
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * q[i];
        }
        if it % 50 == 0 {
            let ax = a.matvec(&x)?;
            r = b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect();
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() / b_norm <= tol {
            let ax = a.matvec(&x)?;
            let t: Vec<f64> = b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect();
            if norm(&t) / b_norm <= tol {
                return Ok(x);
            }
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let ax = a.matvec(&x)?;
    let t: Vec<f64> = b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect();
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: norm(&t) / b_norm,
    })
}
