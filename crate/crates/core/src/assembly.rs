//! Structured-grid model problem: cube grids, slab decomposition and a
//! unit-coefficient 7-point Laplacian assembled per part into LDU storage.

use crate::error::{Error, Result};
use crate::matrix::{CooMatrix, InterfaceBlock, LduMatrix};

/// Cells per axis for the cavity family of grids.
const CAVITY_BASE: usize = 2 * 3 * 5 * 7;

/// Uniform grid of `nx * ny * nz` unit cells.
///
/// Cells are numbered with the slab-cut axis (the longest one, ties going to
/// the later axis) varying slowest, so every slab is a contiguous id range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        for (n, what) in [(nx, "nx"), (ny, "ny"), (nz, "nz")] {
            if n == 0 {
                return Err(Error::OutOfRange {
                    what,
                    value: 0,
                    limit: 1,
                });
            }
        }
        Ok(StructuredGrid { nx, ny, nz })
    }

    /// Cube with `210 * n_p` cells per axis.
    pub fn cavity(n_p: usize) -> Result<Self> {
        if n_p < 1 {
            return Err(Error::OutOfRange {
                what: "size factor n_p",
                value: n_p,
                limit: 1,
            });
        }
        let n = CAVITY_BASE * n_p;
        StructuredGrid::new(n, n, n)
    }

    pub fn total_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Axes with more than one cell; a single cell counts as 1D.
    pub fn active_axes(&self) -> Vec<usize> {
        let axes: Vec<usize> = (0..3).filter(|&a| self.dims()[a] > 1).collect();
        if axes.is_empty() {
            vec![0]
        } else {
            axes
        }
    }

    pub fn dimension(&self) -> usize {
        self.active_axes().len()
    }

    pub fn cut_axis(&self) -> usize {
        let d = self.dims();
        (0..3).rev().max_by_key(|&a| (d[a], a)).expect("three axes")
    }

    /// Axes ordered fastest to slowest varying.
    fn axis_order(&self) -> [usize; 3] {
        let cut = self.cut_axis();
        let mut rest = (0..3).filter(|&a| a != cut);
        let fast = rest.next().expect("axis");
        let mid = rest.next().expect("axis");
        [fast, mid, cut]
    }

    /// Cells in one layer orthogonal to the cut axis.
    pub fn layer_size(&self) -> usize {
        self.total_cells() / self.dims()[self.cut_axis()]
    }

    pub fn cell_id(&self, ijk: [usize; 3]) -> usize {
        let d = self.dims();
        let [f, m, s] = self.axis_order();
        ijk[f] + d[f] * (ijk[m] + d[m] * ijk[s])
    }

    pub fn cell_coords(&self, id: usize) -> [usize; 3] {
        let d = self.dims();
        let [f, m, s] = self.axis_order();
        let mut ijk = [0; 3];
        ijk[f] = id % d[f];
        ijk[m] = (id / d[f]) % d[m];
        ijk[s] = id / (d[f] * d[m]);
        ijk
    }

    /// Neighbour of `id` one step forward along `axis`.
    pub fn forward_neighbor(&self, id: usize, axis: usize) -> Option<usize> {
        let mut ijk = self.cell_coords(id);
        ijk[axis] += 1;
        (ijk[axis] < self.dims()[axis]).then(|| self.cell_id(ijk))
    }

    /// Number of domain-boundary faces of a cell along the active axes.
    pub fn boundary_faces(&self, id: usize) -> usize {
        let ijk = self.cell_coords(id);
        self.active_axes()
            .into_iter()
            .map(|a| usize::from(ijk[a] == 0) + usize::from(ijk[a] + 1 == self.dims()[a]))
            .sum()
    }
}

/// Build the cavity grid for size factor `n_p`.
pub fn build_grid(n_p: usize) -> Result<StructuredGrid> {
    StructuredGrid::cavity(n_p)
}

/// Interface faces of a part toward one neighbouring part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceFaces {
    pub neighbor_rank: usize,
    /// `(local cell, neighbour-local cell)`, sorted.
    pub faces: Vec<(usize, usize)>,
}

/// One CPU part of a decomposed grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubdomainMesh {
    pub cpu_rank: usize,
    pub global_cell_ids: Vec<usize>,
    /// Local `(lower, upper)` cell pairs sorted lexicographically.
    pub internal_faces: Vec<(usize, usize)>,
    pub boundary_faces: Vec<usize>,
    /// Sorted by neighbour rank.
    pub interfaces: Vec<InterfaceFaces>,
}

impl SubdomainMesh {
    pub fn n_cells(&self) -> usize {
        self.global_cell_ids.len()
    }

    pub fn first_cell(&self) -> usize {
        self.global_cell_ids[0]
    }
}

/// Cut the grid into `n_parts` slabs along its cut axis. Layer counts differ
/// by at most one, the first parts taking the extra layers.
pub fn decompose_slab(grid: &StructuredGrid, n_parts: usize) -> Result<Vec<SubdomainMesh>> {
    let cut = grid.cut_axis();
    let layers = grid.dims()[cut];
    if n_parts == 0 || n_parts > layers {
        return Err(Error::TooManyParts {
            parts: n_parts,
            layers,
        });
    }
    let layer = grid.layer_size();
    let (base, extra) = (layers / n_parts, layers % n_parts);
    let mut starts = Vec::with_capacity(n_parts + 1);
    starts.push(0);
    for p in 0..n_parts {
        starts.push(starts[p] + base + usize::from(p < extra));
    }
    let cell_start = |p: usize| starts[p] * layer;
    let owner = |id: usize| starts.partition_point(|&s| s * layer <= id) - 1;
    let axes = grid.active_axes();

    let parts = (0..n_parts)
        .map(|p| {
            let (lo, hi) = (cell_start(p), cell_start(p + 1));
            let mut internal_faces = Vec::new();
            let mut below = Vec::new();
            let mut above = Vec::new();
            for id in lo..hi {
                for &a in &axes {
                    if let Some(nb) = grid.forward_neighbor(id, a) {
                        if nb < hi {
                            internal_faces.push((id - lo, nb - lo));
                        } else {
                            debug_assert_eq!(owner(nb), p + 1);
                            above.push((id - lo, nb - hi));
                        }
                    }
                }
                if p > 0 && axes.contains(&cut) && grid.cell_coords(id)[cut] == starts[p] {
                    let mut ijk = grid.cell_coords(id);
                    ijk[cut] -= 1;
                    let nb = grid.cell_id(ijk);
                    below.push((id - lo, nb - cell_start(p - 1)));
                }
            }
            internal_faces.sort_unstable();
            below.sort_unstable();
            above.sort_unstable();
            let mut interfaces = Vec::new();
            if !below.is_empty() {
                interfaces.push(InterfaceFaces {
                    neighbor_rank: p - 1,
                    faces: below,
                });
            }
            if !above.is_empty() {
                interfaces.push(InterfaceFaces {
                    neighbor_rank: p + 1,
                    faces: above,
                });
            }
            SubdomainMesh {
                cpu_rank: p,
                global_cell_ids: (lo..hi).collect(),
                internal_faces,
                boundary_faces: (lo..hi).map(|id| grid.boundary_faces(id)).collect(),
                interfaces,
            }
        })
        .collect();
    Ok(parts)
}

/// Assemble the unit 7-point Laplacian of one part.
///
/// The diagonal counts every face of the cell (internal, interface and
/// domain boundary); every coupling is `-1`.
pub fn assemble_poisson(part: &SubdomainMesh) -> Result<(LduMatrix, Vec<InterfaceBlock>)> {
    let n = part.n_cells();
    let mut diag: Vec<f64> = part.boundary_faces.iter().map(|&b| b as f64).collect();
    for &(l, u) in &part.internal_faces {
        diag[l] += 1.0;
        diag[u] += 1.0;
    }
    for iface in &part.interfaces {
        for &(c, _) in &iface.faces {
            diag[c] += 1.0;
        }
    }
    let (lower_addr, upper_addr): (Vec<_>, Vec<_>) = part.internal_faces.iter().copied().unzip();
    let nf = lower_addr.len();
    let m = LduMatrix::new(n, lower_addr, upper_addr, diag, vec![-1.0; nf], vec![-1.0; nf])?;
    let blocks = part
        .interfaces
        .iter()
        .map(|iface| {
            let (rows, cols): (Vec<_>, Vec<_>) = iface.faces.iter().copied().unzip();
            let len = rows.len();
            InterfaceBlock::new(iface.neighbor_rank, rows, cols, vec![-1.0; len])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, blocks))
}

/// Decompose `grid` into `n_parts` slabs and assemble every part.
pub fn assemble_grid(
    grid: &StructuredGrid,
    n_parts: usize,
) -> Result<Vec<(LduMatrix, Vec<InterfaceBlock>)>> {
    decompose_slab(grid, n_parts)?
        .iter()
        .map(assemble_poisson)
        .collect()
}

/// Diagonal scale factor applied at pseudo-timestep `step`.
pub fn perturbation_factor(step: usize) -> f64 {
    1.0 + step as f64 / 100.0
}

/// Coefficients for pseudo-timestep `step`, recomputed from the pristine
/// base: the diagonal is scaled by `1 + step/100`, everything else is kept.
pub fn perturb_coefficients(
    base: &LduMatrix,
    ifaces: &[InterfaceBlock],
    step: usize,
) -> Result<(LduMatrix, Vec<InterfaceBlock>)> {
    let s = perturbation_factor(step);
    let diag = base.diag().iter().map(|d| d * s).collect();
    Ok((base.with_diag(diag)?, ifaces.to_vec()))
}

/// Split a structurally symmetric global matrix into per-rank LDU parts
/// over contiguous row blocks of the given sizes.
pub fn distribute_matrix(
    global: &CooMatrix,
    cells_per_rank: &[usize],
) -> Result<Vec<(LduMatrix, Vec<InterfaceBlock>)>> {
    let mut offsets = vec![0];
    for &c in cells_per_rank {
        offsets.push(offsets.last().expect("non-empty") + c);
    }
    let total = *offsets.last().expect("non-empty");
    if global.n_rows() != total || global.n_cols() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: global.n_rows(),
        });
    }
    let owner = |g: usize| offsets.partition_point(|&o| o <= g) - 1;
    let value = |r: usize, c: usize| global.find(r, c).map(|k| global.vals()[k]);

    (0..cells_per_rank.len())
        .map(|rank| {
            let (lo, hi) = (offsets[rank], offsets[rank + 1]);
            let diag = (lo..hi).map(|i| value(i, i).unwrap_or(0.0)).collect();
            let mut lower_addr = Vec::new();
            let mut upper_addr = Vec::new();
            let mut lower_val = Vec::new();
            let mut upper_val = Vec::new();
            let mut ifaces: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> =
                Default::default();
            for (r, c, v) in global.triplets().filter(|&(r, _, _)| (lo..hi).contains(&r)) {
                if (lo..hi).contains(&c) {
                    if r < c {
                        let mirror = value(c, r).ok_or_else(|| {
                            Error::Consistency(format!("pattern not symmetric at ({r}, {c})"))
                        })?;
                        lower_addr.push(r - lo);
                        upper_addr.push(c - lo);
                        upper_val.push(v);
                        lower_val.push(mirror);
                    } else if r > c && value(c, r).is_none() {
                        return Err(Error::Consistency(format!(
                            "pattern not symmetric at ({r}, {c})"
                        )));
                    }
                } else {
                    let q = owner(c);
                    ifaces.entry(q).or_default().push((r - lo, c - offsets[q], v));
                }
            }
            let m = LduMatrix::new(hi - lo, lower_addr, upper_addr, diag, lower_val, upper_val)?;
            let blocks = ifaces
                .into_iter()
                .map(|(q, entries)| {
                    let rows = entries.iter().map(|e| e.0).collect();
                    let cols = entries.iter().map(|e| e.1).collect();
                    let vals = entries.iter().map(|e| e.2).collect();
                    InterfaceBlock::new(q, rows, cols, vals)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((m, blocks))
        })
        .collect()
}
