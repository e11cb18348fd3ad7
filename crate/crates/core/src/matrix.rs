//! Matrix storage shared by every stage of the pipeline.
//!
//! Host matrices use face-addressed LDU storage: a diagonal per cell plus
//! one lower and one upper coefficient per face, where face `f` couples the
//! cells `lower_addr[f] < upper_addr[f]`. `upper_val[f]` sits at
//! `(lower_addr[f], upper_addr[f])` and `lower_val[f]` at the mirrored
//! position. Couplings to cells owned by other ranks live in
//! [`InterfaceBlock`]s. Device matrices are row-major COO.

use std::ops::Range;

use crate::error::{Error, Result};

/// Per-rank local matrix in face-addressed LDU storage.
#[derive(Debug, Clone, PartialEq)]
pub struct LduMatrix {
    n_cells: usize,
    lower_addr: Vec<usize>,
    upper_addr: Vec<usize>,
    diag: Vec<f64>,
    lower_val: Vec<f64>,
    upper_val: Vec<f64>,
}

impl LduMatrix {
    pub fn new(
        n_cells: usize,
        lower_addr: Vec<usize>,
        upper_addr: Vec<usize>,
        diag: Vec<f64>,
        lower_val: Vec<f64>,
        upper_val: Vec<f64>,
    ) -> Result<Self> {
        let m = LduMatrix {
            n_cells,
            lower_addr,
            upper_addr,
            diag,
            lower_val,
            upper_val,
        };
        m.validate()?;
        Ok(m)
    }

    /// Diagonal-only matrix.
    pub fn diagonal(diag: Vec<f64>) -> Self {
        LduMatrix {
            n_cells: diag.len(),
            lower_addr: Vec::new(),
            upper_addr: Vec::new(),
            diag,
            lower_val: Vec::new(),
            upper_val: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n_faces = self.lower_addr.len();
        if self.diag.len() != self.n_cells {
            return Err(Error::MalformedLdu {
                face: 0,
                reason: format!(
                    "diagonal has {} entries for {} cells",
                    self.diag.len(),
                    self.n_cells
                ),
            });
        }
        for (name, len) in [
            ("upper_addr", self.upper_addr.len()),
            ("lower_val", self.lower_val.len()),
            ("upper_val", self.upper_val.len()),
        ] {
            if len != n_faces {
                return Err(Error::MalformedLdu {
                    face: len.min(n_faces),
                    reason: format!("{name} has length {len}, lower_addr has {n_faces}"),
                });
            }
        }
        for f in 0..n_faces {
            let (l, u) = (self.lower_addr[f], self.upper_addr[f]);
            if l >= u || u >= self.n_cells {
                return Err(Error::MalformedLdu {
                    face: f,
                    reason: format!("addressing ({l}, {u}) violates lower < upper < {}", self.n_cells),
                });
            }
            if f > 0 && (self.lower_addr[f - 1], self.upper_addr[f - 1]) >= (l, u) {
                return Err(Error::MalformedLdu {
                    face: f,
                    reason: "faces not strictly sorted by (lower, upper)".into(),
                });
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_faces(&self) -> usize {
        self.lower_addr.len()
    }

    pub fn lower_addr(&self) -> &[usize] {
        &self.lower_addr
    }

    pub fn upper_addr(&self) -> &[usize] {
        &self.upper_addr
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn lower_val(&self) -> &[f64] {
        &self.lower_val
    }

    pub fn upper_val(&self) -> &[f64] {
        &self.upper_val
    }

    /// Replace the diagonal, keeping the addressing.
    pub fn with_diag(&self, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != self.n_cells {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells,
                got: diag.len(),
            });
        }
        Ok(LduMatrix {
            diag,
            ..self.clone()
        })
    }

    /// Row-major COO image of the matrix.
    ///
    /// The result holds exactly `n_cells + 2 * n_faces` entries.
    pub fn to_coo(&self) -> CooMatrix {
        let n = self.n_cells;
        // row counts: one diagonal plus one entry per incident face
        let mut row_ptr = vec![1usize; n + 1];
        for f in 0..self.n_faces() {
            row_ptr[self.lower_addr[f]] += 1;
            row_ptr[self.upper_addr[f]] += 1;
        }
        let mut acc = 0;
        for p in row_ptr.iter_mut() {
            let c = *p;
            *p = acc;
            acc += c;
        }
        let nnz = acc - 1;
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0f64; nnz];
        let mut fill = row_ptr.clone();
        let mut put = |r: usize, c: usize, v: f64| {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        };
        // Faces are sorted by (lower, upper). Row i receives, in column order:
        // lower-triangle entries (i, l) for faces with upper == i (sorted by l
        // because the face list is lower-major), the diagonal, then upper
        // entries (i, u) for faces with lower == i (sorted by u).
        let mut by_upper: Vec<usize> = (0..self.n_faces()).collect();
        by_upper.sort_by_key(|&f| (self.upper_addr[f], self.lower_addr[f]));
        let mut lower_iter = by_upper.into_iter().peekable();
        let mut upper_face = 0;
        for i in 0..n {
            while let Some(&f) = lower_iter.peek() {
                if self.upper_addr[f] != i {
                    break;
                }
                put(i, self.lower_addr[f], self.lower_val[f]);
                lower_iter.next();
            }
            put(i, i, self.diag[i]);
            while upper_face < self.n_faces() && self.lower_addr[upper_face] == i {
                put(i, self.upper_addr[upper_face], self.upper_val[upper_face]);
                upper_face += 1;
            }
        }
        let mut rows = Vec::with_capacity(nnz);
        for i in 0..n {
            rows.extend(std::iter::repeat_n(i, row_ptr[i + 1] - row_ptr[i]));
        }
        CooMatrix {
            n_rows: n,
            n_cols: n,
            rows,
            cols,
            vals,
        }
    }
}

/// Convert an LDU matrix to canonical row-major COO.
pub fn ldu_to_coo(m: &LduMatrix) -> CooMatrix {
    m.to_coo()
}

/// Non-local coupling coefficients from one rank toward one neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceBlock {
    neighbor_rank: usize,
    rows: Vec<usize>,
    cols_remote: Vec<usize>,
    values: Vec<f64>,
}

impl InterfaceBlock {
    pub fn new(
        neighbor_rank: usize,
        rows: Vec<usize>,
        cols_remote: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedInterface {
            neighbor: neighbor_rank,
            reason,
        };
        if rows.len() != cols_remote.len() || rows.len() != values.len() {
            return Err(malformed(format!(
                "array lengths differ ({}, {}, {})",
                rows.len(),
                cols_remote.len(),
                values.len()
            )));
        }
        for i in 1..rows.len() {
            if (rows[i - 1], cols_remote[i - 1]) >= (rows[i], cols_remote[i]) {
                return Err(malformed(format!("entry {i} not strictly sorted by (row, col)")));
            }
        }
        Ok(InterfaceBlock {
            neighbor_rank,
            rows,
            cols_remote,
            values,
        })
    }

    pub fn neighbor_rank(&self) -> usize {
        self.neighbor_rank
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols_remote(&self) -> &[usize] {
        &self.cols_remote
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(InterfaceBlock {
            values,
            ..self.clone()
        })
    }
}

/// Check the interface blocks owned by `owner` against its local cell count:
/// no self-coupling, unique neighbours, row indices in range.
pub fn validate_interfaces(owner: usize, n_cells: usize, ifaces: &[InterfaceBlock]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for b in ifaces {
        if b.neighbor_rank == owner {
            return Err(Error::MalformedInterface {
                neighbor: owner,
                reason: "interface toward the owning rank".into(),
            });
        }
        if !seen.insert(b.neighbor_rank) {
            return Err(Error::MalformedInterface {
                neighbor: b.neighbor_rank,
                reason: "duplicate interface block".into(),
            });
        }
        if let Some(&r) = b.rows.iter().find(|&&r| r >= n_cells) {
            return Err(Error::MalformedInterface {
                neighbor: b.neighbor_rank,
                reason: format!("row {r} out of range for {n_cells} cells"),
            });
        }
    }
    Ok(())
}

/// Interface blocks ordered by ascending neighbour rank.
pub fn sorted_interfaces(ifaces: &[InterfaceBlock]) -> Vec<&InterfaceBlock> {
    let mut v: Vec<_> = ifaces.iter().collect();
    v.sort_by_key(|b| b.neighbor_rank);
    v
}

/// Coordinate-format sparse matrix in canonical row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CooMatrix {
    /// Build from arrays that must already be canonical.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        rows: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    ) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(Error::MalformedCoo(format!(
                "array lengths differ ({}, {}, {})",
                rows.len(),
                cols.len(),
                vals.len()
            )));
        }
        for k in 0..rows.len() {
            if rows[k] >= n_rows || cols[k] >= n_cols {
                return Err(Error::MalformedCoo(format!(
                    "entry {k} at ({}, {}) outside {n_rows}x{n_cols}",
                    rows[k], cols[k]
                )));
            }
            if k > 0 && (rows[k - 1], cols[k - 1]) >= (rows[k], cols[k]) {
                return Err(Error::MalformedCoo(format!(
                    "entry {k} at ({}, {}) breaks row-major order or duplicates its predecessor",
                    rows[k], cols[k]
                )));
            }
        }
        Ok(CooMatrix {
            n_rows,
            n_cols,
            rows,
            cols,
            vals,
        })
    }

    /// Build from unordered triplets; duplicates are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = triplets.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::OverlappingOwnership {
                row: w[0].0,
                col: w[0].1,
            });
        }
        let (rows, (cols, vals)) = triplets.into_iter().map(|(r, c, v)| (r, (c, v))).unzip();
        CooMatrix::new(n_rows, n_cols, rows, cols, vals)
    }

    /// Pattern-only matrix with all values zero.
    pub fn from_pattern(n_rows: usize, n_cols: usize, pattern: &[(usize, usize)]) -> Result<Self> {
        let (rows, cols): (Vec<_>, Vec<_>) = pattern.iter().copied().unzip();
        let vals = vec![0.0; rows.len()];
        CooMatrix::new(n_rows, n_cols, rows, cols, vals)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    /// Values are the only mutable part of a COO matrix.
    pub fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nnz()).map(|k| (self.rows[k], self.cols[k], self.vals[k]))
    }

    /// Position of `(row, col)` in the value array.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.rows.partition_point(|&r| r < row);
        let hi = self.rows.partition_point(|&r| r <= row);
        self.cols[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    /// Sequential `y = A x`, accumulating in stored order.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        for k in 0..self.nnz() {
            y[self.rows[k]] += self.vals[k] * x[self.cols[k]];
        }
        Ok(y)
    }
}

/// CPU and GPU part index ranges for a blockwise repartitioning.
///
/// GPU part `k` owns the rows of CPU parts `alpha*k .. alpha*k + alpha`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionMap {
    n_cpu: usize,
    alpha: usize,
    n_gpu: usize,
    offsets: Vec<usize>,
}

impl PartitionMap {
    pub fn new(cells_per_cpu_rank: &[usize], alpha: usize) -> Result<Self> {
        let n_cpu = cells_per_cpu_rank.len();
        if alpha == 0 || n_cpu == 0 || !n_cpu.is_multiple_of(alpha) {
            return Err(Error::InvalidRatio { n_cpu, alpha });
        }
        if let Some(rank) = cells_per_cpu_rank.iter().position(|&c| c == 0) {
            return Err(Error::EmptyPart { rank });
        }
        let mut offsets = Vec::with_capacity(n_cpu + 1);
        offsets.push(0);
        let mut acc = 0;
        for &c in cells_per_cpu_rank {
            acc += c;
            offsets.push(acc);
        }
        Ok(PartitionMap {
            n_cpu,
            alpha,
            n_gpu: n_cpu / alpha,
            offsets,
        })
    }

    pub fn n_cpu(&self) -> usize {
        self.n_cpu
    }

    pub fn n_gpu(&self) -> usize {
        self.n_gpu
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_cells(&self) -> usize {
        self.offsets[self.n_cpu]
    }

    pub fn cpu_cells(&self, cpu_rank: usize) -> usize {
        self.offsets[cpu_rank + 1] - self.offsets[cpu_rank]
    }

    /// `I_CPU(r)`: global rows assembled by CPU rank `r`.
    pub fn cpu_range(&self, cpu_rank: usize) -> Range<usize> {
        self.offsets[cpu_rank]..self.offsets[cpu_rank + 1]
    }

    /// `I_GPU(k)`: global rows owned by GPU part `k`.
    pub fn gpu_range(&self, gpu_rank: usize) -> Range<usize> {
        self.offsets[self.alpha * gpu_rank]..self.offsets[self.alpha * gpu_rank + self.alpha]
    }

    /// CPU ranks whose rows GPU part `k` owns.
    pub fn gpu_sources(&self, gpu_rank: usize) -> Range<usize> {
        self.alpha * gpu_rank..self.alpha * (gpu_rank + 1)
    }

    pub fn gpu_owner(&self, cpu_rank: usize) -> Result<usize> {
        if cpu_rank >= self.n_cpu {
            return Err(Error::OutOfRange {
                what: "CPU rank",
                value: cpu_rank,
                limit: self.n_cpu,
            });
        }
        Ok(cpu_rank / self.alpha)
    }

    /// World rank hosting GPU part `k`.
    pub fn active_rank(&self, gpu_rank: usize) -> usize {
        self.alpha * gpu_rank
    }

    /// Whether `cpu_rank` hosts a GPU part.
    pub fn is_active(&self, cpu_rank: usize) -> bool {
        cpu_rank.is_multiple_of(self.alpha)
    }

    /// CPU rank assembling global row `row`.
    pub fn cpu_owner_of_row(&self, row: usize) -> Option<usize> {
        if row >= self.total_cells() {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= row) - 1)
    }

    /// GPU part owning global row `row`.
    pub fn gpu_owner_of_row(&self, row: usize) -> Option<usize> {
        self.cpu_owner_of_row(row).map(|r| r / self.alpha)
    }
}

/// Build the partition map for the given per-rank cell counts.
pub fn make_partition_map(cells_per_cpu_rank: &[usize], alpha: usize) -> Result<PartitionMap> {
    PartitionMap::new(cells_per_cpu_rank, alpha)
}

/// GPU part owning the rows of `cpu_rank`.
pub fn gpu_owner(cpu_rank: usize, pm: &PartitionMap) -> Result<usize> {
    pm.gpu_owner(cpu_rank)
}

/// Device-side matrix of one GPU part, split by communication property.
///
/// `local` uses local row and column indices (global minus `row_offset`).
/// `nonlocal` uses local rows and compact halo columns; `halo_cols[h]` is the
/// global column of halo column `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedCooMatrix {
    owner_gpu_rank: usize,
    row_offset: usize,
    local: CooMatrix,
    nonlocal: CooMatrix,
    halo_cols: Vec<usize>,
}

impl DistributedCooMatrix {
    pub fn new(
        owner_gpu_rank: usize,
        row_offset: usize,
        local: CooMatrix,
        nonlocal: CooMatrix,
        halo_cols: Vec<usize>,
    ) -> Result<Self> {
        let n = local.n_rows();
        if local.n_cols() != n || nonlocal.n_rows() != n || nonlocal.n_cols() != halo_cols.len() {
            return Err(Error::Consistency(format!(
                "shape mismatch: local {}x{}, nonlocal {}x{}, {} halo columns",
                local.n_rows(),
                local.n_cols(),
                nonlocal.n_rows(),
                nonlocal.n_cols(),
                halo_cols.len()
            )));
        }
        if halo_cols.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Consistency("halo columns not strictly ascending".into()));
        }
        let owned = row_offset..row_offset + n;
        if let Some(&c) = halo_cols.iter().find(|c| owned.contains(c)) {
            return Err(Error::Consistency(format!(
                "halo column {c} lies inside the owned range {owned:?}"
            )));
        }
        Ok(DistributedCooMatrix {
            owner_gpu_rank,
            row_offset,
            local,
            nonlocal,
            halo_cols,
        })
    }

    pub fn owner_gpu_rank(&self) -> usize {
        self.owner_gpu_rank
    }

    pub fn row_offset(&self) -> usize {
        self.row_offset
    }

    pub fn n_owned(&self) -> usize {
        self.local.n_rows()
    }

    pub fn owned_range(&self) -> Range<usize> {
        self.row_offset..self.row_offset + self.n_owned()
    }

    pub fn local(&self) -> &CooMatrix {
        &self.local
    }

    pub fn nonlocal(&self) -> &CooMatrix {
        &self.nonlocal
    }

    pub fn halo_cols(&self) -> &[usize] {
        &self.halo_cols
    }

    pub(crate) fn values_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.local.vals_mut(), self.nonlocal.vals_mut())
    }

    /// All entries with global row and column indices, local part first.
    pub fn global_triplets(&self) -> Vec<(usize, usize, f64)> {
        let off = self.row_offset;
        self.local
            .triplets()
            .map(|(r, c, v)| (r + off, c + off, v))
            .chain(
                self.nonlocal
                    .triplets()
                    .map(|(r, h, v)| (r + off, self.halo_cols[h], v)),
            )
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> LduMatrix {
        LduMatrix::new(
            3,
            vec![0, 1],
            vec![1, 2],
            vec![2.0, 2.0, 2.0],
            vec![-1.0, -1.0],
            vec![-1.0, -1.0],
        )
        .unwrap()
    }

    #[test]
    fn partition_map_blocks() {
        let pm = make_partition_map(&[2, 2, 2, 2], 2).unwrap();
        assert_eq!(pm.offsets(), &[0, 2, 4, 6, 8]);
        assert_eq!(pm.n_gpu(), 2);
        assert_eq!(pm.gpu_range(0), 0..4);
        assert_eq!(pm.gpu_range(1), 4..8);

        let pm = make_partition_map(&[5], 1).unwrap();
        assert_eq!(pm.n_gpu(), 1);
        assert_eq!(pm.gpu_range(0), 0..5);
    }

    #[test]
    fn partition_map_errors() {
        let err = make_partition_map(&[2, 2, 2, 2], 3).unwrap_err();
        assert_eq!(err, Error::InvalidRatio { n_cpu: 4, alpha: 3 });
        assert!(err.to_string().contains("invalid ratio"));
        assert!(matches!(
            make_partition_map(&[2, 0, 2, 2], 2),
            Err(Error::EmptyPart { rank: 1 })
        ));
        assert!(make_partition_map(&[2, 2], 0).is_err());
    }

    #[test]
    fn gpu_owner_is_blockwise() {
        let pm = make_partition_map(&[1; 6], 2).unwrap();
        assert_eq!(gpu_owner(5, &pm).unwrap(), 2);
        let pm1 = make_partition_map(&[3], 1).unwrap();
        assert_eq!(gpu_owner(0, &pm1).unwrap(), 0);
        let pm4 = make_partition_map(&[1; 16], 4).unwrap();
        for r in 0..16 {
            assert_eq!(gpu_owner(r, &pm4).unwrap(), r / 4);
        }
        assert!(matches!(gpu_owner(16, &pm4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn row_owner_lookup() {
        let pm = make_partition_map(&[3, 1, 2, 2], 2).unwrap();
        let owners: Vec<_> = (0..8).map(|r| pm.cpu_owner_of_row(r).unwrap()).collect();
        assert_eq!(owners, [0, 0, 0, 1, 2, 2, 3, 3]);
        assert_eq!(pm.gpu_owner_of_row(3), Some(0));
        assert_eq!(pm.gpu_owner_of_row(4), Some(1));
        assert_eq!(pm.cpu_owner_of_row(8), None);
    }

    #[test]
    fn diagonal_only_to_coo() {
        let coo = ldu_to_coo(&LduMatrix::diagonal(vec![3.0, 4.0]));
        assert_eq!(coo.triplets().collect::<Vec<_>>(), [(0, 0, 3.0), (1, 1, 4.0)]);
    }

    #[test]
    fn chain_to_coo() {
        let coo = ldu_to_coo(&chain3());
        assert_eq!(
            coo.triplets().collect::<Vec<_>>(),
            [
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0)
            ]
        );
    }

    #[test]
    fn ldu_addressing_convention() {
        // upper_val lands above the diagonal, lower_val below
        let m = LduMatrix::new(2, vec![0], vec![1], vec![1.0, 1.0], vec![7.0], vec![5.0]).unwrap();
        let coo = m.to_coo();
        assert_eq!(coo.vals()[coo.find(0, 1).unwrap()], 5.0);
        assert_eq!(coo.vals()[coo.find(1, 0).unwrap()], 7.0);
    }

    #[test]
    fn malformed_ldu_names_face() {
        let err = LduMatrix::new(3, vec![0, 2], vec![1, 1], vec![1.0; 3], vec![0.0; 2], vec![0.0; 2])
            .unwrap_err();
        assert!(matches!(err, Error::MalformedLdu { face: 1, .. }));
        assert!(err.to_string().starts_with("malformed LDU"));

        let err = LduMatrix::new(3, vec![1, 0], vec![2, 1], vec![1.0; 3], vec![0.0; 2], vec![0.0; 2])
            .unwrap_err();
        assert!(matches!(err, Error::MalformedLdu { face: 1, .. }));

        let err = LduMatrix::new(3, vec![0, 0], vec![1, 1], vec![1.0; 3], vec![0.0; 2], vec![0.0; 2])
            .unwrap_err();
        assert!(matches!(err, Error::MalformedLdu { face: 1, .. }));

        assert!(LduMatrix::new(2, vec![0], vec![2], vec![1.0; 2], vec![0.0], vec![0.0]).is_err());
        assert!(LduMatrix::new(2, vec![0], vec![1], vec![1.0; 2], vec![], vec![0.0]).is_err());
    }

    #[test]
    fn interface_invariants() {
        assert!(InterfaceBlock::new(1, vec![0, 0], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(InterfaceBlock::new(1, vec![0], vec![1, 2], vec![1.0]).is_err());
        let b = InterfaceBlock::new(1, vec![0, 1], vec![3, 0], vec![1.0, 1.0]).unwrap();
        assert!(validate_interfaces(1, 2, std::slice::from_ref(&b)).is_err());
        assert!(validate_interfaces(0, 1, std::slice::from_ref(&b)).is_err());
        assert!(validate_interfaces(0, 2, &[b.clone(), b.clone()]).is_err());
        assert!(validate_interfaces(0, 2, &[b]).is_ok());
    }

    #[test]
    fn coo_rejects_noncanonical() {
        assert!(CooMatrix::new(2, 2, vec![1, 0], vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(CooMatrix::new(2, 2, vec![0, 0], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(CooMatrix::new(2, 2, vec![0], vec![2], vec![1.0]).is_err());
        assert!(matches!(
            CooMatrix::from_triplets(2, 2, vec![(1, 1, 1.0), (1, 1, 2.0)]),
            Err(Error::OverlappingOwnership { row: 1, col: 1 })
        ));
        let m = CooMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(m.rows(), &[0, 1, 1]);
        assert_eq!(m.cols(), &[1, 0, 2]);
        assert_eq!(m.find(1, 2), Some(2));
        assert_eq!(m.find(0, 0), None);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn distributed_matrix_halo_checks() {
        let local = CooMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let nonlocal = CooMatrix::from_triplets(2, 1, vec![(1, 0, -1.0)]).unwrap();
        let m = DistributedCooMatrix::new(0, 0, local.clone(), nonlocal.clone(), vec![2]).unwrap();
        assert_eq!(m.global_triplets(), vec![(0, 0, 1.0), (1, 1, 1.0), (1, 2, -1.0)]);
        assert!(DistributedCooMatrix::new(0, 0, local.clone(), nonlocal.clone(), vec![1]).is_err());
        let nonlocal2 = CooMatrix::from_triplets(2, 2, vec![(1, 0, -1.0)]).unwrap();
        assert!(DistributedCooMatrix::new(0, 0, local, nonlocal2, vec![5, 3]).is_err());
    }
}
