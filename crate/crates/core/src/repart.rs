//! Repartitioning of per-rank LDU systems onto the GPU partition.
//!
//! Creation runs once and is collective over all CPU ranks:
//!
//! 1. every rank extracts its local and non-local sparsity pattern in
//!    global indices, together with the pack layout of its coefficients;
//! 2. patterns are shipped to the owning GPU rank (world rank `alpha * k`);
//! 3. the owner fuses the `alpha` received patterns, moving every non-local
//!    entry whose column now lies inside its own row range into the local
//!    pattern, and derives the update pattern and the scatter map.
//!
//! Coefficient updates afterwards only move values (see [`crate::update`]).

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::{
    sorted_interfaces, validate_interfaces, CooMatrix, DistributedCooMatrix, InterfaceBlock,
    LduMatrix, PartitionMap,
};
use crate::solver::{build_halo_plan, HaloPlan};
use crate::transport::{split_active, Comm, CommGroup, DeviceBuffer, Wire};
use crate::update::{apply_scatter, pack_coefficients};

type Entry = (usize, usize);

/// Sparsity of one CPU rank in global indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparsityPattern {
    /// Global rows owned by the producing rank.
    pub rows: Range<usize>,
    /// Entries whose column lies inside `rows`, row-major.
    pub local: Vec<Entry>,
    /// Entries whose column lies outside `rows`, row-major.
    pub nonlocal: Vec<Entry>,
}

impl Wire for SparsityPattern {
    fn wire_bytes(&self) -> usize {
        16 + 16 * (self.local.len() + self.nonlocal.len())
    }
}

/// Global `(row, col)` of every coefficient of one rank in canonical pack
/// order: diagonal, upper faces, lower faces, then interface blocks by
/// ascending neighbour rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackLayout {
    pub source_rank: usize,
    pub entries: Vec<Entry>,
}

impl Wire for PackLayout {
    fn wire_bytes(&self) -> usize {
        8 + 16 * self.entries.len()
    }
}

fn check_inputs(
    m: &LduMatrix,
    ifaces: &[InterfaceBlock],
    pm: &PartitionMap,
    rank: usize,
) -> Result<()> {
    if rank >= pm.n_cpu() {
        return Err(Error::OutOfRange {
            what: "CPU rank",
            value: rank,
            limit: pm.n_cpu(),
        });
    }
    if m.n_cells() != pm.cpu_cells(rank) {
        return Err(Error::DimensionMismatch {
            expected: pm.cpu_cells(rank),
            got: m.n_cells(),
        });
    }
    validate_interfaces(rank, m.n_cells(), ifaces)?;
    for b in ifaces {
        let q = b.neighbor_rank();
        if q >= pm.n_cpu() {
            return Err(Error::InconsistentInterface {
                rank,
                reason: format!("neighbour rank {q} does not exist"),
            });
        }
        if let Some(&c) = b.cols_remote().iter().find(|&&c| c >= pm.cpu_cells(q)) {
            return Err(Error::InconsistentInterface {
                rank,
                reason: format!(
                    "column {c} outside the {} cells of rank {q}",
                    pm.cpu_cells(q)
                ),
            });
        }
    }
    Ok(())
}

/// Pack layout of one rank's coefficients.
pub fn pack_layout(
    m: &LduMatrix,
    ifaces: &[InterfaceBlock],
    pm: &PartitionMap,
    rank: usize,
) -> Result<PackLayout> {
    check_inputs(m, ifaces, pm, rank)?;
    let off = pm.cpu_range(rank).start;
    let mut entries = Vec::with_capacity(
        m.n_cells() + 2 * m.n_faces() + ifaces.iter().map(InterfaceBlock::len).sum::<usize>(),
    );
    entries.extend((0..m.n_cells()).map(|i| (off + i, off + i)));
    let faces = m.lower_addr().iter().zip(m.upper_addr());
    entries.extend(faces.clone().map(|(&l, &u)| (off + l, off + u)));
    entries.extend(faces.map(|(&l, &u)| (off + u, off + l)));
    for b in sorted_interfaces(ifaces) {
        let qoff = pm.cpu_range(b.neighbor_rank()).start;
        entries.extend(
            b.rows()
                .iter()
                .zip(b.cols_remote())
                .map(|(&r, &c)| (off + r, qoff + c)),
        );
    }
    Ok(PackLayout {
        source_rank: rank,
        entries,
    })
}

/// Step 1: the sparsity pattern of one rank, including all coupling terms.
pub fn extract_sparsity(
    m: &LduMatrix,
    ifaces: &[InterfaceBlock],
    pm: &PartitionMap,
    my_rank: usize,
) -> Result<SparsityPattern> {
    check_inputs(m, ifaces, pm, my_rank)?;
    let rows = pm.cpu_range(my_rank);
    let off = rows.start;
    let coo = m.to_coo();
    let local = coo
        .rows()
        .iter()
        .zip(coo.cols())
        .map(|(&r, &c)| (off + r, off + c))
        .collect();
    let mut nonlocal: Vec<Entry> = ifaces
        .iter()
        .flat_map(|b| {
            let qoff = pm.cpu_range(b.neighbor_rank()).start;
            b.rows()
                .iter()
                .zip(b.cols_remote())
                .map(move |(&r, &c)| (off + r, qoff + c))
        })
        .collect();
    nonlocal.sort_unstable();
    if let Some(w) = nonlocal.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InconsistentInterface {
            rank: my_rank,
            reason: format!("entry {:?} appears in two interface blocks", w[0]),
        });
    }
    Ok(SparsityPattern {
        rows,
        local,
        nonlocal,
    })
}

/// Pattern and pack layout as received by a GPU rank from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPattern {
    pub source_rank: usize,
    pub pattern: SparsityPattern,
    pub layout: PackLayout,
}

/// Step 2: ship every rank's pattern to its owning GPU rank.
///
/// Collective over all CPU ranks. Active ranks return the patterns of their
/// `alpha` sources in ascending source order; all others return `None`.
pub fn exchange_patterns(
    sp: SparsityPattern,
    layout: PackLayout,
    pm: &PartitionMap,
    comm: &Comm,
) -> Result<Option<Vec<ReceivedPattern>>> {
    let me = comm.rank();
    let owner = pm.active_rank(pm.gpu_owner(me)?);
    comm.send(owner, (sp, layout))?;
    if !pm.is_active(me) {
        return Ok(None);
    }
    pm.gpu_sources(pm.gpu_owner(me)?)
        .map(|src| {
            let (pattern, layout): (SparsityPattern, PackLayout) = comm.recv(src)?;
            Ok(ReceivedPattern {
                source_rank: src,
                pattern,
                layout,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Fused local and non-local patterns of one GPU part, in global indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FusedPattern {
    pub local: Vec<Entry>,
    pub nonlocal: Vec<Entry>,
}

/// Step 3: fuse the patterns received by GPU rank `gpu_rank`.
///
/// Non-local entries whose column falls inside `I_GPU(gpu_rank)` are
/// localized; the remaining ones stay non-local.
pub fn fuse_patterns(
    received: &[SparsityPattern],
    pm: &PartitionMap,
    gpu_rank: usize,
) -> Result<FusedPattern> {
    let owned = pm.gpu_range(gpu_rank);
    let mut local = Vec::new();
    let mut nonlocal = Vec::new();
    for sp in received {
        if sp.rows.start < owned.start || sp.rows.end > owned.end {
            return Err(Error::Consistency(format!(
                "pattern rows {:?} outside GPU part {gpu_rank} rows {owned:?}",
                sp.rows
            )));
        }
        local.extend_from_slice(&sp.local);
        for &(r, c) in &sp.nonlocal {
            if owned.contains(&c) {
                local.push((r, c));
            } else {
                nonlocal.push((r, c));
            }
        }
    }
    for list in [&mut local, &mut nonlocal] {
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::OverlappingOwnership {
                row: w[0].0,
                col: w[0].1,
            });
        }
    }
    Ok(FusedPattern { local, nonlocal })
}

/// Where a CPU rank sends its packed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendEntry {
    pub target_gpu: usize,
    pub target_world_rank: usize,
    /// Receive offset inside the owner's buffer.
    pub offset: usize,
    pub len: usize,
}

/// One contiguous slice of a GPU rank's receive buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub source_rank: usize,
    pub offset: usize,
    pub len: usize,
}

/// Send and receive bookkeeping for coefficient updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdatePattern {
    sends: Vec<SendEntry>,
    segments: Vec<Vec<Segment>>,
    totals: Vec<usize>,
}

impl UpdatePattern {
    pub fn send(&self, cpu_rank: usize) -> &SendEntry {
        &self.sends[cpu_rank]
    }

    /// Receive segments of GPU rank `k`, ascending by source rank.
    pub fn segments(&self, gpu_rank: usize) -> &[Segment] {
        &self.segments[gpu_rank]
    }

    pub fn total_len(&self, gpu_rank: usize) -> usize {
        self.totals[gpu_rank]
    }
}

/// Lay out the receive buffers: sources are concatenated in ascending rank
/// order, so offsets are prefix sums of the per-source coefficient counts.
pub fn build_update_pattern(pm: &PartitionMap, counts: &[usize]) -> Result<UpdatePattern> {
    if counts.len() != pm.n_cpu() {
        return Err(Error::DimensionMismatch {
            expected: pm.n_cpu(),
            got: counts.len(),
        });
    }
    let mut sends = Vec::with_capacity(pm.n_cpu());
    let mut segments = Vec::with_capacity(pm.n_gpu());
    let mut totals = Vec::with_capacity(pm.n_gpu());
    for k in 0..pm.n_gpu() {
        let mut offset = 0;
        let mut segs = Vec::with_capacity(pm.alpha());
        for src in pm.gpu_sources(k) {
            segs.push(Segment {
                source_rank: src,
                offset,
                len: counts[src],
            });
            sends.push(SendEntry {
                target_gpu: k,
                target_world_rank: pm.active_rank(k),
                offset,
                len: counts[src],
            });
            offset += counts[src];
        }
        segments.push(segs);
        totals.push(offset);
    }
    Ok(UpdatePattern {
        sends,
        segments,
        totals,
    })
}

/// Value array a buffer position is scattered into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Destination {
    Local,
    NonLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub dest: Destination,
    pub index: usize,
}

/// Map from receive-buffer positions (LDU order) to device value slots
/// (row-major order). A bijection by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterMap {
    entries: Vec<Slot>,
    n_local: usize,
    n_nonlocal: usize,
}

impl ScatterMap {
    pub fn new(entries: Vec<Slot>, n_local: usize, n_nonlocal: usize) -> Result<Self> {
        if entries.len() != n_local + n_nonlocal {
            return Err(Error::Consistency(format!(
                "{} buffer entries for {n_local} + {n_nonlocal} slots",
                entries.len()
            )));
        }
        let mut hit_local = vec![false; n_local];
        let mut hit_nonlocal = vec![false; n_nonlocal];
        for (b, s) in entries.iter().enumerate() {
            let hits = match s.dest {
                Destination::Local => &mut hit_local,
                Destination::NonLocal => &mut hit_nonlocal,
            };
            match hits.get_mut(s.index) {
                Some(h) if !*h => *h = true,
                Some(_) => {
                    return Err(Error::Consistency(format!(
                        "buffer index {b} hits {:?} slot {} a second time",
                        s.dest, s.index
                    )))
                }
                None => {
                    return Err(Error::Consistency(format!(
                        "buffer index {b} points past {:?} slot count",
                        s.dest
                    )))
                }
            }
        }
        Ok(ScatterMap {
            entries,
            n_local,
            n_nonlocal,
        })
    }

    pub fn entries(&self) -> &[Slot] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn n_nonlocal(&self) -> usize {
        self.n_nonlocal
    }
}

/// Map every position of the concatenated pack layouts onto the fused
/// pattern slot holding the same `(row, col)`.
pub fn build_scatter_map(
    layouts: &[PackLayout],
    fused: &FusedPattern,
    owned: Range<usize>,
) -> Result<ScatterMap> {
    let total: usize = layouts.iter().map(|l| l.entries.len()).sum();
    let mut entries = Vec::with_capacity(total);
    for layout in layouts {
        for &(r, c) in &layout.entries {
            let (dest, list) = if owned.contains(&c) {
                (Destination::Local, &fused.local)
            } else {
                (Destination::NonLocal, &fused.nonlocal)
            };
            let index = list.binary_search(&(r, c)).map_err(|_| {
                Error::Consistency(format!(
                    "entry ({r}, {c}) from rank {} missing from the fused pattern",
                    layout.source_rank
                ))
            })?;
            entries.push(Slot { dest, index });
        }
    }
    ScatterMap::new(entries, fused.local.len(), fused.nonlocal.len())
}

/// Device matrix with zero values for a fused pattern.
pub fn matrix_from_pattern(
    fused: &FusedPattern,
    gpu_rank: usize,
    owned: Range<usize>,
) -> Result<DistributedCooMatrix> {
    let off = owned.start;
    let n = owned.len();
    let local: Vec<Entry> = fused.local.iter().map(|&(r, c)| (r - off, c - off)).collect();
    let mut halo_cols: Vec<usize> = fused.nonlocal.iter().map(|&(_, c)| c).collect();
    halo_cols.sort_unstable();
    halo_cols.dedup();
    let nonlocal: Vec<Entry> = fused
        .nonlocal
        .iter()
        .map(|&(r, c)| (r - off, halo_cols.binary_search(&c).expect("collected column")))
        .collect();
    DistributedCooMatrix::new(
        gpu_rank,
        off,
        CooMatrix::from_pattern(n, n, &local)?,
        CooMatrix::from_pattern(n, halo_cols.len(), &nonlocal)?,
        halo_cols,
    )
}

/// Shape summary used to detect sparsity changes between updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternFingerprint {
    pub n_cells: usize,
    pub n_faces: usize,
    /// `(neighbour rank, entry count)` ascending by neighbour.
    pub interfaces: Vec<(usize, usize)>,
}

impl PatternFingerprint {
    pub fn of(m: &LduMatrix, ifaces: &[InterfaceBlock]) -> Self {
        PatternFingerprint {
            n_cells: m.n_cells(),
            n_faces: m.n_faces(),
            interfaces: sorted_interfaces(ifaces)
                .into_iter()
                .map(|b| (b.neighbor_rank(), b.len()))
                .collect(),
        }
    }
}

/// Repartitioned system held by an active rank.
#[derive(Debug)]
pub struct RepartitionedSystem {
    pub(crate) matrix: DistributedCooMatrix,
    pub(crate) update: UpdatePattern,
    pub(crate) scatter: ScatterMap,
    pub(crate) comm: CommGroup,
    pub(crate) halo: HaloPlan,
    pub(crate) pm: PartitionMap,
    pub(crate) fingerprint: PatternFingerprint,
    pub(crate) device: DeviceBuffer,
}

impl RepartitionedSystem {
    pub fn matrix(&self) -> &DistributedCooMatrix {
        &self.matrix
    }

    pub fn update_pattern(&self) -> &UpdatePattern {
        &self.update
    }

    pub fn scatter(&self) -> &ScatterMap {
        &self.scatter
    }

    /// Active communicator `C_a`.
    pub fn comm(&self) -> &CommGroup {
        &self.comm
    }

    pub fn halo(&self) -> &HaloPlan {
        &self.halo
    }

    pub fn partition(&self) -> &PartitionMap {
        &self.pm
    }

    pub fn gpu_rank(&self) -> usize {
        self.matrix.owner_gpu_rank()
    }

    pub fn device(&self) -> &DeviceBuffer {
        &self.device
    }
}

/// Handle kept by a rank without a GPU part; it only takes part in
/// coefficient updates.
#[derive(Debug)]
pub struct InactiveRank {
    pub(crate) update: UpdatePattern,
    pub(crate) comm: CommGroup,
    pub(crate) pm: PartitionMap,
    pub(crate) fingerprint: PatternFingerprint,
}

impl InactiveRank {
    pub fn update_pattern(&self) -> &UpdatePattern {
        &self.update
    }

    /// Inactive communicator `C_i`.
    pub fn comm(&self) -> &CommGroup {
        &self.comm
    }
}

/// Outcome of [`repartition`] on one CPU rank.
#[derive(Debug)]
pub enum RankSystem {
    Active(RepartitionedSystem),
    Inactive(InactiveRank),
}

impl RankSystem {
    pub fn active(&self) -> Option<&RepartitionedSystem> {
        match self {
            RankSystem::Active(s) => Some(s),
            RankSystem::Inactive(_) => None,
        }
    }

    pub fn active_mut(&mut self) -> Option<&mut RepartitionedSystem> {
        match self {
            RankSystem::Active(s) => Some(s),
            RankSystem::Inactive(_) => None,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, RankSystem::Active(_))
    }

    pub fn update_pattern(&self) -> &UpdatePattern {
        match self {
            RankSystem::Active(s) => &s.update,
            RankSystem::Inactive(s) => &s.update,
        }
    }

    pub(crate) fn fingerprint(&self) -> &PatternFingerprint {
        match self {
            RankSystem::Active(s) => &s.fingerprint,
            RankSystem::Inactive(s) => &s.fingerprint,
        }
    }

    pub(crate) fn world(&self) -> &Comm {
        match self {
            RankSystem::Active(s) => s.comm.comm(),
            RankSystem::Inactive(s) => s.comm.comm(),
        }
    }

    pub fn partition(&self) -> &PartitionMap {
        match self {
            RankSystem::Active(s) => &s.pm,
            RankSystem::Inactive(s) => &s.pm,
        }
    }
}

/// Build the repartitioned system. Collective over all CPU ranks.
///
/// Active ranks end up with the fused device matrix (initial values
/// scattered from the creation-time coefficients), the update pattern, the
/// scatter map, the halo plan and `C_a`. Inactive ranks keep only what a
/// later coefficient update needs.
pub fn repartition(
    m: &LduMatrix,
    ifaces: &[InterfaceBlock],
    pm: &PartitionMap,
    comm: &Comm,
) -> Result<RankSystem> {
    let me = comm.rank();
    let sp = extract_sparsity(m, ifaces, pm, me)?;
    let layout = pack_layout(m, ifaces, pm, me)?;
    let packed = pack_coefficients(me, m, ifaces);

    let counts = comm.world_group().allgather(layout.entries.len())?;
    let update = build_update_pattern(pm, &counts)?;
    let group = split_active(comm, pm)?;
    let fingerprint = PatternFingerprint::of(m, ifaces);

    let received = exchange_patterns(sp, layout, pm, comm)?;
    // creation-time coefficients follow the pattern on the same FIFO
    comm.send(update.send(me).target_world_rank, packed.values)?;

    let Some(received) = received else {
        return Ok(RankSystem::Inactive(InactiveRank {
            update,
            comm: group,
            pm: pm.clone(),
            fingerprint,
        }));
    };

    let k = pm.gpu_owner(me)?;
    let owned = pm.gpu_range(k);
    let patterns: Vec<SparsityPattern> = received.iter().map(|r| r.pattern.clone()).collect();
    let layouts: Vec<PackLayout> = received.into_iter().map(|r| r.layout).collect();
    let fused = fuse_patterns(&patterns, pm, k)?;
    let scatter = build_scatter_map(&layouts, &fused, owned.clone())?;
    let mut matrix = matrix_from_pattern(&fused, k, owned)?;

    let mut initial = Vec::with_capacity(update.total_len(k));
    for seg in update.segments(k) {
        let vals: Vec<f64> = comm.recv(seg.source_rank)?;
        if vals.len() != seg.len {
            return Err(Error::UpdatePatternViolation {
                source_rank: seg.source_rank,
                expected: seg.len,
                got: vals.len(),
            });
        }
        initial.extend(vals);
    }
    apply_scatter(&initial, &scatter, &mut matrix)?;

    let halo = build_halo_plan(&matrix, pm, &group)?;
    let device = DeviceBuffer::allocate(comm, update.total_len(k));
    Ok(RankSystem::Active(RepartitionedSystem {
        matrix,
        update,
        scatter,
        comm: group,
        halo,
        pm: pm.clone(),
        fingerprint,
        device,
    }))
}

/// Line-oriented dump of a sparsity pattern.
pub fn dump_pattern(sp: &SparsityPattern) -> String {
    let mut s = format!("pattern {} {}\n", sp.rows.start, sp.rows.end);
    for &(r, c) in &sp.local {
        let _ = writeln!(s, "L {r} {c}");
    }
    for &(r, c) in &sp.nonlocal {
        let _ = writeln!(s, "N {r} {c}");
    }
    s
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize> {
    tok.and_then(|t| t.parse().ok()).ok_or(Error::Parse {
        line,
        reason: "expected an unsigned integer".into(),
    })
}

pub fn parse_pattern(text: &str) -> Result<SparsityPattern> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty dump".into(),
    })?;
    let mut t = head.split_whitespace();
    if t.next() != Some("pattern") {
        return Err(Error::Parse {
            line: 1,
            reason: "expected `pattern <start> <end>`".into(),
        });
    }
    let start = parse_usize(t.next(), 1)?;
    let end = parse_usize(t.next(), 1)?;
    let mut sp = SparsityPattern {
        rows: start..end,
        ..Default::default()
    };
    for (no, line) in lines {
        let mut t = line.split_whitespace();
        let kind = t.next();
        let e = (parse_usize(t.next(), no + 1)?, parse_usize(t.next(), no + 1)?);
        match kind {
            Some("L") => sp.local.push(e),
            Some("N") => sp.nonlocal.push(e),
            _ => {
                return Err(Error::Parse {
                    line: no + 1,
                    reason: "expected `L` or `N`".into(),
                })
            }
        }
    }
    Ok(sp)
}

/// Line-oriented dump of a scatter map: `<buffer index> local|nonlocal <slot>`.
pub fn dump_scatter(sm: &ScatterMap) -> String {
    let mut s = format!("scatter {} {}\n", sm.n_local, sm.n_nonlocal);
    for (b, slot) in sm.entries.iter().enumerate() {
        let d = match slot.dest {
            Destination::Local => "local",
            Destination::NonLocal => "nonlocal",
        };
        let _ = writeln!(s, "{b} {d} {}", slot.index);
    }
    s
}

pub fn parse_scatter(text: &str) -> Result<ScatterMap> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty dump".into(),
    })?;
    let mut t = head.split_whitespace();
    if t.next() != Some("scatter") {
        return Err(Error::Parse {
            line: 1,
            reason: "expected `scatter <n_local> <n_nonlocal>`".into(),
        });
    }
    let n_local = parse_usize(t.next(), 1)?;
    let n_nonlocal = parse_usize(t.next(), 1)?;
    let mut entries = Vec::new();
    for (no, line) in lines {
        let mut t = line.split_whitespace();
        let b = parse_usize(t.next(), no + 1)?;
        if b != entries.len() {
            return Err(Error::Parse {
                line: no + 1,
                reason: format!("expected buffer index {}", entries.len()),
            });
        }
        let dest = match t.next() {
            Some("local") => Destination::Local,
            Some("nonlocal") => Destination::NonLocal,
            _ => {
                return Err(Error::Parse {
                    line: no + 1,
                    reason: "expected `local` or `nonlocal`".into(),
                })
            }
        };
        entries.push(Slot {
            dest,
            index: parse_usize(t.next(), no + 1)?,
        });
    }
    ScatterMap::new(entries, n_local, n_nonlocal)
}
