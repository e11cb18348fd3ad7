//! Coefficient updates of a repartitioned system.
//!
//! Every CPU rank packs its coefficients in the canonical layout and moves
//! them into the owner's device buffer, either straight from each rank
//! (`Direct`) or gathered on the owner's host first and copied in one piece
//! (`Staged`). The owner then scatters the buffer into row-major order.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::{sorted_interfaces, DistributedCooMatrix, InterfaceBlock, LduMatrix};
use crate::repart::{Destination, PatternFingerprint, RankSystem, ScatterMap, UpdatePattern};
use crate::transport::{Comm, DeviceBuffer, TrafficCategory, TrafficCounters};

/// How coefficients reach the device buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TransferMode {
    /// Every rank writes its segment into the device buffer (GPU-aware MPI).
    #[default]
    Direct,
    /// Segments are gathered on the owner's host and copied once.
    Staged,
}

impl TransferMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferMode::Direct => "direct",
            TransferMode::Staged => "staged",
        }
    }
}

impl std::fmt::Display for TransferMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(TransferMode::Direct),
            "staged" => Ok(TransferMode::Staged),
            _ => Err(Error::Parse {
                line: 0,
                reason: format!("unknown transfer mode `{s}` (expected direct or staged)"),
            }),
        }
    }
}

/// Coefficients of one rank in canonical pack layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedCoefficients {
    pub source_rank: usize,
    pub values: Vec<f64>,
}

/// `[diag | upper | lower | interfaces by ascending neighbour rank]`
pub fn pack_coefficients(
    source_rank: usize,
    m: &LduMatrix,
    ifaces: &[InterfaceBlock],
) -> PackedCoefficients {
    let mut values = Vec::with_capacity(
        m.n_cells() + 2 * m.n_faces() + ifaces.iter().map(InterfaceBlock::len).sum::<usize>(),
    );
    values.extend_from_slice(m.diag());
    values.extend_from_slice(m.upper_val());
    values.extend_from_slice(m.lower_val());
    for b in sorted_interfaces(ifaces) {
        values.extend_from_slice(b.values());
    }
    PackedCoefficients {
        source_rank,
        values,
    }
}

/// Traffic caused by one update on one rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransferStats {
    /// Fills of the device buffer (owner ranks only).
    pub device_transfers: u64,
    pub device_bytes: u64,
    pub traffic: TrafficCounters,
}

/// Move packed coefficients into the owners' device buffers. Collective
/// over all CPU ranks; `device` must be `Some` exactly on active ranks.
pub fn transfer_coefficients(
    packed: &PackedCoefficients,
    up: &UpdatePattern,
    mode: TransferMode,
    comm: &Comm,
    device: Option<&mut DeviceBuffer>,
) -> Result<TransferStats> {
    let me = comm.rank();
    let before = comm.traffic();
    let send = up.send(me);
    if packed.values.len() != send.len {
        return Err(Error::UpdatePatternViolation {
            source_rank: me,
            expected: send.len,
            got: packed.values.len(),
        });
    }
    let owner = send.target_world_rank;
    let mut own_values = None;
    match mode {
        TransferMode::Direct => {
            comm.send_as(owner, packed.values.clone(), TrafficCategory::DeviceDirect)?
        }
        TransferMode::Staged if owner != me => comm.send(owner, packed.values.clone())?,
        TransferMode::Staged => own_values = Some(&packed.values),
    }

    let (mut device_transfers, mut device_bytes) = (0, 0);
    if owner == me {
        let device = device.ok_or(Error::Consistency(format!(
            "active rank {me} has no device buffer"
        )))?;
        let (t0, b0) = (device.transfers(), device.bytes());
        let segments = up.segments(send.target_gpu);
        let check = |src: usize, expected: usize, got: usize| {
            if expected != got {
                return Err(Error::UpdatePatternViolation {
                    source_rank: src,
                    expected,
                    got,
                });
            }
            Ok(())
        };
        match mode {
            TransferMode::Direct => {
                for seg in segments {
                    let vals: Vec<f64> = comm.recv(seg.source_rank)?;
                    check(seg.source_rank, seg.len, vals.len())?;
                    device.write_segment(comm, seg.offset, &vals)?;
                }
            }
            TransferMode::Staged => {
                let mut staging = Vec::with_capacity(up.total_len(send.target_gpu));
                for seg in segments {
                    if seg.source_rank == me {
                        staging.extend_from_slice(own_values.expect("own segment"));
                    } else {
                        let vals: Vec<f64> = comm.recv(seg.source_rank)?;
                        check(seg.source_rank, seg.len, vals.len())?;
                        staging.extend(vals);
                    }
                }
                device.upload(comm, &staging)?;
            }
        }
        device_transfers = device.transfers() - t0;
        device_bytes = device.bytes() - b0;
    } else if device.is_some() {
        return Err(Error::Consistency(format!(
            "inactive rank {me} holds a device buffer"
        )));
    }
    Ok(TransferStats {
        device_transfers,
        device_bytes,
        traffic: comm.traffic().since(&before),
    })
}

/// Write `buffer[b]` into the slot the scatter map assigns to position `b`.
pub fn apply_scatter(
    buffer: &[f64],
    sm: &ScatterMap,
    matrix: &mut DistributedCooMatrix,
) -> Result<()> {
    if buffer.len() != sm.len() {
        return Err(Error::DimensionMismatch {
            expected: sm.len(),
            got: buffer.len(),
        });
    }
    let (local, nonlocal) = matrix.values_mut();
    if local.len() != sm.n_local() || nonlocal.len() != sm.n_nonlocal() {
        return Err(Error::DimensionMismatch {
            expected: sm.n_local() + sm.n_nonlocal(),
            got: local.len() + nonlocal.len(),
        });
    }
    for (slot, &v) in sm.entries().iter().zip(buffer) {
        match slot.dest {
            Destination::Local => local[slot.index] = v,
            Destination::NonLocal => nonlocal[slot.index] = v,
        }
    }
    Ok(())
}

/// Refresh the coefficients of a repartitioned system in place. Collective
/// over all CPU ranks. The sparsity of `(m, ifaces)` must match the one the
/// system was created from; only values move.
pub fn update(
    system: &mut RankSystem,
    m: &LduMatrix,
    ifaces: &[InterfaceBlock],
    mode: TransferMode,
) -> Result<TransferStats> {
    let comm = system.world().clone();
    let me = comm.rank();
    let now = PatternFingerprint::of(m, ifaces);
    if &now != system.fingerprint() {
        return Err(Error::PatternDrift {
            rank: me,
            detail: format!(
                "created with {:?}, updated with {:?}",
                system.fingerprint(),
                now
            ),
        });
    }
    let packed = pack_coefficients(me, m, ifaces);
    match system {
        RankSystem::Inactive(s) => transfer_coefficients(&packed, &s.update, mode, &comm, None),
        RankSystem::Active(s) => {
            let stats =
                transfer_coefficients(&packed, &s.update, mode, &comm, Some(&mut s.device))?;
            let buffer = s.device.read(&comm)?;
            apply_scatter(buffer, &s.scatter, &mut s.matrix)?;
            Ok(stats)
        }
    }
}
