//! In-process message-passing world.
//!
//! Every rank runs the same program on its own thread. Messages travel
//! through unbounded per-(sender, receiver) FIFO queues, so sends never
//! block and receives name their source explicitly. Two schedulers exist:
//!
//! * [`SchedulerMode::Concurrent`]: all ranks run in parallel.
//! * [`SchedulerMode::Deterministic`]: a single baton is passed round-robin;
//!   a rank runs until it blocks on an empty queue or finishes, then hands
//!   the baton to the next rank (in ascending order, wrapping) that can make
//!   progress.
//!
//! In both modes a rank that blocks while every other live rank is also
//! blocked on an empty queue triggers deadlock detection, and a failing
//! rank aborts the whole world.

use std::any::Any;
use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use crate::error::{Error, Result};
use crate::matrix::PartitionMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchedulerMode {
    Concurrent,
    #[default]
    Deterministic,
}

/// Accounting bucket for a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficCategory {
    /// Host memory of one rank to host memory of another.
    RankToRank,
    /// Host memory straight into a device buffer (GPU-aware path).
    DeviceDirect,
    /// Host-side staging copied to the device in one step.
    HostStaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChannelCounters {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub messages_received: u64,
    pub bytes_received: u64,
}

/// Per-rank traffic counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrafficCounters {
    pub rank_to_rank: ChannelCounters,
    pub device_direct: ChannelCounters,
    pub host_staged: ChannelCounters,
    pub device_allocations: u64,
}

impl TrafficCounters {
    pub fn category(&self, cat: TrafficCategory) -> &ChannelCounters {
        match cat {
            TrafficCategory::RankToRank => &self.rank_to_rank,
            TrafficCategory::DeviceDirect => &self.device_direct,
            TrafficCategory::HostStaged => &self.host_staged,
        }
    }

    fn category_mut(&mut self, cat: TrafficCategory) -> &mut ChannelCounters {
        match cat {
            TrafficCategory::RankToRank => &mut self.rank_to_rank,
            TrafficCategory::DeviceDirect => &mut self.device_direct,
            TrafficCategory::HostStaged => &mut self.host_staged,
        }
    }

    pub fn merge(&mut self, other: &TrafficCounters) {
        for cat in [
            TrafficCategory::RankToRank,
            TrafficCategory::DeviceDirect,
            TrafficCategory::HostStaged,
        ] {
            let a = self.category_mut(cat);
            let b = other.category(cat);
            a.messages_sent += b.messages_sent;
            a.bytes_sent += b.bytes_sent;
            a.messages_received += b.messages_received;
            a.bytes_received += b.bytes_received;
        }
        self.device_allocations += other.device_allocations;
    }

    /// Counter difference `self - earlier`.
    pub fn since(&self, earlier: &TrafficCounters) -> TrafficCounters {
        let d = |a: &ChannelCounters, b: &ChannelCounters| ChannelCounters {
            messages_sent: a.messages_sent - b.messages_sent,
            bytes_sent: a.bytes_sent - b.bytes_sent,
            messages_received: a.messages_received - b.messages_received,
            bytes_received: a.bytes_received - b.bytes_received,
        };
        TrafficCounters {
            rank_to_rank: d(&self.rank_to_rank, &earlier.rank_to_rank),
            device_direct: d(&self.device_direct, &earlier.device_direct),
            host_staged: d(&self.host_staged, &earlier.host_staged),
            device_allocations: self.device_allocations - earlier.device_allocations,
        }
    }
}

/// A value that can travel between ranks. `wire_bytes` is what the traffic
/// counters charge for it.
pub trait Wire: Any + Send {
    fn wire_bytes(&self) -> usize;
}

macro_rules! scalar_wire {
    ($($t:ty),*) => {
        $(impl Wire for $t {
            fn wire_bytes(&self) -> usize {
                std::mem::size_of::<$t>()
            }
        })*
    };
}

scalar_wire!(f64, f32, u64, u32, i64, i32, usize, u8, bool);

impl Wire for () {
    fn wire_bytes(&self) -> usize {
        0
    }
}

impl<A: Wire, B: Wire> Wire for (A, B) {
    fn wire_bytes(&self) -> usize {
        self.0.wire_bytes() + self.1.wire_bytes()
    }
}

impl<T: Wire> Wire for Vec<T> {
    fn wire_bytes(&self) -> usize {
        self.iter().map(Wire::wire_bytes).sum()
    }
}

impl<T: Wire> Wire for Option<T> {
    fn wire_bytes(&self) -> usize {
        self.as_ref().map_or(0, Wire::wire_bytes)
    }
}

struct Message {
    payload: Box<dyn Any + Send>,
    bytes: usize,
    category: TrafficCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Runnable,
    Blocked(usize),
    Done,
}

struct State {
    n: usize,
    queues: Vec<VecDeque<Message>>,
    status: Vec<Status>,
    turn: Option<usize>,
    failure: Option<Error>,
    traffic: Vec<TrafficCounters>,
}

impl State {
    fn queue(&self, src: usize, dst: usize) -> &VecDeque<Message> {
        &self.queues[src * self.n + dst]
    }

    fn can_progress(&self, r: usize) -> bool {
        match self.status[r] {
            Status::Runnable => true,
            Status::Blocked(src) => !self.queue(src, r).is_empty(),
            Status::Done => false,
        }
    }

    fn all_done(&self) -> bool {
        self.status.iter().all(|s| *s == Status::Done)
    }

    fn stuck(&self) -> bool {
        !self.all_done() && (0..self.n).all(|r| !self.can_progress(r))
    }

    fn deadlock(&self) -> Error {
        let waits: Vec<String> = (0..self.n)
            .filter_map(|r| match self.status[r] {
                Status::Blocked(src) => Some(format!("rank {r} waits on rank {src}")),
                _ => None,
            })
            .collect();
        Error::Deadlock {
            detail: waits.join(", "),
        }
    }

    /// Deterministic mode: hand the baton to the next rank able to progress.
    fn pass_turn(&mut self, from: usize) {
        self.turn = (1..=self.n)
            .map(|k| (from + k) % self.n)
            .find(|&r| self.can_progress(r));
    }
}

struct Shared {
    mode: SchedulerMode,
    state: Mutex<State>,
    cv: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        // a poisoned lock only means another rank panicked; the state itself
        // stays consistent because every mutation completes under the lock
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn check_stuck(&self, st: &mut State) {
        if st.failure.is_none() && st.stuck() {
            st.failure = Some(st.deadlock());
        }
    }
}

/// Per-rank handle onto the world.
#[derive(Clone)]
pub struct Comm {
    rank: usize,
    shared: Arc<Shared>,
}

impl std::fmt::Debug for Comm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Comm").field("rank", &self.rank).finish()
    }
}

impl Comm {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.shared.lock().n
    }

    pub fn mode(&self) -> SchedulerMode {
        self.shared.mode
    }

    /// Host-to-host send.
    pub fn send<T: Wire>(&self, dest: usize, payload: T) -> Result<()> {
        self.send_as(dest, payload, TrafficCategory::RankToRank)
    }

    /// Send, charging the bytes to `category`. Sending to self is a loopback.
    pub fn send_as<T: Wire>(&self, dest: usize, payload: T, category: TrafficCategory) -> Result<()> {
        let bytes = payload.wire_bytes();
        let mut st = self.shared.lock();
        if dest >= st.n {
            return Err(Error::OutOfRange {
                what: "destination rank",
                value: dest,
                limit: st.n,
            });
        }
        if st.failure.is_some() {
            return Err(Error::Aborted);
        }
        let n = st.n;
        st.queues[self.rank * n + dest].push_back(Message {
            payload: Box::new(payload),
            bytes,
            category,
        });
        let c = st.traffic[self.rank].category_mut(category);
        c.messages_sent += 1;
        c.bytes_sent += bytes as u64;
        drop(st);
        self.shared.cv.notify_all();
        Ok(())
    }

    /// Receive the next message from `src`, blocking until it arrives.
    pub fn recv<T: Wire>(&self, src: usize) -> Result<T> {
        let shared = &*self.shared;
        let me = self.rank;
        let mut st = shared.lock();
        if src >= st.n {
            return Err(Error::OutOfRange {
                what: "source rank",
                value: src,
                limit: st.n,
            });
        }
        let n = st.n;
        loop {
            if st.failure.is_some() {
                return Err(Error::Aborted);
            }
            let my_turn = shared.mode == SchedulerMode::Concurrent || st.turn == Some(me);
            if my_turn && !st.queues[src * n + me].is_empty() {
                st.status[me] = Status::Runnable;
                let msg = st.queues[src * n + me].pop_front().expect("non-empty queue");
                let c = st.traffic[me].category_mut(msg.category);
                c.messages_received += 1;
                c.bytes_received += msg.bytes as u64;
                return msg
                    .payload
                    .downcast::<T>()
                    .map(|b| *b)
                    .map_err(|_| Error::PayloadType {
                        src,
                        dest: me,
                        expected: std::any::type_name::<T>(),
                    });
            }
            if st.status[me] != Status::Blocked(src) {
                st.status[me] = Status::Blocked(src);
                if shared.mode == SchedulerMode::Deterministic {
                    st.pass_turn(me);
                }
                shared.check_stuck(&mut st);
                shared.cv.notify_all();
            }
            st = shared.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Charge a transfer that is not a message, e.g. a host-to-device copy.
    pub fn record_transfer(&self, category: TrafficCategory, bytes: usize) {
        let mut st = self.shared.lock();
        let c = st.traffic[self.rank].category_mut(category);
        c.messages_sent += 1;
        c.bytes_sent += bytes as u64;
        c.messages_received += 1;
        c.bytes_received += bytes as u64;
    }

    fn record_device_allocation(&self) {
        self.shared.lock().traffic[self.rank].device_allocations += 1;
    }

    /// Snapshot of this rank's own counters.
    pub fn traffic(&self) -> TrafficCounters {
        self.shared.lock().traffic[self.rank]
    }

    pub fn world_group(&self) -> CommGroup {
        let n = self.size();
        CommGroup::new(self.clone(), (0..n).collect(), GroupRole::World)
    }

    fn wait_turn(&self) {
        let shared = &*self.shared;
        let mut st = shared.lock();
        while shared.mode == SchedulerMode::Deterministic
            && st.turn != Some(self.rank)
            && st.failure.is_none()
        {
            st = shared.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn finish(&self, failure: Option<Error>) {
        let shared = &*self.shared;
        let mut st = shared.lock();
        st.status[self.rank] = Status::Done;
        if let Some(e) = failure {
            if st.failure.is_none() {
                st.failure = Some(e);
            }
        }
        if shared.mode == SchedulerMode::Deterministic {
            st.pass_turn(self.rank);
        }
        shared.check_stuck(&mut st);
        drop(st);
        shared.cv.notify_all();
    }
}

/// Results of a completed world run.
#[derive(Debug, Clone)]
pub struct WorldRun<T> {
    pub results: Vec<T>,
    pub traffic: Vec<TrafficCounters>,
}

impl<T> WorldRun<T> {
    pub fn total_traffic(&self) -> TrafficCounters {
        let mut t = TrafficCounters::default();
        for c in &self.traffic {
            t.merge(c);
        }
        t
    }
}

/// Run `program` once per rank and collect the per-rank results.
///
/// A rank returning an error (or panicking) aborts the world; the first
/// failure is reported with its rank id. An all-blocked state is reported
/// as [`Error::Deadlock`].
pub fn run_world<T, F>(n_ranks: usize, mode: SchedulerMode, program: F) -> Result<WorldRun<T>>
where
    T: Send,
    F: Fn(&Comm) -> Result<T> + Sync,
{
    if n_ranks == 0 {
        return Err(Error::OutOfRange {
            what: "rank count",
            value: 0,
            limit: 1,
        });
    }
    let shared = Arc::new(Shared {
        mode,
        state: Mutex::new(State {
            n: n_ranks,
            queues: (0..n_ranks * n_ranks).map(|_| VecDeque::new()).collect(),
            status: vec![Status::Runnable; n_ranks],
            turn: Some(0),
            failure: None,
            traffic: vec![TrafficCounters::default(); n_ranks],
        }),
        cv: Condvar::new(),
    });

    let outcomes: Vec<Option<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n_ranks)
            .map(|rank| {
                let comm = Comm {
                    rank,
                    shared: Arc::clone(&shared),
                };
                let program = &program;
                s.spawn(move || {
                    comm.wait_turn();
                    let out = catch_unwind(AssertUnwindSafe(|| program(&comm)));
                    match out {
                        Ok(Ok(v)) => {
                            comm.finish(None);
                            Some(v)
                        }
                        Ok(Err(e)) => {
                            let failure = match e {
                                Error::Aborted | Error::Deadlock { .. } => None,
                                e => Some(Error::RankFailed {
                                    rank,
                                    message: e.to_string(),
                                }),
                            };
                            comm.finish(failure);
                            None
                        }
                        Err(panic) => {
                            let message = panic
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| panic.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "panic".into());
                            comm.finish(Some(Error::RankFailed { rank, message }));
                            None
                        }
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(None))
            .collect()
    });

    let st = shared.lock();
    if let Some(e) = &st.failure {
        return Err(e.clone());
    }
    let results = outcomes
        .into_iter()
        .enumerate()
        .map(|(rank, o)| {
            o.ok_or(Error::RankFailed {
                rank,
                message: "no result".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WorldRun {
        results,
        traffic: st.traffic.clone(),
    })
}

/// Role of a communicator group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRole {
    World,
    Active,
    Inactive,
}

/// Sub-communicator over a sorted set of world ranks.
#[derive(Debug, Clone)]
pub struct CommGroup {
    comm: Comm,
    members: Vec<usize>,
    role: GroupRole,
    my_index: Option<usize>,
}

impl CommGroup {
    fn new(comm: Comm, members: Vec<usize>, role: GroupRole) -> Self {
        let my_index = members.binary_search(&comm.rank()).ok();
        CommGroup {
            comm,
            members,
            role,
            my_index,
        }
    }

    pub fn comm(&self) -> &Comm {
        &self.comm
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn role(&self) -> GroupRole {
        self.role
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Group rank of the calling world rank, if it is a member.
    pub fn group_rank(&self) -> Option<usize> {
        self.my_index
    }

    pub fn world_rank_of(&self, group_rank: usize) -> usize {
        self.members[group_rank]
    }

    pub fn group_rank_of(&self, world_rank: usize) -> Option<usize> {
        self.members.binary_search(&world_rank).ok()
    }

    fn me(&self) -> Result<usize> {
        self.my_index.ok_or(Error::Consistency(format!(
            "rank {} used a {:?} group it does not belong to",
            self.comm.rank(),
            self.role
        )))
    }

    pub fn send<T: Wire>(&self, group_dest: usize, payload: T) -> Result<()> {
        self.comm.send(self.members[group_dest], payload)
    }

    pub fn recv<T: Wire>(&self, group_src: usize) -> Result<T> {
        self.comm.recv(self.members[group_src])
    }

    /// Gather one value per member onto `root`, ordered by group rank.
    pub fn gather<T: Wire>(&self, root: usize, value: T) -> Result<Option<Vec<T>>> {
        let me = self.me()?;
        if me != root {
            self.send(root, value)?;
            return Ok(None);
        }
        let mut own = Some(value);
        let mut out = Vec::with_capacity(self.size());
        for g in 0..self.size() {
            if g == root {
                out.push(own.take().expect("own value"));
            } else {
                out.push(self.recv(g)?);
            }
        }
        Ok(Some(out))
    }

    pub fn broadcast<T: Wire + Clone>(&self, root: usize, value: Option<T>) -> Result<T> {
        let me = self.me()?;
        if me == root {
            let v = value.ok_or(Error::Consistency("broadcast root has no value".into()))?;
            for g in (0..self.size()).filter(|&g| g != root) {
                self.send(g, v.clone())?;
            }
            Ok(v)
        } else {
            self.recv(root)
        }
    }

    pub fn allgather<T: Wire + Clone>(&self, value: T) -> Result<Vec<T>> {
        let gathered = self.gather(0, value)?;
        self.broadcast(0, gathered)
    }

    /// Sum over members, combined in ascending group-rank order on group
    /// rank 0 and broadcast, so every member sees the same bits.
    pub fn allreduce_sum(&self, value: f64) -> Result<f64> {
        let gathered = self.gather(0, value)?;
        let sum = gathered.map(|v| v.into_iter().fold(0.0, |acc, x| acc + x));
        self.broadcast(0, sum)
    }

    pub fn barrier(&self) -> Result<()> {
        let gathered = self.gather(0, ())?;
        self.broadcast(0, gathered.map(|_| ()))
    }
}

/// Split the world into the active group (one rank per GPU part, world rank
/// `alpha * k` holding group rank `k`) and the inactive group holding the
/// rest. Returns the group the calling rank belongs to.
pub fn split_active(comm: &Comm, pm: &PartitionMap) -> Result<CommGroup> {
    if comm.size() != pm.n_cpu() {
        return Err(Error::DimensionMismatch {
            expected: pm.n_cpu(),
            got: comm.size(),
        });
    }
    let (active, inactive): (Vec<usize>, Vec<usize>) =
        (0..pm.n_cpu()).partition(|&r| pm.is_active(r));
    Ok(if pm.is_active(comm.rank()) {
        CommGroup::new(comm.clone(), active, GroupRole::Active)
    } else {
        CommGroup::new(comm.clone(), inactive, GroupRole::Inactive)
    })
}

/// Coefficient storage in the simulated device address space.
///
/// Only the owning rank may touch it, and every fill is counted.
#[derive(Debug, Clone)]
pub struct DeviceBuffer {
    owner: usize,
    data: Vec<f64>,
    transfers: u64,
    bytes: u64,
}

impl DeviceBuffer {
    pub fn allocate(comm: &Comm, len: usize) -> Self {
        comm.record_device_allocation();
        DeviceBuffer {
            owner: comm.rank(),
            data: vec![0.0; len],
            transfers: 0,
            bytes: 0,
        }
    }

    fn check_owner(&self, comm: &Comm) -> Result<()> {
        if comm.rank() != self.owner {
            return Err(Error::DeviceAccess {
                owner: self.owner,
                rank: comm.rank(),
            });
        }
        Ok(())
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Fill `values.len()` slots starting at `offset` in one transfer.
    pub fn write_segment(&mut self, comm: &Comm, offset: usize, values: &[f64]) -> Result<()> {
        self.check_owner(comm)?;
        let end = offset + values.len();
        if end > self.data.len() {
            return Err(Error::OutOfRange {
                what: "device buffer end",
                value: end,
                limit: self.data.len(),
            });
        }
        self.data[offset..end].copy_from_slice(values);
        self.transfers += 1;
        self.bytes += (values.len() * 8) as u64;
        Ok(())
    }

    /// Copy a host-staged array of the full buffer length in one transfer.
    pub fn upload(&mut self, comm: &Comm, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: values.len(),
            });
        }
        self.write_segment(comm, 0, values)?;
        comm.record_transfer(TrafficCategory::HostStaged, values.len() * 8);
        Ok(())
    }

    pub fn read(&self, comm: &Comm) -> Result<&[f64]> {
        self.check_owner(comm)?;
        Ok(&self.data)
    }

    /// Number of fills since allocation.
    pub fn transfers(&self) -> u64 {
        self.transfers
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::make_partition_map;

    const MODES: [SchedulerMode; 2] = [SchedulerMode::Concurrent, SchedulerMode::Deterministic];

    #[test]
    fn single_rank_returns_id() {
        for mode in MODES {
            let run = run_world(1, mode, |c| Ok(c.rank())).unwrap();
            assert_eq!(run.results, vec![0]);
        }
    }

    #[test]
    fn ring_exchange() {
        for mode in MODES {
            let run = run_world(4, mode, |c| {
                let n = c.size();
                c.send((c.rank() + 1) % n, c.rank())?;
                c.recv::<usize>((c.rank() + n - 1) % n)
            })
            .unwrap();
            assert_eq!(run.results, vec![3, 0, 1, 2]);
        }
    }

    #[test]
    fn payload_bytes_and_fifo() {
        for mode in MODES {
            let payload: Vec<f64> = (0..11).map(|i| i as f64 * 0.5 - 1.0).collect();
            let expect = payload.clone();
            let run = run_world(2, mode, |c| {
                if c.rank() == 1 {
                    c.send(0, payload.clone())?;
                    c.send(0, vec![42.0])?;
                    Ok(vec![])
                } else {
                    let a: Vec<f64> = c.recv(1)?;
                    let b: Vec<f64> = c.recv(1)?;
                    Ok(vec![a, b])
                }
            })
            .unwrap();
            assert_eq!(run.results[0][0], expect);
            assert_eq!(run.results[0][1], vec![42.0]);
            assert_eq!(run.traffic[1].rank_to_rank.bytes_sent, 88 + 8);
            assert_eq!(run.traffic[0].rank_to_rank.bytes_received, 88 + 8);
        }
    }

    #[test]
    fn loopback_send() {
        let run = run_world(1, SchedulerMode::Deterministic, |c| {
            c.send(0, 7usize)?;
            c.recv::<usize>(0)
        })
        .unwrap();
        assert_eq!(run.results, vec![7]);
    }

    #[test]
    fn many_to_one_by_source() {
        for mode in MODES {
            let run = run_world(4, mode, |c| {
                if c.rank() == 0 {
                    let mut got = Vec::new();
                    for src in [3, 1, 2] {
                        got.push(c.recv::<Vec<usize>>(src)?);
                    }
                    Ok(got)
                } else {
                    c.send(0, vec![c.rank(); c.rank()])?;
                    Ok(vec![])
                }
            })
            .unwrap();
            let mut got = run.results[0].clone();
            got.sort();
            assert_eq!(got, vec![vec![1], vec![2, 2], vec![3, 3, 3]]);
        }
    }

    #[test]
    fn deadlock_detected() {
        for mode in MODES {
            let err = run_world(3, mode, |c| {
                if c.rank() == 2 {
                    return Ok(0.0);
                }
                c.recv::<f64>(2)
            })
            .unwrap_err();
            assert!(matches!(err, Error::Deadlock { .. }), "{err:?}");
        }
    }

    #[test]
    fn failing_rank_aborts_world() {
        for mode in MODES {
            let err = run_world(3, mode, |c| {
                if c.rank() == 1 {
                    return Err(Error::Consistency("boom".into()));
                }
                c.recv::<f64>(1)
            })
            .unwrap_err();
            match err {
                Error::RankFailed { rank, message } => {
                    assert_eq!(rank, 1);
                    assert!(message.contains("boom"));
                }
                e => panic!("unexpected {e:?}"),
            }
        }
    }

    #[test]
    fn panicking_rank_reported() {
        let err = run_world(2, SchedulerMode::Concurrent, |c| {
            if c.rank() == 0 {
                panic!("rank zero exploded");
            }
            c.recv::<u8>(0)
        })
        .unwrap_err();
        assert!(matches!(err, Error::RankFailed { rank: 0, .. }));
    }

    #[test]
    fn wrong_payload_type() {
        let err = run_world(1, SchedulerMode::Deterministic, |c| {
            c.send(0, 1.0f64)?;
            c.recv::<usize>(0)
        })
        .unwrap_err();
        assert!(matches!(err, Error::RankFailed { rank: 0, .. }));
    }

    #[test]
    fn split_active_membership() {
        let pm = make_partition_map(&[1; 4], 2).unwrap();
        let run = run_world(4, SchedulerMode::Deterministic, |c| {
            let g = split_active(c, &pm)?;
            Ok((g.role(), g.members().to_vec(), g.group_rank()))
        })
        .unwrap();
        assert_eq!(run.results[0], (GroupRole::Active, vec![0, 2], Some(0)));
        assert_eq!(run.results[2], (GroupRole::Active, vec![0, 2], Some(1)));
        assert_eq!(run.results[1], (GroupRole::Inactive, vec![1, 3], Some(0)));
        assert_eq!(run.results[3], (GroupRole::Inactive, vec![1, 3], Some(1)));

        let pm1 = make_partition_map(&[1; 3], 1).unwrap();
        let run = run_world(3, SchedulerMode::Deterministic, |c| {
            Ok(split_active(c, &pm1)?.members().to_vec())
        })
        .unwrap();
        assert!(run.results.iter().all(|m| m == &vec![0, 1, 2]));

        let pm8 = make_partition_map(&[1; 8], 8).unwrap();
        let run = run_world(8, SchedulerMode::Deterministic, |c| {
            let g = split_active(c, &pm8)?;
            Ok((g.role(), g.members().to_vec()))
        })
        .unwrap();
        assert_eq!(run.results[0], (GroupRole::Active, vec![0]));
        assert!(run.results[1..]
            .iter()
            .all(|(r, m)| *r == GroupRole::Inactive && m == &(1..8).collect::<Vec<_>>()));
    }

    #[test]
    fn group_collectives() {
        for mode in MODES {
            let run = run_world(5, mode, |c| {
                let g = c.world_group();
                let s = g.allreduce_sum(c.rank() as f64 + 0.5)?;
                let all = g.allgather(c.rank() * 10)?;
                g.barrier()?;
                Ok((s, all))
            })
            .unwrap();
            for (s, all) in run.results {
                assert_eq!(s, 12.5);
                assert_eq!(all, vec![0, 10, 20, 30, 40]);
            }
        }
    }

    #[test]
    fn device_buffer_ownership() {
        let run = run_world(2, SchedulerMode::Deterministic, |c| {
            let mut buf = DeviceBuffer::allocate(c, 4);
            buf.write_segment(c, 1, &[1.0, 2.0])?;
            let other = c.world_group();
            // a buffer handed to another rank must refuse access there
            if c.rank() == 0 {
                c.send(1, (buf.len(), buf.transfers()))?;
            } else {
                let _: (usize, u64) = c.recv(0)?;
            }
            other.barrier()?;
            Ok(buf)
        })
        .unwrap();
        let buf = &run.results[0];
        assert_eq!(buf.transfers(), 1);
        assert_eq!(buf.bytes(), 16);
        assert_eq!(run.traffic[0].device_allocations, 1);
        let err = run_world(2, SchedulerMode::Deterministic, |c| {
            let b = buf.clone();
            b.read(c).map(|s| s.len())
        })
        .unwrap_err();
        assert!(matches!(err, Error::RankFailed { rank: 1, .. }));
    }
}
