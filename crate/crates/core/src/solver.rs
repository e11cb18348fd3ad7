//! Distributed SpMV and conjugate gradient over the active communicator.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::matrix::{DistributedCooMatrix, PartitionMap};
use crate::transport::CommGroup;

/// Halo traffic toward one neighbouring GPU part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaloNeighbor {
    pub gpu_rank: usize,
    /// Local rows whose values the neighbour needs, in the order it expects.
    pub send: Vec<usize>,
    /// Halo slots filled from the neighbour, in arrival order.
    pub recv: Vec<usize>,
}

/// Halo exchange plan of one GPU part; neighbours ascending by rank.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HaloPlan {
    pub neighbors: Vec<HaloNeighbor>,
    pub n_halo: usize,
}

impl HaloPlan {
    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn send_volume(&self) -> usize {
        self.neighbors.iter().map(|n| n.send.len()).sum()
    }

    pub fn recv_volume(&self) -> usize {
        self.neighbors.iter().map(|n| n.recv.len()).sum()
    }
}

/// Derive the halo plan. Collective over the active group, whose group
/// rank `k` must be GPU part `k`.
pub fn build_halo_plan(
    matrix: &DistributedCooMatrix,
    pm: &PartitionMap,
    comm: &CommGroup,
) -> Result<HaloPlan> {
    let me = matrix.owner_gpu_rank();
    if comm.group_rank() != Some(me) || comm.size() != pm.n_gpu() {
        return Err(Error::Consistency(format!(
            "halo plan for GPU part {me} built on group rank {:?} of {}",
            comm.group_rank(),
            comm.size()
        )));
    }
    let mut requests: Vec<Vec<usize>> = vec![Vec::new(); pm.n_gpu()];
    let mut recv: Vec<Vec<usize>> = vec![Vec::new(); pm.n_gpu()];
    for (slot, &col) in matrix.halo_cols().iter().enumerate() {
        let owner = pm.gpu_owner_of_row(col).ok_or(Error::Consistency(format!(
            "halo column {col} is owned by no rank"
        )))?;
        if owner == me {
            return Err(Error::Consistency(format!(
                "halo column {col} is owned by GPU part {me} itself"
            )));
        }
        requests[owner].push(col);
        recv[owner].push(slot);
    }
    for k in (0..pm.n_gpu()).filter(|&k| k != me) {
        comm.send(k, requests[k].clone())?;
    }
    let owned = matrix.owned_range();
    let mut neighbors = Vec::new();
    for k in (0..pm.n_gpu()).filter(|&k| k != me) {
        let wanted: Vec<usize> = comm.recv(k)?;
        let send = wanted
            .into_iter()
            .map(|g| {
                if owned.contains(&g) {
                    Ok(g - owned.start)
                } else {
                    Err(Error::Consistency(format!(
                        "GPU part {k} requested column {g} not owned by part {me}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let recv = std::mem::take(&mut recv[k]);
        if !send.is_empty() || !recv.is_empty() {
            neighbors.push(HaloNeighbor {
                gpu_rank: k,
                send,
                recv,
            });
        }
    }
    Ok(HaloPlan {
        neighbors,
        n_halo: matrix.halo_cols().len(),
    })
}

/// Fetch the halo values of `x` from the neighbours.
pub fn halo_exchange(plan: &HaloPlan, x: &[f64], comm: &CommGroup) -> Result<Vec<f64>> {
    for n in plan.neighbors.iter().filter(|n| !n.send.is_empty()) {
        comm.send(n.gpu_rank, n.send.iter().map(|&i| x[i]).collect::<Vec<f64>>())?;
    }
    let mut halo = vec![0.0; plan.n_halo];
    for n in plan.neighbors.iter().filter(|n| !n.recv.is_empty()) {
        let vals: Vec<f64> = comm.recv(n.gpu_rank)?;
        if vals.len() != n.recv.len() {
            return Err(Error::DimensionMismatch {
                expected: n.recv.len(),
                got: vals.len(),
            });
        }
        for (&slot, v) in n.recv.iter().zip(vals) {
            halo[slot] = v;
        }
    }
    Ok(halo)
}

/// `y = A_local x + A_nonlocal x_halo`, accumulated in stored order.
pub fn spmv(
    matrix: &DistributedCooMatrix,
    plan: &HaloPlan,
    x: &[f64],
    comm: &CommGroup,
) -> Result<Vec<f64>> {
    if x.len() != matrix.n_owned() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_owned(),
            got: x.len(),
        });
    }
    let halo = halo_exchange(plan, x, comm)?;
    let mut y = matrix.local().matvec(x)?;
    let nl = matrix.nonlocal();
    for ((&r, &h), &v) in nl.rows().iter().zip(nl.cols()).zip(nl.vals()) {
        y[r] += v * halo[h];
    }
    Ok(y)
}

/// Global dot product; partial sums combined in ascending group-rank order.
pub fn dot(a: &[f64], b: &[f64], comm: &CommGroup) -> Result<f64> {
    let local = a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y);
    comm.allreduce_sum(local)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative true residual `||b - Ax|| / ||b||`.
    pub residual: f64,
    pub converged: bool,
    pub t_solve: Duration,
}

/// Iterations between recomputations of the true residual.
const TRUE_RESIDUAL_PERIOD: usize = 10;

/// Unpreconditioned conjugate gradient. Collective over the active group.
///
/// Convergence is declared on the relative 2-norm of the residual and
/// always confirmed against the true residual, so `converged` implies
/// `residual <= tol`. Hitting `max_iter` is reported, not an error.
pub fn cg_solve(
    matrix: &DistributedCooMatrix,
    plan: &HaloPlan,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    comm: &CommGroup,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = matrix.n_owned();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Consistency(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b, comm)?.sqrt();
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
                t_solve: start.elapsed(),
            },
        ));
    }
    let true_residual = |x: &[f64]| -> Result<Vec<f64>> {
        let ax = spmv(matrix, plan, x, comm)?;
        Ok(b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect())
    };

    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r, comm)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let q = spmv(matrix, plan, &p, comm)?;
        let pq = dot(&p, &q, comm)?;
        let step = rr / pq;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * q[i];
        }
        let mut fresh = false;
        if iterations % TRUE_RESIDUAL_PERIOD == 0 {
            r = true_residual(&x)?;
            fresh = true;
        }
        let mut rr_new = dot(&r, &r, comm)?;
        if rr_new.sqrt() / b_norm <= tol {
            if !fresh {
                r = true_residual(&x)?;
                rr_new = dot(&r, &r, comm)?;
            }
            if rr_new.sqrt() / b_norm <= tol {
                converged = true;
                rr = rr_new;
                break;
            }
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let residual = if converged {
        rr.sqrt() / b_norm
    } else {
        let r = true_residual(&x)?;
        dot(&r, &r, comm)?.sqrt() / b_norm
    };
    Ok((
        x,
        SolveReport {
            iterations,
            residual,
            converged,
            t_solve: start.elapsed(),
        },
    ))
}
