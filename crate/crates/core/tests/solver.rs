mod common;

use common::{grid_parts, partition, Part};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use repart_core::oracle::{gather_vector, reference_global_assemble, reference_solve};
use repart_core::repart::repartition;
use repart_core::solver::{cg_solve, spmv, HaloNeighbor};
use repart_core::transport::{run_world, SchedulerMode};

/// Solve `A x = b_global` on the repartitioned system; returns the gathered
/// solution and the iteration count.
fn distributed_solve(parts: &[Part], alpha: usize, b: &[f64], tol: f64) -> (Vec<f64>, usize, bool) {
    let pm = partition(parts, alpha);
    let run = run_world(parts.len(), SchedulerMode::Concurrent, |comm| {
        let (m, i) = &parts[comm.rank()];
        let sys = repartition(m, i, &pm, comm)?;
        let Some(a) = sys.active() else { return Ok(None) };
        let rows = a.matrix().owned_range();
        let (x, rep) = cg_solve(a.matrix(), a.halo(), &b[rows], tol, 1000, a.comm())?;
        Ok(gather_vector(a, &x)?.map(|x| (x, rep.iterations, rep.converged)))
    })
    .unwrap();
    run.results.into_iter().flatten().next().unwrap()
}

#[test]
fn chain_halo_plan() {
    let (_, parts) = grid_parts(8, 1, 1, 4);
    let pm = partition(&parts, 2);
    let run = run_world(4, SchedulerMode::Deterministic, |comm| {
        let (m, i) = &parts[comm.rank()];
        let sys = repartition(m, i, &pm, comm)?;
        Ok(sys.active().map(|a| a.halo().clone()))
    })
    .unwrap();
    let p0 = run.results[0].clone().unwrap();
    assert_eq!(p0.neighbors, vec![HaloNeighbor { gpu_rank: 1, send: vec![3], recv: vec![0] }]);
    let p1 = run.results[2].clone().unwrap();
    assert_eq!(p1.neighbors, vec![HaloNeighbor { gpu_rank: 0, send: vec![0], recv: vec![0] }]);
}

#[test]
fn chain_spmv_of_ones() {
    let (_, parts) = grid_parts(8, 1, 1, 4);
    let pm = partition(&parts, 2);
    let run = run_world(4, SchedulerMode::Deterministic, |comm| {
        let (m, i) = &parts[comm.rank()];
        let sys = repartition(m, i, &pm, comm)?;
        let Some(a) = sys.active() else { return Ok(None) };
        let y = spmv(a.matrix(), a.halo(), &[1.0; 4], a.comm())?;
        Ok(Some(y))
    })
    .unwrap();
    assert_eq!(run.results[0].as_deref(), Some(&[1.0, 0.0, 0.0, 0.0][..]));
    assert_eq!(run.results[2].as_deref(), Some(&[0.0, 0.0, 0.0, 1.0][..]));
}

#[test]
fn spmv_matches_sequential_product() {
    let (g, parts) = grid_parts(6, 5, 8, 8);
    let reference = reference_global_assemble(&g).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let x: Vec<f64> = (0..g.total_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let expected = reference.matvec(&x).unwrap();
    for alpha in [1, 2, 4, 8] {
        let pm = partition(&parts, alpha);
        let run = run_world(8, SchedulerMode::Concurrent, |comm| {
            let (m, i) = &parts[comm.rank()];
            let sys = repartition(m, i, &pm, comm)?;
            let Some(a) = sys.active() else { return Ok(None) };
            let y = spmv(a.matrix(), a.halo(), &x[a.matrix().owned_range()], a.comm())?;
            gather_vector(a, &y)
        })
        .unwrap();
        let y = run.results[0].clone().unwrap();
        for (a, b) in y.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "alpha {alpha}: {a} vs {b}");
        }
    }
}

#[test]
fn chain_cg_solution() {
    let (_, parts) = grid_parts(8, 1, 1, 8);
    for alpha in [1, 2, 4, 8] {
        let (x, iters, converged) = distributed_solve(&parts, alpha, &[1.0; 8], 1e-12);
        assert!(converged);
        assert!(iters <= 8, "alpha {alpha}: {iters} iterations");
        for (xi, want) in x.iter().zip([4.0, 7.0, 9.0, 10.0, 10.0, 9.0, 7.0, 4.0]) {
            assert!((xi - want).abs() <= 1e-10, "alpha {alpha}: {x:?}");
        }
    }
}

#[test]
fn zero_rhs_returns_zero() {
    let (_, parts) = grid_parts(4, 4, 4, 2);
    let (x, iters, converged) = distributed_solve(&parts, 1, &[0.0; 64], 1e-8);
    assert!(converged);
    assert_eq!(iters, 0);
    assert!(x.iter().all(|&v| v == 0.0));
}

#[test]
fn cube_solution_matches_reference() {
    let (g, parts) = grid_parts(20, 20, 20, 4);
    let a = reference_global_assemble(&g).unwrap();
    let b = vec![1.0; g.total_cells()];
    let want = reference_solve(&a, &b, 1e-12).unwrap();
    for alpha in [1, 4] {
        let (x, _, converged) = distributed_solve(&parts, alpha, &b, 1e-10);
        assert!(converged);
        let err = x.iter().zip(&want).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let scale = want.iter().map(|q| q * q).sum::<f64>().sqrt();
        assert!(err / scale <= 1e-8, "alpha {alpha}: relative error {}", err / scale);
    }
}

#[test]
fn solve_is_bitwise_repeatable() {
    let (_, parts) = grid_parts(6, 6, 6, 6);
    let b: Vec<f64> = (0..216).map(|i| (i % 7) as f64 - 3.0).collect();
    let first = distributed_solve(&parts, 2, &b, 1e-9);
    for _ in 0..4 {
        assert_eq!(distributed_solve(&parts, 2, &b, 1e-9), first);
    }
}
