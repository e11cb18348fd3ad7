mod common;

use std::collections::BTreeSet;

use common::partition;
use proptest::prelude::*;
use repart_core::assembly::{assemble_grid, decompose_slab, perturb_coefficients, StructuredGrid};
use repart_core::costmodel::{
    best_homogeneous, optimize_ranks, total_time, total_time_hetero, CommCostParams, CostCurves,
    Resources, SpeedupCurve, TransferLoad,
};
use repart_core::matrix::{ldu_to_coo, LduMatrix, PartitionMap};
use repart_core::oracle::{gather_global, reference_global_assemble};
use repart_core::repart::repartition;
use repart_core::transport::{run_world, split_active, GroupRole, SchedulerMode, TrafficCategory};
use repart_core::update::{update, TransferMode};

fn random_ldu() -> impl Strategy<Value = LduMatrix> {
    (1usize..30).prop_flat_map(|n| {
        let faces = proptest::collection::btree_set((0..n, 0..n), 0..3 * n)
            .prop_map(|s| s.into_iter().filter(|(l, u)| l < u).collect::<Vec<_>>());
        (Just(n), faces).prop_flat_map(|(n, faces)| {
            let f = faces.len();
            (
                Just(n),
                Just(faces),
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(-5.0f64..5.0, f),
                proptest::collection::vec(-5.0f64..5.0, f),
            )
        })
    })
    .prop_map(|(n, faces, d, l, u)| {
        let (lo, up): (Vec<usize>, Vec<usize>) = faces.into_iter().unzip();
        LduMatrix::new(n, lo, up, d, l, u).unwrap()
    })
}

fn grid_case() -> impl Strategy<Value = (StructuredGrid, usize, usize)> {
    (1usize..7, 1usize..7, 2usize..9).prop_flat_map(|(x, y, z)| {
        let g = StructuredGrid::new(x, y, z).unwrap();
        let layers = g.dims()[g.cut_axis()];
        (Just(g), 1..=layers.min(6)).prop_flat_map(|(g, n)| {
            let divs: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
            (Just(g), Just(n), proptest::sample::select(divs))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ldu_round_trip_counts_and_symmetry(m in random_ldu()) {
        let coo = ldu_to_coo(&m);
        prop_assert_eq!(coo.nnz(), m.n_cells() + 2 * m.n_faces());
        let pattern: BTreeSet<(usize, usize)> = coo.triplets().map(|(r, c, _)| (r, c)).collect();
        prop_assert_eq!(pattern.len(), coo.nnz());
        for &(r, c) in &pattern {
            prop_assert!(pattern.contains(&(c, r)));
        }
        for f in 0..m.n_faces() {
            let (l, u) = (m.lower_addr()[f], m.upper_addr()[f]);
            prop_assert_eq!(coo.vals()[coo.find(l, u).unwrap()], m.upper_val()[f]);
            prop_assert_eq!(coo.vals()[coo.find(u, l).unwrap()], m.lower_val()[f]);
        }
    }

    #[test]
    fn partition_ranges_tile_the_cells(
        cells in proptest::collection::vec(1usize..20, 1..9),
        pick in 0usize..8,
    ) {
        let divs: Vec<usize> = (1..=cells.len()).filter(|d| cells.len() % d == 0).collect();
        let alpha = divs[pick % divs.len()];
        let pm = PartitionMap::new(&cells, alpha).unwrap();
        let total: usize = cells.iter().sum();
        let mut next = 0;
        for r in 0..pm.n_cpu() {
            prop_assert_eq!(pm.cpu_range(r).start, next);
            next = pm.cpu_range(r).end;
        }
        prop_assert_eq!(next, total);
        let mut next = 0;
        for k in 0..pm.n_gpu() {
            prop_assert_eq!(pm.gpu_range(k).start, next);
            next = pm.gpu_range(k).end;
        }
        prop_assert_eq!(next, total);
        for row in 0..total {
            let r = pm.cpu_owner_of_row(row).unwrap();
            prop_assert_eq!(pm.gpu_owner_of_row(row), Some(r / alpha));
        }
    }

    #[test]
    fn decomposition_mirrors_and_repeats((g, n, _) in grid_case()) {
        let parts = decompose_slab(&g, n).unwrap();
        prop_assert_eq!(&parts, &decompose_slab(&g, n).unwrap());
        let assembled = assemble_grid(&g, n).unwrap();
        for (p, (_, ifaces)) in assembled.iter().enumerate() {
            for b in ifaces {
                let q = b.neighbor_rank();
                let mirror = assembled[q].1.iter().find(|o| o.neighbor_rank() == p).unwrap();
                let mine: BTreeSet<(usize, usize)> =
                    b.rows().iter().zip(b.cols_remote()).map(|(&a, &c)| (a, c)).collect();
                let theirs: BTreeSet<(usize, usize)> =
                    mirror.rows().iter().zip(mirror.cols_remote()).map(|(&a, &c)| (c, a)).collect();
                prop_assert_eq!(mine, theirs);
                prop_assert!(b.values().iter().all(|&v| v == -1.0));
            }
        }
        let a = reference_global_assemble(&g).unwrap();
        let d = 2.0 * g.dimension() as f64;
        let mut row_sums = vec![0.0; g.total_cells()];
        for (r, c, v) in a.triplets() {
            prop_assert_eq!(a.vals()[a.find(c, r).unwrap()], v);
            if r == c {
                prop_assert_eq!(v, d);
            }
            row_sums[r] += v;
        }
        prop_assert!(row_sums.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn repartition_conserves_entries((g, n, alpha) in grid_case()) {
        let parts = assemble_grid(&g, n).unwrap();
        let pm = partition(&parts, alpha);
        let mut before = Vec::new();
        for (r, (m, ifaces)) in parts.iter().enumerate() {
            let off = pm.cpu_range(r).start;
            before.extend(ldu_to_coo(m).triplets().map(|(i, j, v)| (off + i, off + j, v.to_bits())));
            for b in ifaces {
                let q = pm.cpu_range(b.neighbor_rank()).start;
                for ((&i, &j), &v) in b.rows().iter().zip(b.cols_remote()).zip(b.values()) {
                    before.push((off + i, q + j, v.to_bits()));
                }
            }
        }
        before.sort_unstable();
        let run = run_world(n, SchedulerMode::Concurrent, |comm| {
            let (m, i) = &parts[comm.rank()];
            let sys = repartition(m, i, &pm, comm)?;
            Ok(sys.active().map(|a| a.matrix().global_triplets()))
        }).unwrap();
        let mut after: Vec<(usize, usize, u64)> = run
            .results
            .into_iter()
            .flatten()
            .flatten()
            .map(|(i, j, v)| (i, j, v.to_bits()))
            .collect();
        after.sort_unstable();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn update_never_touches_the_pattern((g, n, alpha) in grid_case(), step in 0usize..30, staged: bool) {
        let parts = assemble_grid(&g, n).unwrap();
        let pm = partition(&parts, alpha);
        let mode = if staged { TransferMode::Staged } else { TransferMode::Direct };
        let run = run_world(n, SchedulerMode::Deterministic, |comm| {
            let (m, i) = &parts[comm.rank()];
            let mut sys = repartition(m, i, &pm, comm)?;
            let shape = |s: &repart_core::repart::RankSystem| {
                s.active().map(|a| {
                    let m = a.matrix();
                    (m.local().rows().to_vec(), m.local().cols().to_vec(),
                     m.nonlocal().rows().to_vec(), m.nonlocal().cols().to_vec(), m.halo_cols().to_vec())
                })
            };
            let before = shape(&sys);
            let (m2, i2) = perturb_coefficients(m, i, step)?;
            update(&mut sys, &m2, &i2, mode)?;
            let g = match sys.active() { Some(a) => gather_global(a)?, None => None };
            Ok((before == shape(&sys), g))
        }).unwrap();
        prop_assert!(run.results.iter().all(|r| r.0));
        let factor = 1.0 + step as f64 / 100.0;
        let want = repart_core::oracle::scale_diagonal(&reference_global_assemble(&g).unwrap(), factor);
        prop_assert_eq!(run.results[0].1.as_ref().unwrap(), &want);
    }

    #[test]
    fn traffic_is_conserved_and_split_agrees(
        n in 1usize..7,
        sends in proptest::collection::vec((0usize..7, 0usize..7, 0usize..40, 0usize..3), 0..30),
    ) {
        let sends: Vec<_> = sends.into_iter().map(|(a, b, len, c)| (a % n, b % n, len, c)).collect();
        let cat = |c: usize| [TrafficCategory::RankToRank, TrafficCategory::DeviceDirect, TrafficCategory::HostStaged][c];
        let cells = vec![3; n];
        let divs: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
        let pm = PartitionMap::new(&cells, *divs.last().unwrap()).unwrap();
        let run = run_world(n, SchedulerMode::Concurrent, |comm| {
            let me = comm.rank();
            for &(src, dst, len, c) in &sends {
                if src == me {
                    comm.send_as(dst, vec![0.5f64; len], cat(c))?;
                }
            }
            for &(src, dst, len, _) in &sends {
                if dst == me {
                    let v: Vec<f64> = comm.recv(src)?;
                    assert_eq!(v.len(), len);
                }
            }
            let g = split_active(comm, &pm)?;
            Ok((g.role(), g.members().to_vec()))
        }).unwrap();
        let total = run.total_traffic();
        for c in 0..3 {
            let ch = total.category(cat(c));
            prop_assert_eq!(ch.bytes_sent, ch.bytes_received);
            prop_assert_eq!(ch.messages_sent, ch.messages_received);
        }
        let active: Vec<usize> = (0..n).filter(|&r| r % pm.alpha() == 0).collect();
        for (r, (role, members)) in run.results.iter().enumerate() {
            prop_assert!(members.contains(&r));
            prop_assert_eq!(*role == GroupRole::Active, active.contains(&r));
            if *role == GroupRole::Active {
                prop_assert_eq!(members, &active);
            } else {
                prop_assert!(members.iter().all(|m| !active.contains(m)));
            }
        }
    }
}

fn table(speedups: &[f64]) -> SpeedupCurve {
    SpeedupCurve::Table(speedups.iter().enumerate().map(|(i, &s)| (i + 1, s)).collect())
}

proptest! {
    #[test]
    fn single_rank_time_is_exact(t_as in 1e-3f64..1e3, t_ls in 1e-3f64..1e3) {
        let c = CostCurves { t_as_1: t_as, t_ls_1: t_ls, s_as: SpeedupCurve::Ideal, s_ls: SpeedupCurve::Degrading { peak: 3 } };
        prop_assert_eq!(total_time(1, &c).unwrap(), t_as + t_ls);
    }

    #[test]
    fn transfer_costs_are_monotone(
        beta in 0.0f64..1.0, lambda in 0.0f64..1.0, db in 0.0f64..1.0, dl in 0.0f64..1.0,
        moved in 0.0f64..1e6, n_as in 1usize..64, n_ls in 1usize..8,
    ) {
        let c = CostCurves { t_as_1: 10.0, t_ls_1: 10.0, s_as: SpeedupCurve::Ideal, s_ls: SpeedupCurve::Capped { peak: 4 } };
        let low = CommCostParams::new(beta, lambda).unwrap();
        let high = CommCostParams::new(beta + db, lambda + dl).unwrap();
        let msgs = n_as as f64;
        prop_assert!(
            total_time_hetero(n_as, n_ls, &c, &high, moved, msgs).unwrap()
                >= total_time_hetero(n_as, n_ls, &c, &low, moved, msgs).unwrap()
        );
    }

    #[test]
    fn ideal_curves_pick_resource_maxima(n_cpu in 1usize..80, n_gpu in 1usize..9) {
        let c = CostCurves { t_as_1: 100.0, t_ls_1: 100.0, s_as: SpeedupCurve::Ideal, s_ls: SpeedupCurve::Ideal };
        let r = Resources { n_cpu, n_gpu, oversub_max: 1 };
        let got = optimize_ranks(&c, &CommCostParams::default(), &TransferLoad::default(), &r).unwrap();
        prop_assert_eq!((got.n_as, got.n_ls), (n_cpu, n_gpu));
    }

    #[test]
    fn heterogeneous_never_loses_to_homogeneous(
        as_gain in proptest::collection::vec(1.0f64..1.5, 31),
        ls_peak in 1usize..8,
        ls_decay in 0.5f64..0.99,
        n_gpu in 1usize..4,
    ) {
        // assembly keeps scaling, the solver peaks early and then degrades
        let mut s_as = vec![1.0];
        for g in &as_gain {
            let last = *s_as.last().unwrap();
            s_as.push(last * g);
        }
        let mut s_ls = vec![1.0];
        for n in 2..=32 {
            let last: f64 = *s_ls.last().unwrap();
            s_ls.push(if n <= ls_peak { n as f64 } else { last * ls_decay });
        }
        let c = CostCurves { t_as_1: 50.0, t_ls_1: 80.0, s_as: table(&s_as), s_ls: table(&s_ls) };
        let oversub = 8;
        let r = Resources { n_cpu: 32, n_gpu, oversub_max: oversub };
        let got = optimize_ranks(&c, &CommCostParams::default(), &TransferLoad::default(), &r).unwrap();
        let (_, homo) = best_homogeneous(&c, (n_gpu * oversub).min(32)).unwrap();
        prop_assert!(got.predicted <= homo);
        let mut best = f64::INFINITY;
        for a in 1..=32 {
            for l in 1..=n_gpu * oversub {
                best = best.min(50.0 / s_as[a - 1] + 80.0 / s_ls[l - 1]);
            }
        }
        prop_assert_eq!(got.predicted, best);
    }
}
