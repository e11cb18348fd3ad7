//! Timestep cost model for split assembly / solve rank counts.
//!
//! With `n` ranks doing both parts, a timestep costs
//! `T(n) = T_AS(1)/S_AS(n) + T_LS(1)/S_LS(n)`. Choosing the assembly and
//! solver rank counts independently adds a transfer term between the two
//! groups: `T(n_as, n_ls) = T_AS(n_as) + T_LS(n_ls) + T_R`, with
//! `T_R = beta * moved_coeffs + lambda * n_messages`.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Speed-up `S(n)` of one component; `S(1) = 1` for every variant.
#[derive(Debug, Clone, PartialEq)]
pub enum SpeedupCurve {
    /// `S(n) = n`.
    Ideal,
    /// Linear up to `peak`, flat afterwards.
    Capped { peak: usize },
    /// Linear up to `peak`, then `peak * peak / n`.
    Degrading { peak: usize },
    /// Measured speed-ups keyed by rank count.
    Table(BTreeMap<usize, f64>),
}

impl SpeedupCurve {
    pub fn speedup(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::CurveDomain { n });
        }
        let nf = n as f64;
        Ok(match self {
            SpeedupCurve::Ideal => nf,
            SpeedupCurve::Capped { peak } => nf.min(*peak as f64),
            SpeedupCurve::Degrading { peak } => {
                let p = *peak as f64;
                if nf <= p {
                    nf
                } else {
                    p * (p / nf)
                }
            }
            SpeedupCurve::Table(t) => *t.get(&n).ok_or(Error::CurveDomain { n })?,
        })
    }

    /// Largest rank count the curve is defined for.
    pub fn max_n(&self) -> Option<usize> {
        match self {
            SpeedupCurve::Table(t) => t.keys().next_back().copied(),
            _ => None,
        }
    }
}

/// Single-rank costs and speed-up curves of both components.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCurves {
    pub t_as_1: f64,
    pub t_ls_1: f64,
    pub s_as: SpeedupCurve,
    pub s_ls: SpeedupCurve,
}

impl CostCurves {
    pub fn t_as(&self, n: usize) -> Result<f64> {
        Ok(self.t_as_1 / self.s_as.speedup(n)?)
    }

    pub fn t_ls(&self, n: usize) -> Result<f64> {
        Ok(self.t_ls_1 / self.s_ls.speedup(n)?)
    }
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    n: usize,
    t_as: f64,
    t_ls: f64,
}

/// Read measured timings (`n,t_as,t_ls` with a header row). The `n = 1`
/// row defines the single-rank costs.
pub fn read_curves_csv<R: Read>(input: R) -> Result<CostCurves> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<CurveRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse {
            line: i + 2,
            reason: e.to_string(),
        })?;
        if row.n == 0 || !(row.t_as > 0.0) || !(row.t_ls > 0.0) {
            return Err(Error::Parse {
                line: i + 2,
                reason: "n must be >= 1 and times positive".into(),
            });
        }
        if rows.insert(row.n, (row.t_as, row.t_ls)).is_some() {
            return Err(Error::Parse {
                line: i + 2,
                reason: format!("duplicate row for n = {}", row.n),
            });
        }
    }
    let &(t_as_1, t_ls_1) = rows.get(&1).ok_or(Error::Parse {
        line: 1,
        reason: "curve table needs a row for n = 1".into(),
    })?;
    let s_as = rows.iter().map(|(&n, &(a, _))| (n, t_as_1 / a)).collect();
    let s_ls = rows.iter().map(|(&n, &(_, l))| (n, t_ls_1 / l)).collect();
    Ok(CostCurves {
        t_as_1,
        t_ls_1,
        s_as: SpeedupCurve::Table(s_as),
        s_ls: SpeedupCurve::Table(s_ls),
    })
}

/// Linear transfer-cost parameters between the two rank groups.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommCostParams {
    /// Seconds per coefficient moved.
    pub beta: f64,
    /// Seconds per message.
    pub lambda: f64,
}

impl CommCostParams {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if !(beta >= 0.0 && lambda >= 0.0) {
            return Err(Error::Consistency(format!(
                "transfer cost parameters must be non-negative (beta {beta}, lambda {lambda})"
            )));
        }
        Ok(CommCostParams { beta, lambda })
    }

    pub fn transfer_time(&self, moved_coeffs: f64, n_messages: f64) -> f64 {
        self.beta * moved_coeffs + self.lambda * n_messages
    }
}

/// Homogeneous timestep cost `T(n)`.
pub fn total_time(n: usize, curves: &CostCurves) -> Result<f64> {
    Ok(curves.t_as(n)? + curves.t_ls(n)?)
}

/// Heterogeneous timestep cost `T(n_as, n_ls)` including the transfer term.
pub fn total_time_hetero(
    n_as: usize,
    n_ls: usize,
    curves: &CostCurves,
    comm: &CommCostParams,
    moved_coeffs: f64,
    n_messages: f64,
) -> Result<f64> {
    Ok(curves.t_as(n_as)? + curves.t_ls(n_ls)? + comm.transfer_time(moved_coeffs, n_messages))
}

/// Hardware available to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resources {
    pub n_cpu: usize,
    pub n_gpu: usize,
    /// Solver ranks allowed per GPU.
    pub oversub_max: usize,
}

/// Coefficients moved per timestep; each assembling rank sends one message.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransferLoad {
    pub moved_coeffs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankChoice {
    pub n_as: usize,
    pub n_ls: usize,
    pub predicted: f64,
}

/// Exhaustive search over `n_as in 1..=N_CPU`, `n_ls in 1..=N_GPU * oversub`.
/// Ties go to the smaller `n_as`, then the smaller `n_ls`.
pub fn optimize_ranks(
    curves: &CostCurves,
    comm: &CommCostParams,
    load: &TransferLoad,
    resources: &Resources,
) -> Result<RankChoice> {
    let max_ls = resources.n_gpu * resources.oversub_max;
    if resources.n_cpu == 0 || max_ls == 0 {
        return Err(Error::EmptySearchSpace(format!(
            "{} CPU ranks, {} GPUs x {} ranks per GPU",
            resources.n_cpu, resources.n_gpu, resources.oversub_max
        )));
    }
    let mut best: Option<RankChoice> = None;
    for n_as in 1..=resources.n_cpu {
        for n_ls in 1..=max_ls {
            let t = total_time_hetero(n_as, n_ls, curves, comm, load.moved_coeffs, n_as as f64)?;
            if best.is_none_or(|b| t < b.predicted) {
                best = Some(RankChoice {
                    n_as,
                    n_ls,
                    predicted: t,
                });
            }
        }
    }
    Ok(best.expect("non-empty search space"))
}

/// Best `T(n)` with the same rank count for both parts; ties go to the
/// smaller `n`.
pub fn best_homogeneous(curves: &CostCurves, max_n: usize) -> Result<(usize, f64)> {
    if max_n == 0 {
        return Err(Error::EmptySearchSpace("no ranks".into()));
    }
    let mut best = (0, f64::INFINITY);
    for n in 1..=max_n {
        let t = total_time(n, curves)?;
        if t < best.1 {
            best = (n, t);
        }
    }
    Ok(best)
}

/// Cores and accelerators of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeTopology {
    pub n_cpu_cores: usize,
    pub n_gpus: usize,
}

/// Repartitioning ratio that keeps every core assembling and gives each GPU
/// one solver rank.
pub fn recommend_alpha(node: &NodeTopology) -> Result<usize> {
    let NodeTopology { n_cpu_cores, n_gpus } = *node;
    if n_gpus == 0 {
        return Err(Error::EmptySearchSpace("node has no GPUs".into()));
    }
    if n_cpu_cores == 0 || n_cpu_cores % n_gpus != 0 {
        let lower = n_cpu_cores - n_cpu_cores % n_gpus;
        let upper = lower + n_gpus;
        let suggested = if lower == 0 || n_cpu_cores - lower > upper - n_cpu_cores {
            upper
        } else {
            lower
        };
        return Err(Error::NonDivisibleTopology {
            cores: n_cpu_cores,
            gpus: n_gpus,
            suggested,
        });
    }
    Ok(n_cpu_cores / n_gpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> CostCurves {
        CostCurves {
            t_as_1: 100.0,
            t_ls_1: 100.0,
            s_as: SpeedupCurve::Ideal,
            s_ls: SpeedupCurve::Ideal,
        }
    }

    #[test]
    fn homogeneous_formula() {
        assert_eq!(total_time(4, &ideal()).unwrap(), 50.0);
        assert_eq!(total_time(1, &ideal()).unwrap(), 200.0);
        let flat = CostCurves {
            s_ls: SpeedupCurve::Capped { peak: 4 },
            ..ideal()
        };
        assert_eq!(total_time(64, &flat).unwrap(), 100.0 / 64.0 + 100.0 / 4.0);
        assert!(matches!(total_time(0, &flat), Err(Error::CurveDomain { n: 0 })));
    }

    #[test]
    fn heterogeneous_formula() {
        let c = CostCurves {
            s_ls: SpeedupCurve::Capped { peak: 4 },
            ..ideal()
        };
        let zero = CommCostParams::default();
        assert_eq!(
            total_time_hetero(64, 4, &c, &zero, 1e6, 64.0).unwrap(),
            c.t_as(64).unwrap() + c.t_ls(4).unwrap()
        );
        let unit = CommCostParams::new(1.0, 0.0).unwrap();
        assert_eq!(total_time_hetero(64, 4, &c, &unit, 1.0, 0.0).unwrap(), 27.5625);
        let p = CommCostParams::new(1e-9, 1e-6).unwrap();
        assert_eq!(p.transfer_time(22.0, 2.0), 1e-9 * 22.0 + 1e-6 * 2.0);
        assert!(CommCostParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn ideal_optimum_is_resource_maximum() {
        let r = Resources {
            n_cpu: 128,
            n_gpu: 4,
            oversub_max: 1,
        };
        let best = optimize_ranks(&ideal(), &CommCostParams::default(), &TransferLoad::default(), &r)
            .unwrap();
        assert_eq!((best.n_as, best.n_ls), (128, 4));
        assert_eq!(best.predicted, 100.0 / 128.0 + 25.0);
    }

    #[test]
    fn empty_search_space() {
        let r = Resources {
            n_cpu: 8,
            n_gpu: 0,
            oversub_max: 1,
        };
        assert!(matches!(
            optimize_ranks(&ideal(), &CommCostParams::default(), &TransferLoad::default(), &r),
            Err(Error::EmptySearchSpace(_))
        ));
    }

    #[test]
    fn ties_prefer_fewer_ranks() {
        let flat = CostCurves {
            t_as_1: 1.0,
            t_ls_1: 1.0,
            s_as: SpeedupCurve::Capped { peak: 2 },
            s_ls: SpeedupCurve::Capped { peak: 1 },
        };
        let r = Resources {
            n_cpu: 6,
            n_gpu: 3,
            oversub_max: 1,
        };
        let best =
            optimize_ranks(&flat, &CommCostParams::default(), &TransferLoad::default(), &r).unwrap();
        assert_eq!((best.n_as, best.n_ls), (2, 1));
    }

    #[test]
    fn degrading_curve_shape() {
        let s = SpeedupCurve::Degrading { peak: 4 };
        assert_eq!(s.speedup(1).unwrap(), 1.0);
        assert_eq!(s.speedup(4).unwrap(), 4.0);
        assert_eq!(s.speedup(8).unwrap(), 2.0);
        assert_eq!(s.speedup(64).unwrap(), 0.25);
    }

    #[test]
    fn alpha_recommendation() {
        let node = |c, g| NodeTopology {
            n_cpu_cores: c,
            n_gpus: g,
        };
        assert_eq!(recommend_alpha(&node(128, 4)).unwrap(), 32);
        assert_eq!(recommend_alpha(&node(64, 4)).unwrap(), 16);
        assert_eq!(recommend_alpha(&node(4, 4)).unwrap(), 1);
        assert_eq!(
            recommend_alpha(&node(6, 4)).unwrap_err(),
            Error::NonDivisibleTopology {
                cores: 6,
                gpus: 4,
                suggested: 4
            }
        );
        assert!(matches!(
            recommend_alpha(&node(7, 4)),
            Err(Error::NonDivisibleTopology { suggested: 8, .. })
        ));
        assert!(matches!(
            recommend_alpha(&node(2, 4)),
            Err(Error::NonDivisibleTopology { suggested: 4, .. })
        ));
        assert!(recommend_alpha(&node(4, 0)).is_err());
    }

    #[test]
    fn curves_from_csv() {
        let csv = "n,t_as,t_ls\n1,100,80\n2,50,40\n4,25,40\n";
        let c = read_curves_csv(csv.as_bytes()).unwrap();
        assert_eq!(c.t_as_1, 100.0);
        assert_eq!(c.s_ls.speedup(4).unwrap(), 2.0);
        assert_eq!(total_time(2, &c).unwrap(), 90.0);
        assert!(matches!(total_time(3, &c), Err(Error::CurveDomain { n: 3 })));
        assert_eq!(c.s_as.max_n(), Some(4));

        assert!(read_curves_csv("n,t_as,t_ls\n2,1,1\n".as_bytes()).is_err());
        assert!(read_curves_csv("n,t_as,t_ls\n1,1,x\n".as_bytes()).is_err());
        assert!(read_curves_csv("n,t_as,t_ls\n1,1,1\n1,1,1\n".as_bytes()).is_err());
        assert!(read_curves_csv("n,t_as,t_ls\n1,0,1\n".as_bytes()).is_err());
    }
}
