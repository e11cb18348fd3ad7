//! Rank-count recommendation from the cost model.

use std::fmt;

use repart_core::costmodel::{
    best_homogeneous, optimize_ranks, recommend_alpha, CommCostParams, CostCurves, NodeTopology,
    RankChoice, Resources, SpeedupCurve, TransferLoad,
};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct AdviseInput {
    pub n_cpu: usize,
    pub n_gpus: usize,
    pub curves: CostCurves,
    pub comm: CommCostParams,
    pub moved_coeffs: f64,
    pub oversub_max: usize,
}

/// Ideal speed-ups with unit single-rank costs for both parts.
pub fn ideal_curves() -> CostCurves {
    CostCurves {
        t_as_1: 100.0,
        t_ls_1: 100.0,
        s_as: SpeedupCurve::Ideal,
        s_ls: SpeedupCurve::Ideal,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advice {
    pub heterogeneous: RankChoice,
    pub alpha: usize,
    /// `(n, T(n))` of the best equal split.
    pub homogeneous: (usize, f64),
}

impl fmt::Display for Advice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = &self.heterogeneous;
        writeln!(f, "n_as* = {}, n_ls* = {}", h.n_as, h.n_ls)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(
            f,
            "homogeneous: n = {}, predicted {}",
            self.homogeneous.0, self.homogeneous.1
        )?;
        writeln!(f, "heterogeneous: predicted {}", h.predicted)?;
        let verdict = if h.predicted < self.homogeneous.1 {
            "heterogeneous"
        } else {
            "homogeneous"
        };
        write!(f, "recommended: {verdict}")
    }
}

pub fn advise(input: &AdviseInput) -> Result<Advice> {
    let alpha = recommend_alpha(&NodeTopology {
        n_cpu_cores: input.n_cpu,
        n_gpus: input.n_gpus,
    })?;
    // tabulated curves bound the search to the measured range
    let limit = |n: usize, c: &SpeedupCurve| c.max_n().map_or(n, |m| n.min(m));
    let n_cpu = limit(limit(input.n_cpu, &input.curves.s_as), &input.curves.s_ls);
    // search in solver ranks directly; oversubscription is folded in
    let resources = Resources {
        n_cpu,
        n_gpu: limit(input.n_gpus * input.oversub_max, &input.curves.s_ls),
        oversub_max: 1,
    };
    let load = TransferLoad {
        moved_coeffs: input.moved_coeffs,
    };
    let heterogeneous = optimize_ranks(&input.curves, &input.comm, &load, &resources)?;
    // an equal split is bounded by both rank budgets
    let homogeneous = best_homogeneous(&input.curves, n_cpu.min(resources.n_gpu))?;
    Ok(Advice {
        heterogeneous,
        alpha,
        homogeneous,
    })
}
