//! Clairvoyant benchmark: the best vector of per-SBS OFF times on a grid,
//! found by trying all of them against the recorded arrivals.
//!
//! Schedules that agree up to some slot share that prefix of the
//! simulation, so the search walks a tree instead of replaying every
//! schedule from scratch. Leaves are evaluated with the same slot step as
//! the online engine, so a policy whose OFF times lie on the grid is priced
//! identically in both.

use crate::energy::HarvestTrace;
use crate::engine::{
    build_ctx, plan_period, step, EngineError, PeriodCtx, SbsControl, ScenarioConfig, SimState,
};
use crate::network::Topology;

/// Default cap on the number of evaluated schedules.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("exhaustive search needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("search grid {grid} s is not a multiple of the slot {dt} s dividing the period")]
    GridMismatch { grid: f64, dt: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One period with its arrivals known in advance.
#[derive(Debug, Clone, Copy)]
pub struct KnownScenario<'a> {
    pub cfg: &'a ScenarioConfig,
    pub topology: &'a Topology,
    /// Arrivals of this period only.
    pub harvest: &'a HarvestTrace,
    /// Stored energy per SBS at the period start.
    pub stored: &'a [f64],
    pub period_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Best OFF time per SBS (seconds into the period), `None` for never.
    pub off_times: Vec<Option<f64>>,
    pub cost: f64,
    pub evaluations: u64,
    /// SBSs (1-based) whose OFF time was searched; the others had no users.
    pub searched: Vec<usize>,
}

struct Search<'c, 'a> {
    ctx: &'c PeriodCtx<'a>,
    stride: usize,
    grid_points: usize,
    /// SBS indices being searched, most significant first.
    searched: Vec<usize>,
    costs: Vec<f64>,
    evaluations: u64,
}

impl Search<'_, '_> {
    /// `chosen[i]` is the grid index at which `searched[i]` was switched OFF.
    fn walk(
        &mut self,
        mut st: SimState,
        undecided: u64,
        chosen: &mut Vec<Option<usize>>,
    ) -> Result<(), EngineError> {
        loop {
            if st.finished(self.ctx) {
                return self.leaf(st, chosen);
            }
            if st.slot.is_multiple_of(self.stride) {
                break;
            }
            step(self.ctx, &mut st, 0)?;
        }
        let branchable = undecided & st.mask();
        let k = st.slot / self.stride;
        // Non-empty subsets in increasing order, then the empty one last so
        // the state can be moved rather than cloned.
        let mut sub = branchable;
        while sub != 0 {
            let mut child = st.clone();
            step(self.ctx, &mut child, sub)?;
            let marked: Vec<usize> = (0..self.searched.len())
                .filter(|&i| sub >> self.searched[i] & 1 == 1)
                .collect();
            for &i in &marked {
                chosen[i] = Some(k);
            }
            self.walk(child, undecided & !sub, chosen)?;
            for &i in &marked {
                chosen[i] = None;
            }
            sub = (sub - 1) & branchable;
        }
        step(self.ctx, &mut st, 0)?;
        self.walk(st, undecided, chosen)
    }

    fn leaf(&mut self, mut st: SimState, chosen: &[Option<usize>]) -> Result<(), EngineError> {
        st.finish(self.ctx);
        let cost = st.total_cost(self.ctx);
        let n = self.grid_points;
        let ranges: Vec<(usize, usize)> = self
            .searched
            .iter()
            .zip(chosen)
            .map(|(&j, c)| match (c, st.sbs[j].depleted_at) {
                (Some(k), _) => (*k, *k),
                (None, Some(d)) => (d / self.stride + 1, n),
                (None, None) => (n, n),
            })
            .collect();
        let mut ks: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let idx = ks.iter().fold(0, |acc, &k| acc * (n + 1) + k);
            self.costs[idx] = cost;
            self.evaluations += 1;
            let mut i = ks.len();
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                if ks[i] < ranges[i].1 {
                    ks[i] += 1;
                    break;
                }
                ks[i] = ranges[i].0;
            }
        }
    }
}

/// Minimum-cost OFF-time vector over `{0, grid, 2 grid, ..., T}` (the last
/// point meaning never), priced with the engine's accounting. Ties go to
/// the lexicographically smallest vector.
pub fn offline_exhaustive(
    sc: &KnownScenario<'_>,
    grid_dt: f64,
    budget: u64,
) -> Result<OracleOutcome, OracleError> {
    let cfg = sc.cfg;
    cfg.validate()?;
    let n_slots = cfg.slots_per_period();
    let ratio = grid_dt / cfg.dt;
    let stride = ratio.round() as usize;
    if !(grid_dt > 0.0)
        || stride == 0
        || (ratio - stride as f64).abs() > 1e-9
        || !n_slots.is_multiple_of(stride)
    {
        return Err(OracleError::GridMismatch {
            grid: grid_dt,
            dt: cfg.dt,
        });
    }
    let grid_points = n_slots / stride;

    let plan = plan_period(cfg, sc.topology, sc.period_index)?;
    let controls: Vec<SbsControl> = plan
        .used
        .iter()
        .map(|&u| {
            if u {
                SbsControl::OffAt(None)
            } else {
                SbsControl::Idle
            }
        })
        .collect();
    let searched: Vec<usize> = (0..controls.len()).filter(|&j| plan.used[j]).collect();
    let required = (grid_points as u128 + 1).checked_pow(searched.len() as u32);
    let combos = match required {
        Some(r) if r <= budget as u128 => r as usize,
        _ => {
            return Err(OracleError::BudgetExceeded {
                required: required.unwrap_or(u128::MAX),
                budget,
            })
        }
    };
    let ctx = build_ctx(cfg, plan, controls, sc.harvest, sc.period_index, false);
    let undecided = searched.iter().fold(0u64, |m, &j| m | 1 << j);
    let mut search = Search {
        ctx: &ctx,
        stride,
        grid_points,
        searched,
        costs: vec![f64::NAN; combos],
        evaluations: 0,
    };
    let mut chosen = vec![None; search.searched.len()];
    search.walk(SimState::new(&ctx, sc.stored), undecided, &mut chosen)?;

    let (best, cost) =
        search
            .costs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bc), (i, &c)| {
                debug_assert!(!c.is_nan(), "schedule {i} not evaluated");
                if c < bc {
                    (i, c)
                } else {
                    (bi, bc)
                }
            });
    let mut off_times = vec![None; ctx.n_sbs];
    let mut rest = best;
    for &j in search.searched.iter().rev() {
        let k = rest % (grid_points + 1);
        rest /= grid_points + 1;
        off_times[j] = (k < grid_points).then_some(k as f64 * grid_dt);
    }
    Ok(OracleOutcome {
        off_times,
        cost,
        evaluations: search.evaluations,
        searched: search.searched.iter().map(|j| j + 1).collect(),
    })
}
