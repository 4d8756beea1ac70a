//! Time-stepped simulation of the SBS ON/OFF game.
//!
//! A replication places the nodes, samples (or replays) the energy arrivals
//! and runs `horizon_periods` periods of length `period`. At each period
//! start every SBS is ON, prices are frozen from that association, SBSs
//! without users are parked OFF, and each remaining SBS follows its policy
//! until it switches OFF voluntarily, runs out of energy, or the period ends.

pub mod cache;
mod period;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyError, EnergyState, HarvestParams, HarvestTrace, PowerModelParams};
use crate::network::{place_nodes, NetworkError, NetworkState, PlacementParams, Topology};
use crate::pricing::{freeze_prices, rent_price, CostWeights, PriceTag, PricingError};
use crate::rng::{SimRng, Streams};
use crate::schedulers::{Decision, PolicySpec, ScheduleError};

use cache::{evaluate, PriceParams};
pub use period::{off_slot, run_subproblem, SbsControl, Subproblem, SubproblemOutcome};
pub(crate) use period::{step, Epoch, PeriodCtx, SimState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> EngineError {
    EngineError::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Which rent the objective integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accounting {
    /// Rent and power follow the live ON/OFF state.
    #[default]
    Live,
    /// Rent and power stay at their period-start values.
    Frozen,
}

/// Which cause wins when a voluntary OFF and depletion hit the same slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffPrecedence {
    /// The policy's OFF stands and the handover is paid.
    #[default]
    Voluntary,
    /// Depletion stands and nothing is paid.
    Depletion,
}

/// How a continuous OFF time maps onto the slot grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffRounding {
    /// First slot boundary at or after the OFF time.
    #[default]
    Ceil,
    /// Last slot boundary at or before the OFF time.
    Floor,
}

/// Change of every SBS's transmit power at an absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxChange {
    pub at: f64,
    pub watts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Period length T, seconds.
    pub period: f64,
    pub horizon_periods: usize,
    /// Slot length, seconds.
    pub dt: f64,
    pub placement: PlacementParams,
    pub harvest: HarvestParams,
    pub power: PowerModelParams,
    pub weights: CostWeights,
    /// File size each UE downloads, bits.
    pub file_bits: f64,
    pub initial_energy: f64,
    pub capacity: f64,
    pub seed: u64,
    pub policy: PolicySpec,
    pub accounting: Accounting,
    pub off_precedence: OffPrecedence,
    pub off_rounding: OffRounding,
    pub sbs_tx_schedule: Vec<TxChange>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            period: 10.0,
            horizon_periods: 2,
            dt: 0.1,
            placement: PlacementParams::default(),
            harvest: HarvestParams::default(),
            power: PowerModelParams::default(),
            weights: CostWeights::default(),
            file_bits: 1e5,
            initial_energy: 60.0,
            capacity: 100.0,
            seed: 1,
            policy: PolicySpec::Roa,
            accounting: Accounting::Live,
            off_precedence: OffPrecedence::Voluntary,
            off_rounding: OffRounding::Ceil,
            sbs_tx_schedule: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        positive("period", self.period)?;
        positive("dt", self.dt)?;
        let ratio = self.period / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(
                "dt",
                format!("{} does not divide the period {}", self.dt, self.period),
            ));
        }
        if self.horizon_periods == 0 {
            return Err(invalid("horizon_periods", "must be at least 1"));
        }
        if self.placement.n_sbs > 63 {
            return Err(invalid("n_sbs", "at most 63 SBSs are supported"));
        }
        if self.placement.n_ue == 0 {
            return Err(invalid("n_ue", "at least one UE is required"));
        }
        positive("file_bits", self.file_bits)?;
        positive("capacity", self.capacity)?;
        if !(0.0..=self.capacity).contains(&self.initial_energy) {
            return Err(invalid(
                "initial_energy",
                format!("{} outside [0, {}]", self.initial_energy, self.capacity),
            ));
        }
        self.harvest
            .validate()
            .map_err(|e| invalid("harvest", e.to_string()))?;
        self.power
            .validate()
            .map_err(|e| invalid("q", e.to_string()))?;
        self.weights
            .validate()
            .map_err(|e| invalid("weights", e.to_string()))?;
        self.policy
            .validate(self.period)
            .map_err(|e| invalid("policy", e.to_string()))?;
        if let PolicySpec::Schedule(ts) = &self.policy {
            if ts.len() != self.placement.n_sbs {
                return Err(invalid(
                    "policy",
                    format!(
                        "schedule lists {} times for {} SBSs",
                        ts.len(),
                        self.placement.n_sbs
                    ),
                ));
            }
        }
        for c in &self.sbs_tx_schedule {
            if !(c.at >= 0.0 && c.at.is_finite() && c.watts > 0.0 && c.watts.is_finite()) {
                return Err(invalid(
                    "sbs_tx_schedule",
                    format!("entry at {} s with {} W", c.at, c.watts),
                ));
            }
        }
        Ok(())
    }

    pub fn slots_per_period(&self) -> usize {
        (self.period / self.dt).round() as usize
    }

    pub fn total_slots(&self) -> usize {
        self.slots_per_period() * self.horizon_periods
    }

    fn price_params(&self) -> PriceParams {
        PriceParams {
            weights: self.weights,
            q: self.power.q,
            file_bits: self.file_bits,
        }
    }
}

/// One row of the optional per-slot trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub sbs_id: usize,
    pub sigma: u8,
    /// Stored energy at the start of the slot.
    pub energy: f64,
    pub assoc_count: usize,
    /// Rent accrued per second during the slot.
    pub rent_rate: f64,
}

/// Outcome of one SBS in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsPeriod {
    pub sbs: usize,
    /// Had users at the period start.
    pub used: bool,
    pub control: SbsControl,
    /// OFF time the policy committed to at the period start, before
    /// snapping to the slot grid.
    pub planned_off: Option<f64>,
    pub rent_price: f64,
    pub buy_price: f64,
    /// Power draw at the period-start association.
    pub frozen_power: f64,
    pub decision: Decision,
    pub rent_cost: f64,
    pub on_time: f64,
    /// Seconds into the period.
    pub depleted_at: Option<f64>,
    pub switch_count: u32,
    pub energy_start: f64,
    pub energy_end: f64,
    pub energy_consumed: f64,
    pub energy_harvested: f64,
    pub ignored_rent_increases: u32,
}

impl SbsPeriod {
    pub fn cost(&self) -> f64 {
        self.rent_cost
            + if self.decision.bought {
                self.buy_price
            } else {
                0.0
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodResult {
    pub index: usize,
    /// Absolute start time, seconds.
    pub start: f64,
    pub sbs: Vec<SbsPeriod>,
    pub total_cost: f64,
    /// Time-averaged total network delay divided by the number of SBSs.
    pub delay_per_sbs: f64,
    pub unused_sbs_fraction: f64,
}

impl PeriodResult {
    pub fn unused_count(&self) -> usize {
        self.sbs.iter().filter(|s| !s.used).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: u64,
    pub topology: Topology,
    pub harvest: HarvestTrace,
    pub periods: Vec<PeriodResult>,
    pub trace: Vec<TraceRow>,
}

impl Replication {
    pub fn total_cost(&self) -> f64 {
        self.periods.iter().fold(0.0, |acc, p| acc + p.total_cost)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Replays these arrivals instead of sampling them.
    pub harvest: Option<&'a HarvestTrace>,
    pub trace: bool,
}

/// Live rent of SBS `bs` on the current state.
pub fn instantaneous_rent(
    bs: usize,
    state: &NetworkState,
    topo: &Topology,
    w: &CostWeights,
    q: f64,
    file_bits: f64,
) -> Result<f64, EngineError> {
    Ok(rent_price(bs, state, topo, w, q, file_bits)?)
}

/// Period-start quantities shared by the online run and the offline search.
pub(crate) struct PeriodPlan {
    pub tags: Vec<PriceTag>,
    pub used: Vec<bool>,
    pub frozen_power: Vec<f64>,
    pub epochs: Vec<Epoch>,
}

/// Topology in force at absolute time `at`.
fn topology_at(cfg: &ScenarioConfig, base: &Topology, at: f64) -> Result<Topology, EngineError> {
    let mut topo = base.clone();
    let latest = cfg
        .sbs_tx_schedule
        .iter()
        .filter(|c| c.at <= at + 1e-9)
        .max_by(|a, b| a.at.total_cmp(&b.at));
    if let Some(c) = latest {
        for j in 1..topo.n_bs() {
            topo.set_tx_power(j, c.watts)?;
        }
    }
    Ok(topo)
}

pub(crate) fn plan_period(
    cfg: &ScenarioConfig,
    base: &Topology,
    period_index: usize,
) -> Result<PeriodPlan, EngineError> {
    let start = period_index as f64 * cfg.period;
    let n_slots = cfg.slots_per_period();
    let topo = topology_at(cfg, base, start)?;
    let n_sbs = topo.n_sbs();
    let params = cfg.price_params();
    let all_on = evaluate((1u64 << n_sbs) - 1, &topo, &params)?;
    let tags = freeze_prices(
        &all_on.state,
        &topo,
        &cfg.weights,
        cfg.power.q,
        cfg.file_bits,
        cfg.period,
        start,
    )?;
    let used = (1..=n_sbs).map(|j| all_on.state.load(j) > 0).collect();
    let frozen_power = all_on.power[1..].to_vec();

    let mut epochs = vec![Epoch::new(0, topo)];
    let mut changes: Vec<_> = cfg
        .sbs_tx_schedule
        .iter()
        .filter(|c| c.at > start + 1e-9 && c.at < start + cfg.period - 1e-9)
        .collect();
    changes.sort_by(|a, b| a.at.total_cmp(&b.at));
    for c in changes {
        let slot = off_slot(c.at - start, cfg.dt, n_slots, OffRounding::Ceil)
            .expect("change inside the period");
        let topo = topology_at(cfg, base, c.at)?;
        epochs.push(Epoch::new(slot, topo));
    }
    Ok(PeriodPlan {
        tags,
        used,
        frozen_power,
        epochs,
    })
}

pub(crate) fn build_ctx<'a>(
    cfg: &ScenarioConfig,
    plan: PeriodPlan,
    controls: Vec<SbsControl>,
    harvest: &'a HarvestTrace,
    period_index: usize,
    trace: bool,
) -> PeriodCtx<'a> {
    PeriodCtx {
        n_sbs: controls.len(),
        n_slots: cfg.slots_per_period(),
        dt: cfg.dt,
        capacity: cfg.capacity,
        start_time: period_index as f64 * cfg.period,
        accounting: cfg.accounting,
        precedence: cfg.off_precedence,
        rounding: cfg.off_rounding,
        prices: cfg.price_params(),
        epochs: plan.epochs,
        harvest,
        tags: plan.tags,
        frozen_power: plan.frozen_power,
        controls,
        trace: trace.then(|| RefCell::new(Vec::new())),
    }
}

/// Controls implied by `policy` with the committed OFF times; consumes one
/// draw per SBS from `rngs` for randomized rules.
pub(crate) fn controls_for(
    cfg: &ScenarioConfig,
    plan: &PeriodPlan,
    rngs: &mut [SimRng],
) -> (Vec<SbsControl>, Vec<Option<f64>>) {
    let n_slots = cfg.slots_per_period();
    plan.tags
        .iter()
        .zip(&plan.used)
        .zip(rngs.iter_mut())
        .enumerate()
        .map(|(j, ((tag, &used), rng))| {
            let planned = cfg
                .policy
                .planned_off_time(j, tag.rent, tag.buy, cfg.period, rng);
            if !used {
                return (SbsControl::Idle, None);
            }
            let control = match cfg.policy {
                PolicySpec::Adaptive => SbsControl::Adaptive,
                PolicySpec::Threshold(k) => SbsControl::Threshold(k),
                _ => SbsControl::OffAt(
                    planned.and_then(|t| off_slot(t, cfg.dt, n_slots, cfg.off_rounding)),
                ),
            };
            (control, planned)
        })
        .unzip()
}

/// Runs every slot of a prepared period and collects its results.
pub(crate) fn execute_period(
    ctx: &PeriodCtx<'_>,
    energy: &mut EnergyState,
    period_index: usize,
    planned: &[Option<f64>],
) -> Result<PeriodResult, EngineError> {
    energy.begin_period();
    let mut st = SimState::new(ctx, &energy.stored);
    while !st.finished(ctx) {
        step(ctx, &mut st, 0)?;
    }
    st.finish(ctx);
    let total_cost = st.total_cost(ctx);
    let dt = ctx.dt;
    let sbs: Vec<SbsPeriod> = st
        .sbs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let depleted_at = s.depleted_at.map(|k| k as f64 * dt);
            if let Some(t) = depleted_at {
                energy.mark_depleted(j, t);
            }
            energy.stored[j] = s.stored;
            SbsPeriod {
                sbs: j + 1,
                used: ctx.controls[j] != SbsControl::Idle,
                control: ctx.controls[j],
                planned_off: planned[j],
                rent_price: ctx.tags[j].rent,
                buy_price: ctx.tags[j].buy,
                frozen_power: ctx.frozen_power[j],
                decision: Decision {
                    off_time: s.first_off.map(|k| k as f64 * dt),
                    bought: s.bought,
                },
                rent_cost: s.rent_cost,
                on_time: s.on_slots as f64 * dt,
                depleted_at,
                switch_count: s.switches,
                energy_start: energy.initial[j],
                energy_end: s.stored,
                energy_consumed: s.consumed,
                energy_harvested: s.harvested,
                ignored_rent_increases: s.adaptive.as_ref().map_or(0, |a| a.ignored_increases),
            }
        })
        .collect();
    let n_sbs = ctx.n_sbs;
    let unused = sbs.iter().filter(|s| !s.used).count();
    Ok(PeriodResult {
        index: period_index,
        start: ctx.start_time,
        sbs,
        total_cost,
        delay_per_sbs: st.delay_sum / ctx.n_slots as f64 / n_sbs.max(1) as f64,
        unused_sbs_fraction: if n_sbs == 0 {
            0.0
        } else {
            unused as f64 / n_sbs as f64
        },
    })
}

/// Runs period `period_index` of `cfg` on `topo`, starting from `energy`
/// and replaying `harvest` (the arrivals of this period only).
pub fn run_period(
    cfg: &ScenarioConfig,
    topo: &Topology,
    energy: &mut EnergyState,
    harvest: &HarvestTrace,
    policy_rngs: &mut [SimRng],
    period_index: usize,
) -> Result<PeriodResult, EngineError> {
    let (result, _) =
        run_period_traced(cfg, topo, energy, harvest, policy_rngs, period_index, false)?;
    Ok(result)
}

fn run_period_traced(
    cfg: &ScenarioConfig,
    topo: &Topology,
    energy: &mut EnergyState,
    harvest: &HarvestTrace,
    policy_rngs: &mut [SimRng],
    period_index: usize,
    trace: bool,
) -> Result<(PeriodResult, Vec<TraceRow>), EngineError> {
    if harvest.n_sbs() != topo.n_sbs() || harvest.n_slots() != cfg.slots_per_period() {
        return Err(invalid(
            "harvest",
            format!(
                "trace has {} SBSs x {} slots, expected {} x {}",
                harvest.n_sbs(),
                harvest.n_slots(),
                topo.n_sbs(),
                cfg.slots_per_period()
            ),
        ));
    }
    let plan = plan_period(cfg, topo, period_index)?;
    let (controls, planned) = controls_for(cfg, &plan, policy_rngs);
    let ctx = build_ctx(cfg, plan, controls, harvest, period_index, trace);
    let result = execute_period(&ctx, energy, period_index, &planned)?;
    let rows = ctx.trace.map(RefCell::into_inner).unwrap_or_default();
    Ok((result, rows))
}

/// Chains the periods of one replication on a fixed topology and harvest.
pub fn run_horizon(
    cfg: &ScenarioConfig,
    topo: &Topology,
    harvest: &HarvestTrace,
    streams: &Streams,
    trace: bool,
) -> Result<(Vec<PeriodResult>, Vec<TraceRow>), EngineError> {
    cfg.validate()?;
    let n_slots = cfg.slots_per_period();
    if harvest.n_slots() < cfg.total_slots() || harvest.n_sbs() != topo.n_sbs() {
        return Err(invalid(
            "harvest",
            format!(
                "trace has {} SBSs x {} slots, need {} x {}",
                harvest.n_sbs(),
                harvest.n_slots(),
                topo.n_sbs(),
                cfg.total_slots()
            ),
        ));
    }
    let mut energy = EnergyState::new(topo.n_sbs(), cfg.initial_energy, cfg.capacity)?;
    let mut rngs: Vec<SimRng> = (1..=topo.n_sbs()).map(|j| streams.policy(j)).collect();
    let mut periods = Vec::with_capacity(cfg.horizon_periods);
    let mut rows = Vec::new();
    for p in 0..cfg.horizon_periods {
        let window = harvest.window(p * n_slots, n_slots);
        let (result, mut r) =
            run_period_traced(cfg, topo, &mut energy, &window, &mut rngs, p, trace)?;
        periods.push(result);
        rows.append(&mut r);
    }
    Ok((periods, rows))
}

/// Places the nodes of replication `index`.
pub fn replication_topology(cfg: &ScenarioConfig, index: u64) -> Result<Topology, EngineError> {
    let streams = Streams::new(cfg.seed, index);
    Ok(place_nodes(&cfg.placement, &mut streams.placement())?)
}

/// Samples the arrivals of replication `index` over the whole horizon.
pub fn replication_harvest(cfg: &ScenarioConfig, index: u64) -> HarvestTrace {
    let streams = Streams::new(cfg.seed, index);
    let mut rngs: Vec<SimRng> = (1..=cfg.placement.n_sbs)
        .map(|j| streams.harvest(j))
        .collect();
    HarvestTrace::sample(&cfg.harvest, cfg.dt, cfg.total_slots(), &mut rngs)
}

/// One full replication: placement, arrivals and every period.
pub fn simulate(cfg: &ScenarioConfig, index: u64) -> Result<Replication, EngineError> {
    simulate_with(cfg, index, &RunOptions::default())
}

pub fn simulate_with(
    cfg: &ScenarioConfig,
    index: u64,
    opts: &RunOptions<'_>,
) -> Result<Replication, EngineError> {
    cfg.validate()?;
    let topology = replication_topology(cfg, index)?;
    let harvest = match opts.harvest {
        Some(h) => h.clone(),
        None => replication_harvest(cfg, index),
    };
    let streams = Streams::new(cfg.seed, index);
    let (periods, trace) = run_horizon(cfg, &topology, &harvest, &streams, opts.trace)?;
    Ok(Replication {
        index,
        topology,
        harvest,
        periods,
        trace,
    })
}

#[cfg(test)]
mod tests;
