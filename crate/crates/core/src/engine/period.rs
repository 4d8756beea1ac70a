//! Slot-by-slot simulation of one period.
//!
//! Per slot: read the harvest, let each policy decide, apply voluntary OFFs,
//! force OFF every SBS that cannot fund the slot, then accrue rent and
//! energy. The state is cheap to clone so the offline search can branch on
//! it.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::energy::{check_depletion, update_storage, HarvestTrace};
use crate::network::Topology;
use crate::pricing::PriceTag;
use crate::schedulers::{adaptive_off_time, baseline_threshold, RentHistory};

use super::cache::{MaskEval, NetworkCache, PriceParams};
use super::{Accounting, EngineError, OffPrecedence, OffRounding, TraceRow};

/// Relative change below which two rents count as equal.
const RENT_TOLERANCE: f64 = 1e-9;

/// How one SBS is driven during a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SbsControl {
    /// No users at the period start: OFF throughout, free of charge.
    Idle,
    /// Voluntary OFF at the given slot, or never.
    OffAt(Option<usize>),
    /// OFF time recomputed whenever the live rent drops.
    Adaptive,
    /// ON iff the storage is above this percentage.
    Threshold(f64),
}

/// Slot at which an OFF decision for time `t` takes effect, `None` when it
/// falls at or past the period end.
pub fn off_slot(t: f64, dt: f64, n_slots: usize, rounding: OffRounding) -> Option<usize> {
    let x = t / dt;
    let k = match rounding {
        OffRounding::Ceil => (x - 1e-9).ceil(),
        OffRounding::Floor => (x + 1e-9).floor(),
    }
    .max(0.0) as usize;
    (k < n_slots).then_some(k)
}

/// Topology valid from `from_slot` until the next epoch.
pub(crate) struct Epoch {
    pub from_slot: usize,
    pub topo: Topology,
    pub cache: RefCell<NetworkCache>,
}

impl Epoch {
    pub fn new(from_slot: usize, topo: Topology) -> Self {
        let cache = RefCell::new(NetworkCache::new(topo.n_sbs()));
        Self {
            from_slot,
            topo,
            cache,
        }
    }
}

/// Everything fixed for the duration of a period.
pub(crate) struct PeriodCtx<'a> {
    pub n_sbs: usize,
    pub n_slots: usize,
    pub dt: f64,
    pub capacity: f64,
    pub start_time: f64,
    pub accounting: Accounting,
    pub precedence: OffPrecedence,
    pub rounding: OffRounding,
    pub prices: PriceParams,
    pub epochs: Vec<Epoch>,
    pub harvest: &'a HarvestTrace,
    pub tags: Vec<PriceTag>,
    pub frozen_power: Vec<f64>,
    pub controls: Vec<SbsControl>,
    pub trace: Option<RefCell<Vec<TraceRow>>>,
}

impl PeriodCtx<'_> {
    fn eval(&self, slot: usize, mask: u64) -> Result<Rc<MaskEval>, EngineError> {
        let epoch = self
            .epochs
            .iter()
            .rev()
            .find(|e| e.from_slot <= slot)
            .expect("first epoch starts at slot 0");
        let eval = epoch
            .cache
            .borrow_mut()
            .get(mask, &epoch.topo, &self.prices);
        eval
    }

    fn frozen(&self) -> bool {
        self.accounting == Accounting::Frozen
    }

    fn slot_of(&self, t: f64) -> Option<usize> {
        off_slot(t, self.dt, self.n_slots, self.rounding)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AdaptiveTrack {
    pub history: Option<RentHistory>,
    pub off_slot: Option<usize>,
    pub ignored_increases: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct SbsTrack {
    pub on: bool,
    pub stored: f64,
    pub depleted_at: Option<usize>,
    pub bought: bool,
    pub first_off: Option<usize>,
    pub rent_cost: f64,
    run_rate: f64,
    run_len: u32,
    pub on_slots: u32,
    pub switches: u32,
    pub consumed: f64,
    pub harvested: f64,
    pub adaptive: Option<AdaptiveTrack>,
}

impl SbsTrack {
    fn accrue(&mut self, rate: f64, dt: f64) {
        if self.run_len > 0 && rate != self.run_rate {
            self.flush(dt);
        }
        self.run_rate = rate;
        self.run_len += 1;
    }

    fn flush(&mut self, dt: f64) {
        if self.run_len > 0 {
            self.rent_cost += self.run_rate * (self.run_len as f64 * dt);
            self.run_len = 0;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SimState {
    pub slot: usize,
    pub sbs: Vec<SbsTrack>,
    pub delay_sum: f64,
}

impl SimState {
    pub fn new(ctx: &PeriodCtx<'_>, stored: &[f64]) -> Self {
        let sbs = ctx
            .controls
            .iter()
            .zip(stored)
            .map(|(c, &e)| SbsTrack {
                on: *c != SbsControl::Idle,
                stored: e,
                depleted_at: None,
                bought: false,
                first_off: None,
                rent_cost: 0.0,
                run_rate: 0.0,
                run_len: 0,
                on_slots: 0,
                switches: 0,
                consumed: 0.0,
                harvested: 0.0,
                adaptive: (*c == SbsControl::Adaptive).then_some(AdaptiveTrack {
                    history: None,
                    off_slot: None,
                    ignored_increases: 0,
                }),
            })
            .collect();
        Self {
            slot: 0,
            sbs,
            delay_sum: 0.0,
        }
    }

    pub fn mask(&self) -> u64 {
        self.sbs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.on)
            .fold(0, |m, (j, _)| m | 1 << j)
    }

    pub fn finished(&self, ctx: &PeriodCtx<'_>) -> bool {
        self.slot >= ctx.n_slots
    }

    /// Closes open rent runs.
    pub fn finish(&mut self, ctx: &PeriodCtx<'_>) {
        for s in &mut self.sbs {
            s.flush(ctx.dt);
        }
    }

    /// Objective of the period: rent plus handover charges, in SBS order.
    /// Call after [`SimState::finish`].
    pub fn total_cost(&self, ctx: &PeriodCtx<'_>) -> f64 {
        self.sbs
            .iter()
            .zip(&ctx.tags)
            .map(|(s, tag)| s.rent_cost + if s.bought { tag.buy } else { 0.0 })
            .fold(0.0, |acc, c| acc + c)
    }
}

/// Advances `st` by one slot. Bits of `forced_off` switch the corresponding
/// SBSs OFF voluntarily in this slot regardless of their control.
pub(crate) fn step(
    ctx: &PeriodCtx<'_>,
    st: &mut SimState,
    forced_off: u64,
) -> Result<(), EngineError> {
    let s = st.slot;
    let harvest = ctx.harvest.slot(s);
    let was_on: Vec<bool> = st.sbs.iter().map(|x| x.on).collect();
    let live_now = ctx.eval(s, st.mask())?;

    // Policy decisions on the state inherited from the previous slot.
    let mut want_off = Vec::new();
    for j in 0..ctx.n_sbs {
        let track = &mut st.sbs[j];
        if track.depleted_at.is_some() {
            continue;
        }
        let mut desire_on = match ctx.controls[j] {
            SbsControl::Idle => continue,
            SbsControl::OffAt(k) => track.on && k.is_none_or(|k| s < k),
            SbsControl::Adaptive => {
                if !track.on {
                    false
                } else {
                    let rent = if ctx.frozen() {
                        ctx.tags[j].rent
                    } else {
                        live_now.rent[j + 1]
                    };
                    let t = s as f64 * ctx.dt;
                    let buy = ctx.tags[j].buy;
                    let a = track.adaptive.as_mut().expect("adaptive track");
                    adapt(a, t, rent, buy, |t| ctx.slot_of(t));
                    a.off_slot.is_none_or(|k| s < k)
                }
            }
            SbsControl::Threshold(k) => baseline_threshold(track.stored, ctx.capacity, k)?,
        };
        if forced_off >> j & 1 == 1 {
            desire_on = false;
        }
        if track.on && !desire_on {
            want_off.push(j);
        } else if !track.on && desire_on {
            track.on = true;
        }
    }

    if ctx.precedence == OffPrecedence::Depletion {
        deplete(ctx, st, harvest)?;
        want_off.retain(|&j| st.sbs[j].on);
    }
    for j in want_off {
        let track = &mut st.sbs[j];
        track.on = false;
        track.bought = true;
        track.first_off.get_or_insert(s);
    }
    deplete(ctx, st, harvest)?;

    let eval = ctx.eval(s, st.mask())?;
    for j in 0..ctx.n_sbs {
        let track = &mut st.sbs[j];
        let stored_before = track.stored;
        let mut consumed = 0.0;
        let mut rate = 0.0;
        if track.on {
            rate = if ctx.frozen() {
                ctx.tags[j].rent
            } else {
                eval.rent[j + 1]
            };
            let power = if ctx.frozen() {
                ctx.frozen_power[j]
            } else {
                eval.power[j + 1]
            };
            consumed = power * ctx.dt;
            track.accrue(rate, ctx.dt);
            track.on_slots += 1;
        } else {
            track.flush(ctx.dt);
            if ctx.controls[j] != SbsControl::Idle && track.depleted_at.is_none() && !track.bought {
                return Err(EngineError::Invariant(format!(
                    "SBS {} is OFF at slot {s} without depletion or handover",
                    j + 1
                )));
            }
        }
        track.stored = update_storage(track.stored, harvest[j], consumed, ctx.capacity)?;
        if !(0.0..=ctx.capacity).contains(&track.stored) {
            return Err(EngineError::Invariant(format!(
                "SBS {} storage {} J outside [0, {}]",
                j + 1,
                track.stored,
                ctx.capacity
            )));
        }
        track.consumed += consumed;
        track.harvested += harvest[j];
        if track.on != was_on[j] {
            track.switches += 1;
        }
        if let Some(trace) = &ctx.trace {
            trace.borrow_mut().push(TraceRow {
                t: ctx.start_time + s as f64 * ctx.dt,
                sbs_id: j + 1,
                sigma: u8::from(track.on),
                energy: stored_before,
                assoc_count: eval.state.load(j + 1),
                rent_rate: rate,
            });
        }
    }
    st.delay_sum += eval.total_delay;
    st.slot += 1;
    Ok(())
}

fn adapt(
    a: &mut AdaptiveTrack,
    t: f64,
    rent: f64,
    buy: f64,
    slot_of: impl Fn(f64) -> Option<usize>,
) {
    let Some(history) = a.history.as_mut() else {
        a.off_slot = match RentHistory::new(rent) {
            Ok(h) => {
                let off = adaptive_off_time(&h, buy).expect("single-entry history");
                a.history = Some(h);
                slot_of(off)
            }
            Err(_) => None,
        };
        return;
    };
    let last = history.current_rent();
    if rent < last * (1.0 - RENT_TOLERANCE) {
        let mut next = history.clone();
        if next.push(t, rent).is_ok() {
            if let Ok(off) = adaptive_off_time(&next, buy) {
                *history = next;
                a.off_slot = slot_of(off);
            }
        }
    } else if rent > last * (1.0 + RENT_TOLERANCE) {
        a.ignored_increases += 1;
    }
}

/// Switches OFF every ON SBS that cannot fund the slot, repeating until no
/// SBS is left short after the association settles.
fn deplete(ctx: &PeriodCtx<'_>, st: &mut SimState, harvest: &[f64]) -> Result<(), EngineError> {
    let s = st.slot;
    loop {
        let eval = if ctx.frozen() {
            None
        } else {
            Some(ctx.eval(s, st.mask())?)
        };
        let mut hit = false;
        for (j, track) in st.sbs.iter_mut().enumerate().filter(|(_, t)| t.on) {
            let power = match &eval {
                Some(e) => e.power[j + 1],
                None => ctx.frozen_power[j],
            };
            if check_depletion(track.stored, power, ctx.dt, harvest[j]) {
                track.on = false;
                track.depleted_at = Some(s);
                hit = true;
            }
        }
        if !hit {
            return Ok(());
        }
    }
}

/// Result of running one SBS on its own with flat prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemOutcome {
    pub cost: f64,
    pub rent_cost: f64,
    pub bought: bool,
    pub on_slots: u32,
    pub depleted_at: Option<usize>,
}

/// Inputs of an isolated single-SBS rent-or-buy run.
#[derive(Debug, Clone)]
pub struct Subproblem<'a> {
    pub control: SbsControl,
    pub rent: f64,
    pub buy: f64,
    pub power: f64,
    pub stored: f64,
    pub capacity: f64,
    pub dt: f64,
    pub rounding: OffRounding,
    pub precedence: OffPrecedence,
    /// Energy arrivals per slot.
    pub harvest: &'a [f64],
}

/// Runs one SBS in isolation with its frozen rent and power. With frozen
/// prices a joint period decomposes into these runs.
pub fn run_subproblem(p: &Subproblem<'_>) -> Result<SubproblemOutcome, EngineError> {
    let n = p.harvest.len();
    let off_at = match p.control {
        SbsControl::Idle => Some(0),
        SbsControl::OffAt(k) => k,
        SbsControl::Adaptive => {
            if p.rent > 0.0 {
                let t = adaptive_off_time(&RentHistory::new(p.rent)?, p.buy)?;
                off_slot(t, p.dt, n, p.rounding)
            } else {
                None
            }
        }
        SbsControl::Threshold(_) => None,
    };
    let mut on = p.control != SbsControl::Idle;
    let mut e = p.stored;
    let mut bought = false;
    let mut depleted_at = None;
    let mut on_slots = 0;
    let mut rent_cost = 0.0;
    let mut run = 0u32;
    for (s, &h) in p.harvest.iter().enumerate() {
        if p.control != SbsControl::Idle && depleted_at.is_none() {
            let desire = match p.control {
                SbsControl::Threshold(k) => baseline_threshold(e, p.capacity, k)?,
                _ => on && off_at.is_none_or(|k| s < k),
            };
            let short = check_depletion(e, p.power, p.dt, h);
            if on && !desire {
                if short && p.precedence == OffPrecedence::Depletion {
                    depleted_at = Some(s);
                } else {
                    bought = true;
                }
                on = false;
            } else if desire {
                on = true;
            }
            if on && short {
                on = false;
                depleted_at = Some(s);
            }
        }
        let consumed = if on { p.power * p.dt } else { 0.0 };
        if on {
            run += 1;
            on_slots += 1;
        } else if run > 0 {
            rent_cost += p.rent * (run as f64 * p.dt);
            run = 0;
        }
        e = update_storage(e, h, consumed, p.capacity)?;
    }
    if run > 0 {
        rent_cost += p.rent * (run as f64 * p.dt);
    }
    let cost = rent_cost + if bought { p.buy } else { 0.0 };
    Ok(SubproblemOutcome {
        cost,
        rent_cost,
        bought,
        on_slots,
        depleted_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_slot_rounding() {
        assert_eq!(off_slot(0.0, 0.1, 100, OffRounding::Ceil), Some(0));
        assert_eq!(off_slot(0.3, 0.1, 100, OffRounding::Ceil), Some(3));
        assert_eq!(off_slot(0.31, 0.1, 100, OffRounding::Ceil), Some(4));
        assert_eq!(off_slot(0.39, 0.1, 100, OffRounding::Floor), Some(3));
        assert_eq!(off_slot(10.0, 0.1, 100, OffRounding::Ceil), None);
        assert_eq!(off_slot(9.95, 0.1, 100, OffRounding::Ceil), None);
        assert_eq!(off_slot(9.95, 0.1, 100, OffRounding::Floor), Some(99));
    }

    fn sub(control: SbsControl, stored: f64, harvest: &[f64]) -> Subproblem<'_> {
        Subproblem {
            control,
            rent: 0.5,
            buy: 2.0,
            power: 10.0,
            stored,
            capacity: 100.0,
            dt: 0.125,
            rounding: OffRounding::Ceil,
            precedence: OffPrecedence::Voluntary,
            harvest,
        }
    }

    #[test]
    fn subproblem_rent_then_buy() {
        let h = vec![0.0; 80];
        let out = run_subproblem(&sub(SbsControl::OffAt(Some(8)), 100.0, &h)).unwrap();
        assert_eq!(out.on_slots, 8);
        assert!(out.bought);
        assert_eq!(out.cost, 0.5 * 1.0 + 2.0);
    }

    #[test]
    fn subproblem_depletes_for_free() {
        // 12.5 J at 10 W and 1/8 s slots funds exactly 10 slots.
        let h = vec![0.0; 80];
        let out = run_subproblem(&sub(SbsControl::OffAt(None), 12.5, &h)).unwrap();
        assert_eq!(out.depleted_at, Some(10));
        assert_eq!(out.on_slots, 10);
        assert!(!out.bought);
        assert_eq!(out.cost, 0.5 * 1.25);
    }

    #[test]
    fn subproblem_adaptive_is_deterministic_under_flat_rent() {
        let h = vec![0.0; 80];
        let a = run_subproblem(&sub(SbsControl::Adaptive, 100.0, &h)).unwrap();
        let d = run_subproblem(&sub(SbsControl::OffAt(Some(32)), 100.0, &h)).unwrap();
        assert_eq!(a, d);
    }
}
