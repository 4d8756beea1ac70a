//! Rent and buy prices of the per-SBS rent-or-buy problem.
//!
//! Rent is what keeping an SBS ON costs per second: a weighted sum of its
//! network delay and its power draw. Buy is the one-off cost of handing its
//! users to the MBS, sized from the worst case in which every UE shares the
//! MBS bandwidth.

use serde::{Deserialize, Serialize};

use crate::energy::bs_power;
use crate::network::{bs_delay, snr_mbs, NetworkState, Topology};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PricingError {
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("SBS {0} has a member with zero rate; its delay is unbounded")]
    Unserviceable(usize),
    #[error("period must be positive, got {0}")]
    InvalidPeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Cost per second of delay.
    pub alpha_d: f64,
    /// Cost per watt.
    pub alpha_p: f64,
    /// Fraction of the worst-case MBS cost charged on handover.
    pub alpha_b: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha_d: 0.05,
            alpha_p: 0.05,
            alpha_b: 0.05,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), PricingError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.alpha_d) && ok(self.alpha_p) && ok(self.alpha_b)) {
            return Err(PricingError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if self.alpha_b > 1.0 {
            return Err(PricingError::InvalidWeights(format!(
                "alpha_b = {} exceeds 1",
                self.alpha_b
            )));
        }
        Ok(())
    }
}

/// Prices of one SBS for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTag {
    pub sbs: usize,
    /// Cost per second ON.
    pub rent: f64,
    /// Cost of a voluntary OFF.
    pub buy: f64,
    /// Absolute time the prices were computed at.
    pub frozen_at: f64,
}

/// Rent of SBS `bs` on the given network state.
pub fn rent_price(
    bs: usize,
    state: &NetworkState,
    topo: &Topology,
    w: &CostWeights,
    q: f64,
    file_bits: f64,
) -> Result<f64, PricingError> {
    let delay = bs_delay(bs, state, topo, file_bits);
    if !delay.is_finite() {
        return Err(PricingError::Unserviceable(bs));
    }
    let power = bs_power(topo.bs(bs), state.load(bs), q);
    Ok(w.alpha_d * delay + w.alpha_p * power)
}

/// Delay the MBS would need for `members` when all `total_ue` UEs split its
/// bandwidth.
pub fn mbs_delay_share(members: &[usize], topo: &Topology, file_bits: f64, total_ue: usize) -> f64 {
    let per_user = topo.mbs().bandwidth / total_ue as f64;
    members
        .iter()
        .map(|&ue| file_bits / (per_user * (1.0 + snr_mbs(ue, topo)).log2()))
        .fold(0.0, |acc, d| acc + d)
}

/// MBS power attributed to `n_members` extra users.
pub fn mbs_power_share(n_members: usize, topo: &Topology, q: f64) -> f64 {
    bs_power(topo.mbs(), n_members, q)
}

/// Handover price for one period of length `period`.
pub fn buy_price(delay_share: f64, power_share: f64, w: &CostWeights, period: f64) -> f64 {
    w.alpha_b * (w.alpha_d * delay_share + w.alpha_p * power_share) * period
}

/// Cost of the clairvoyant choice when the SBS would deplete at `u`.
pub fn offline_cost(rent: f64, buy: f64, u: f64) -> f64 {
    (rent * u).min(buy)
}

/// Prices of every SBS from the all-ON association `state`. SBSs without
/// members pay the fixed power term only and have nothing to hand over.
pub fn freeze_prices(
    state: &NetworkState,
    topo: &Topology,
    w: &CostWeights,
    q: f64,
    file_bits: f64,
    period: f64,
    now: f64,
) -> Result<Vec<PriceTag>, PricingError> {
    if !(period > 0.0) {
        return Err(PricingError::InvalidPeriod(period));
    }
    (1..topo.n_bs())
        .map(|j| {
            let members = state.members(j);
            let rent = rent_price(j, state, topo, w, q, file_bits)?;
            let buy = if members.is_empty() {
                0.0
            } else {
                let delay = mbs_delay_share(members, topo, file_bits, topo.n_ue());
                let power = mbs_power_share(members.len(), topo, q);
                buy_price(delay, power, w, period)
            };
            Ok(PriceTag {
                sbs: j,
                rent,
                buy,
                frozen_at: now,
            })
        })
        .collect()
}
