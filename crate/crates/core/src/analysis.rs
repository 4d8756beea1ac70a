//! Competitive analysis of the OFF-time rules, in closed form, by sampling,
//! and empirically against the offline oracle.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{simulate, Accounting, EngineError, OffRounding, ScenarioConfig};
use crate::pricing::offline_cost;
use crate::schedulers::oracle::{offline_exhaustive, KnownScenario, OracleError};
use crate::schedulers::{
    adaptive_off_time, doa_off_time, roa_off_time, PolicySpec, RentHistory, ScheduleError,
};
use crate::stats::{median_of_sorted, CI_MIN_SAMPLES};
use crate::KAPPA_RANDOMIZED;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(
        "renting for the whole period ({rent_total}) is cheaper than buying ({buy}); \
         the SBS then never switches OFF before depletion and the ratio analysis does not apply"
    )]
    RentCheaperThanBuy { rent_total: f64, buy: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn check_rent_covers_buy(rent: f64, buy: f64, period: f64) -> Result<(), AnalysisError> {
    if !(rent > 0.0) || buy < 0.0 {
        return Err(AnalysisError::InvalidInput(format!(
            "need rent > 0 and buy >= 0, got {rent} and {buy}"
        )));
    }
    if rent * period < buy {
        return Err(AnalysisError::RentCheaperThanBuy {
            rent_total: rent * period,
            buy,
        });
    }
    Ok(())
}

/// Expected cost of the randomized rule when the SBS would deplete at `u`.
pub fn expected_roa_cost(rent: f64, buy: f64, u: f64, period: f64) -> Result<f64, AnalysisError> {
    check_rent_covers_buy(rent, buy, period)?;
    Ok(if u < buy / rent {
        rent * u * KAPPA_RANDOMIZED
    } else {
        buy * KAPPA_RANDOMIZED
    })
}

/// Sample mean and standard error of the randomized rule's cost.
pub fn mc_expected_cost<R: Rng + ?Sized>(
    rent: f64,
    buy: f64,
    u: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), AnalysisError> {
    if n_samples == 0 {
        return Err(AnalysisError::InvalidInput(
            "need at least one sample".into(),
        ));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let t = roa_off_time(rent, buy, rng.random());
        let cost = if u < t { rent * u } else { rent * t + buy };
        sum += cost;
        sum_sq += cost * cost;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// Expected time the randomized rule keeps the SBS OFF within a period.
pub fn expected_off_duration(rent: f64, buy: f64, period: f64) -> Result<f64, AnalysisError> {
    check_rent_covers_buy(rent, buy, period)?;
    Ok(period - (buy / rent) / (std::f64::consts::E - 1.0))
}

/// Rule evaluated by [`worst_case_ratio_scan`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScanPolicy {
    Doa,
    Roa,
    /// Adaptive rule facing this rent trajectory.
    Adaptive(RentHistory),
}

/// Largest cost ratio against the clairvoyant choice over depletion times
/// `u = grid, 2 grid, ..., T`, with the first maximizing `u`.
///
/// A deterministic rule switched OFF at `t` pays the rent up to `u` when
/// `u <= t`, and the rent up to `t` plus the handover otherwise.
pub fn worst_case_ratio_scan(
    policy: &ScanPolicy,
    rent: f64,
    buy: f64,
    period: f64,
    grid_dt: f64,
) -> Result<(f64, f64), AnalysisError> {
    if !(grid_dt > 0.0) || !(period > 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "grid {grid_dt} and period {period} must be positive"
        )));
    }
    let off = match policy {
        ScanPolicy::Doa => Some(doa_off_time(rent, buy, period)),
        ScanPolicy::Adaptive(h) => Some(adaptive_off_time(h, buy)?),
        ScanPolicy::Roa => {
            check_rent_covers_buy(rent, buy, period)?;
            None
        }
    };
    let accumulated = |u: f64| match policy {
        ScanPolicy::Adaptive(h) => h.accumulated(u),
        _ => rent * u,
    };
    let steps = (period / grid_dt).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 1..=steps {
        let u = k as f64 * grid_dt;
        let online = match off {
            None => expected_roa_cost(rent, buy, u, period)?,
            Some(t) if u <= t || t >= period => accumulated(u),
            Some(t) => accumulated(t) + buy,
        };
        let opt = match policy {
            ScanPolicy::Adaptive(_) => accumulated(u).min(buy),
            _ => offline_cost(rent, buy, u),
        };
        let ratio = if opt > 0.0 { online / opt } else { 1.0 };
        if ratio > best.0 {
            best = (ratio, u);
        }
    }
    Ok(best)
}

/// Distribution of per-replication cost ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub ratios: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub worst: f64,
    pub mean: f64,
    /// Normal-approximation 95% half-width; absent below 100 samples.
    pub ci95: Option<f64>,
}

impl RatioReport {
    pub fn from_ratios(ratios: Vec<f64>) -> Result<Self, AnalysisError> {
        if ratios.is_empty() {
            return Err(AnalysisError::InvalidInput("no ratios to report".into()));
        }
        let n = ratios.len() as f64;
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = ratios.iter().sum::<f64>() / n;
        let ci95 = (ratios.len() >= CI_MIN_SAMPLES).then(|| {
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        });
        Ok(Self {
            min: sorted[0],
            median: median_of_sorted(&sorted),
            worst: sorted[sorted.len() - 1],
            mean,
            ci95,
            ratios,
        })
    }
}

/// One replication of the empirical study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrRecord {
    pub replication: u64,
    pub online_cost: f64,
    pub oracle_cost: f64,
    pub ratio: f64,
    pub searched_sbs: usize,
    pub oracle_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrStudy {
    pub records: Vec<CrRecord>,
    pub report: RatioReport,
    /// Replications passed over because no SBS had users, so neither side
    /// had a decision to make.
    pub skipped: Vec<u64>,
}

/// Replications examined per parallel batch.
const CR_BATCH: u64 = 256;

/// Settings the empirical study imposes on a scenario: one period of the
/// randomized rule on the oracle's grid, OFF times snapped down to it, live
/// accounting.
pub fn cr_study_config(cfg: &ScenarioConfig, grid_dt: f64) -> ScenarioConfig {
    ScenarioConfig {
        dt: grid_dt,
        horizon_periods: 1,
        policy: PolicySpec::Roa,
        accounting: Accounting::Live,
        off_rounding: OffRounding::Floor,
        ..cfg.clone()
    }
}

/// Ratio of the randomized rule's realized cost to the oracle's on the same
/// arrivals, over the first `n_runs` replications (by index) in which at
/// least one SBS has users.
pub fn empirical_cr_study(
    cfg: &ScenarioConfig,
    n_runs: usize,
    grid_dt: f64,
    budget: u64,
) -> Result<CrStudy, AnalysisError> {
    let cfg = cr_study_config(cfg, grid_dt);
    let max_index = (n_runs as u64).saturating_mul(1000).max(CR_BATCH);
    let mut records = Vec::with_capacity(n_runs);
    let mut skipped = Vec::new();
    let mut next = 0u64;
    while records.len() < n_runs {
        if next >= max_index {
            return Err(AnalysisError::InvalidInput(format!(
                "only {} of {next} replications had an SBS with users",
                records.len()
            )));
        }
        let batch = (next..next + CR_BATCH)
            .into_par_iter()
            .map(|i| cr_replication(&cfg, i, grid_dt, budget).map(|r| (i, r)))
            .collect::<Result<Vec<_>, _>>()?;
        next += CR_BATCH;
        for (i, record) in batch {
            if records.len() == n_runs {
                break;
            }
            match record {
                Some(r) => records.push(r),
                None => skipped.push(i),
            }
        }
    }
    let report = RatioReport::from_ratios(records.iter().map(|r| r.ratio).collect())?;
    Ok(CrStudy {
        records,
        report,
        skipped,
    })
}

/// Study record of replication `index`; `None` when no SBS has users.
pub fn cr_replication(
    cfg: &ScenarioConfig,
    index: u64,
    grid_dt: f64,
    budget: u64,
) -> Result<Option<CrRecord>, AnalysisError> {
    let rep = simulate(cfg, index)?;
    if rep.periods[0].sbs.iter().all(|s| !s.used) {
        return Ok(None);
    }
    let online = rep.periods[0].total_cost;
    let stored = vec![cfg.initial_energy; rep.topology.n_sbs()];
    let oracle = offline_exhaustive(
        &KnownScenario {
            cfg,
            topology: &rep.topology,
            harvest: &rep.harvest,
            stored: &stored,
            period_index: 0,
        },
        grid_dt,
        budget,
    )?;
    let ratio = if oracle.cost > 0.0 {
        online / oracle.cost
    } else if online == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(Some(CrRecord {
        replication: index,
        online_cost: online,
        oracle_cost: oracle.cost,
        ratio,
        searched_sbs: oracle.searched.len(),
        oracle_evaluations: oracle.evaluations,
    }))
}
