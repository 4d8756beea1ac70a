//! Discrete-time simulator and online-algorithms library for ON/OFF scheduling
//! of self-powered (energy-harvesting) small-cell base stations.
//!
//! Each small cell decides when to switch OFF and hand its users over to the
//! macro cell. Staying ON "rents" the small cell at a per-second price built
//! from delay and power; switching OFF "buys" the macro cell at a one-off
//! price. Energy depletion ends the rental for free. The crate provides:
//!
//! * [`network`]: placement, path loss, SINR/SNR, max-SINR association, rates and delay.
//! * [`energy`]: load-dependent power draw, Poisson harvesting, bounded storage.
//! * [`pricing`]: rent and buy prices and the offline optimum of a single rental.
//! * [`schedulers`]: deterministic, randomized and adaptive OFF-time rules,
//!   two baselines, and an exhaustive offline oracle.
//! * [`engine`]: the time-stepped period simulation and its cost accounting.
//! * [`analysis`]: closed-form and Monte Carlo competitive analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod energy;
pub mod engine;
pub mod network;
pub mod pricing;
pub mod rng;
pub mod schedulers;
pub mod stats;
pub mod units;

pub use analysis::{CrRecord, CrStudy, RatioReport};
pub use energy::{EnergyState, HarvestParams, HarvestTrace, PowerModelParams};
pub use engine::{
    Accounting, OffPrecedence, OffRounding, PeriodResult, Replication, SbsPeriod, ScenarioConfig,
};
pub use network::{BsKind, NetworkState, Position, Topology};
pub use pricing::{CostWeights, PriceTag};
pub use schedulers::{Decision, PolicySpec, RentHistory};

/// Euler's number over itself minus one: the best expected competitive ratio
/// a randomized rent-or-buy rule can guarantee.
pub const KAPPA_RANDOMIZED: f64 = std::f64::consts::E / (std::f64::consts::E - 1.0);

/// Crate-wide error type. Each module has its own error enum; this wraps them
/// for callers that drive the whole pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error(transparent)]
    Pricing(#[from] pricing::PricingError),
    #[error(transparent)]
    Schedule(#[from] schedulers::ScheduleError),
    #[error(transparent)]
    Oracle(#[from] schedulers::oracle::OracleError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}
