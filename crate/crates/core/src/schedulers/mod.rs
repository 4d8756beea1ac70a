//! OFF-time rules for a single SBS.
//!
//! Every rule answers the same question: when should an SBS that is renting
//! at `rent` per second give up and pay `buy` to hand its users over?

pub mod oracle;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

const E: f64 = std::f64::consts::E;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid rent history: {0}")]
    InvalidHistory(String),
    #[error("rent changed at t = {at} after the scheduled OFF time {off_time}")]
    AlreadyOff { at: f64, off_time: f64 },
    #[error("unknown policy `{0}` (expected doa, roa, adaptive, fixed:<t>, threshold:<K> or schedule:<t1,t2,..>)")]
    UnknownPolicy(String),
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(String),
}

/// Realized choice of one SBS in one period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Decision {
    /// Time of the (first) voluntary OFF, seconds into the period.
    pub off_time: Option<f64>,
    /// Whether the handover price was paid.
    pub bought: bool,
}

/// Piecewise-constant, strictly decreasing rent observed since the period
/// start. Entry `k > 0` is the time the rent dropped to its `k`-th value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RentHistory {
    steps: Vec<(f64, f64)>,
}

impl RentHistory {
    pub fn new(initial_rent: f64) -> Result<Self, ScheduleError> {
        Self::from_steps(vec![(0.0, initial_rent)])
    }

    pub fn from_steps(steps: Vec<(f64, f64)>) -> Result<Self, ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidHistory(m));
        match steps.first() {
            None => return bad("empty history".into()),
            Some(&(t, _)) if t != 0.0 => return bad(format!("first entry at t = {t}, not 0")),
            _ => {}
        }
        if let Some(&(t, r)) = steps
            .iter()
            .find(|(t, r)| !(t.is_finite() && *r > 0.0 && r.is_finite()))
        {
            return bad(format!(
                "entry ({t}, {r}) needs a finite time and positive rent"
            ));
        }
        for w in steps.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad(format!("times not increasing at t = {}", w[1].0));
            }
            if w[1].1 >= w[0].1 {
                return bad(format!("rent did not decrease at t = {}", w[1].0));
            }
        }
        Ok(Self { steps })
    }

    /// Appends a rent drop at time `t`.
    pub fn push(&mut self, t: f64, rent: f64) -> Result<(), ScheduleError> {
        let mut steps = self.steps.clone();
        steps.push((t, rent));
        *self = Self::from_steps(steps)?;
        Ok(())
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn current_rent(&self) -> f64 {
        self.steps[self.steps.len() - 1].1
    }

    /// Rent accumulated over `[0, t]`.
    pub fn accumulated(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for (k, &(start, rent)) in self.steps.iter().enumerate() {
            if t <= start {
                break;
            }
            let end = self.steps.get(k + 1).map_or(t, |s| s.0.min(t));
            total += rent * (end - start);
        }
        total
    }
}

/// Deterministic OFF time: the moment accumulated rent reaches the buy
/// price. Returns `period` (never) when rent is zero or `buy / rent` exceeds
/// the period.
pub fn doa_off_time(rent: f64, buy: f64, period: f64) -> f64 {
    if rent <= 0.0 {
        return period;
    }
    (buy / rent).clamp(0.0, period)
}

/// Probability that the randomized rule has switched OFF by time `t`.
pub fn roa_off_cdf(rent: f64, buy: f64, t: f64) -> f64 {
    if buy <= 0.0 {
        return 1.0;
    }
    let horizon = buy / rent;
    if t >= horizon {
        return 1.0;
    }
    (((rent / buy) * t).exp() - 1.0) / (E - 1.0)
}

/// Inverse of [`roa_off_cdf`] at probability `mu`.
pub fn roa_off_time(rent: f64, buy: f64, mu: f64) -> f64 {
    (buy / rent) * (1.0 + mu * (E - 1.0)).ln()
}

/// OFF time that keeps the accumulated rent equal to `buy` under a
/// decreasing rent. Each drop must arrive before the OFF time scheduled
/// from the history preceding it.
pub fn adaptive_off_time(history: &RentHistory, buy: f64) -> Result<f64, ScheduleError> {
    let steps = history.steps();
    let mut off = buy / steps[0].1;
    let mut paid_back = 0.0;
    for k in 1..steps.len() {
        let (at, rent) = steps[k];
        if at >= off {
            return Err(ScheduleError::AlreadyOff { at, off_time: off });
        }
        paid_back += at * (steps[k - 1].1 - rent);
        off = buy / rent - paid_back / rent;
    }
    Ok(off)
}

/// Fixed OFF time shared by every SBS.
pub fn baseline_fixed(t_fix: f64) -> f64 {
    t_fix
}

/// ON iff the storage is charged above `k_percent` percent.
pub fn baseline_threshold(
    stored: f64,
    capacity: f64,
    k_percent: f64,
) -> Result<bool, ScheduleError> {
    if !(capacity > 0.0) {
        return Err(ScheduleError::InvalidParameter(format!(
            "threshold rule needs a positive capacity, got {capacity}"
        )));
    }
    Ok(100.0 * stored / capacity > k_percent)
}

/// OFF-time policy selected for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    Doa,
    Roa,
    Adaptive,
    /// Every SBS switches OFF at the given time.
    Fixed(f64),
    /// ON iff storage is above the given percentage, re-evaluated every slot.
    Threshold(f64),
    /// Explicit OFF time per SBS; times at or past the period mean never.
    Schedule(Vec<f64>),
}

impl PolicySpec {
    pub fn validate(&self, period: f64) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidParameter(m));
        match self {
            Self::Fixed(t) if !(0.0..=period).contains(t) => {
                bad(format!("fixed OFF time {t} outside [0, {period}]"))
            }
            Self::Threshold(k) if !(0.0..=100.0).contains(k) => {
                bad(format!("threshold {k} outside [0, 100]"))
            }
            Self::Schedule(ts) if ts.iter().any(|t| !(*t >= 0.0)) => {
                bad("schedule times must be non-negative".into())
            }
            _ => Ok(()),
        }
    }

    /// OFF time fixed at the period start, `None` for never. Only defined
    /// for the rules that commit up front; ROA consumes one uniform draw
    /// from `rng` whether or not it is used.
    pub fn planned_off_time<R: Rng + ?Sized>(
        &self,
        sbs_index: usize,
        rent: f64,
        buy: f64,
        period: f64,
        rng: &mut R,
    ) -> Option<f64> {
        let t = match self {
            Self::Doa => {
                if rent <= 0.0 {
                    return None;
                }
                doa_off_time(rent, buy, period)
            }
            Self::Roa => {
                let mu: f64 = rng.random();
                if buy <= 0.0 {
                    0.0
                } else if rent <= 0.0 || rent * period < buy {
                    return None;
                } else {
                    roa_off_time(rent, buy, mu)
                }
            }
            Self::Fixed(t) => baseline_fixed(*t),
            Self::Schedule(ts) => *ts.get(sbs_index)?,
            Self::Adaptive | Self::Threshold(_) => return None,
        };
        (t < period).then_some(t)
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Doa => f.write_str("doa"),
            Self::Roa => f.write_str("roa"),
            Self::Adaptive => f.write_str("adaptive"),
            Self::Fixed(t) => write!(f, "fixed:{t}"),
            Self::Threshold(k) => write!(f, "threshold:{k}"),
            Self::Schedule(ts) => {
                let parts: Vec<String> = ts.iter().map(f64::to_string).collect();
                write!(f, "schedule:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for PolicySpec {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let number = |a: &str| {
            a.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    ScheduleError::InvalidParameter(format!("`{a}` in `{s}` is not a number"))
                })
        };
        match (name.to_ascii_lowercase().as_str(), arg) {
            ("doa", None) => Ok(Self::Doa),
            ("roa", None) => Ok(Self::Roa),
            ("adaptive", None) => Ok(Self::Adaptive),
            ("fixed", Some(a)) => Ok(Self::Fixed(number(a)?)),
            ("threshold", Some(a)) => Ok(Self::Threshold(number(a)?)),
            ("schedule", Some(a)) => a
                .split(',')
                .map(|p| number(p.trim()))
                .collect::<Result<_, _>>()
                .map(Self::Schedule),
            _ => Err(ScheduleError::UnknownPolicy(s.to_string())),
        }
    }
}
