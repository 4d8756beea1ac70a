//! Power consumption, Poisson energy arrivals and bounded energy storage.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::network::BsParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("weight q = {0} must lie in [0, 1]")]
    InvalidQ(f64),
    #[error("invalid harvest parameters: rate {rate}/s, quantum {quantum} J")]
    InvalidHarvest { rate: f64, quantum: f64 },
    #[error("invalid storage: capacity {capacity} J, initial {initial} J")]
    InvalidStorage { capacity: f64, initial: f64 },
    #[error("consumed {consumed} J exceeds available {available} J; depletion was not checked")]
    Overdraw { consumed: f64, available: f64 },
    #[error("harvest trace: {0}")]
    Trace(String),
}

/// Split between load-proportional and fixed power draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModelParams {
    pub q: f64,
}

impl Default for PowerModelParams {
    fn default() -> Self {
        Self { q: 0.9 }
    }
}

impl PowerModelParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if (0.0..=1.0).contains(&self.q) {
            Ok(())
        } else {
            Err(EnergyError::InvalidQ(self.q))
        }
    }
}

/// Power drawn by a BS serving `n_users` UEs:
/// `(n / M)(1 - q) P_op + q P_op`, with `n / M` capped at 1.
pub fn bs_power(params: &BsParams, n_users: usize, q: f64) -> f64 {
    let m = params.max_users as usize;
    let n = if n_users > m {
        log::warn!(
            "BS {} has {} users above its limit {}; utilization clamped",
            params.id,
            n_users,
            m
        );
        m
    } else {
        n_users
    };
    n as f64 / m as f64 * (1.0 - q) * params.op_power_max + q * params.op_power_max
}

/// Poisson energy arrivals of fixed size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestParams {
    /// Arrivals per second.
    pub rate: f64,
    /// Joules per arrival.
    pub quantum: f64,
}

impl Default for HarvestParams {
    fn default() -> Self {
        Self {
            rate: 20.0,
            quantum: 0.2,
        }
    }
}

impl HarvestParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.rate) && ok(self.quantum) {
            Ok(())
        } else {
            Err(EnergyError::InvalidHarvest {
                rate: self.rate,
                quantum: self.quantum,
            })
        }
    }

    /// Mean harvested power, watts.
    pub fn mean_power(&self) -> f64 {
        self.rate * self.quantum
    }
}

/// Energy harvested during one slot of length `dt`.
pub fn step_harvest<R: Rng + ?Sized>(params: &HarvestParams, dt: f64, rng: &mut R) -> f64 {
    let lambda = params.rate * dt;
    if lambda <= 0.0 || params.quantum == 0.0 {
        return 0.0;
    }
    let arrivals = Poisson::new(lambda)
        .expect("positive finite Poisson mean")
        .sample(rng);
    arrivals * params.quantum
}

/// One slot of the storage recursion: credit the harvest, charge the
/// consumption, cap at the capacity.
pub fn update_storage(
    stored: f64,
    harvested: f64,
    consumed: f64,
    capacity: f64,
) -> Result<f64, EnergyError> {
    let available = stored + harvested;
    if consumed > available {
        return Err(EnergyError::Overdraw {
            consumed,
            available,
        });
    }
    Ok((available - consumed).min(capacity))
}

/// True when the stored energy plus this slot's harvest cannot fund `power`
/// for the slot.
pub fn check_depletion(stored: f64, power: f64, dt: f64, harvested: f64) -> bool {
    stored + harvested < power * dt
}

/// Per-SBS storage. Index `j` holds SBS `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyState {
    pub stored: Vec<f64>,
    pub capacity: f64,
    /// Stored energy at the start of the current period.
    pub initial: Vec<f64>,
    /// Depletion time within the current period, seconds from period start.
    pub depleted_at: Vec<Option<f64>>,
}

impl EnergyState {
    pub fn new(n_sbs: usize, initial: f64, capacity: f64) -> Result<Self, EnergyError> {
        if !(capacity > 0.0 && capacity.is_finite()) || !(0.0..=capacity).contains(&initial) {
            return Err(EnergyError::InvalidStorage { capacity, initial });
        }
        Ok(Self {
            stored: vec![initial; n_sbs],
            capacity,
            initial: vec![initial; n_sbs],
            depleted_at: vec![None; n_sbs],
        })
    }

    /// Carries the stored energy into a new period.
    pub fn begin_period(&mut self) {
        self.initial.clone_from(&self.stored);
        self.depleted_at.iter_mut().for_each(|d| *d = None);
    }

    /// Marks SBS index `j` depleted at `t` unless it already is.
    pub fn mark_depleted(&mut self, j: usize, t: f64) {
        if self.depleted_at[j].is_none() {
            self.depleted_at[j] = Some(t);
        }
    }
}

/// Recorded per-slot arrivals: `joules[slot * n_sbs + j]` for SBS `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestTrace {
    dt: f64,
    n_sbs: usize,
    joules: Vec<f64>,
}

impl HarvestTrace {
    pub fn zeros(dt: f64, n_sbs: usize, n_slots: usize) -> Self {
        Self {
            dt,
            n_sbs,
            joules: vec![0.0; n_sbs * n_slots],
        }
    }

    /// Samples `n_slots` slots, drawing SBS `j + 1` from `rngs[j]`.
    pub fn sample<R: Rng>(params: &HarvestParams, dt: f64, n_slots: usize, rngs: &mut [R]) -> Self {
        let n_sbs = rngs.len();
        let mut joules = vec![0.0; n_sbs * n_slots];
        for (j, rng) in rngs.iter_mut().enumerate() {
            for slot in 0..n_slots {
                joules[slot * n_sbs + j] = step_harvest(params, dt, rng);
            }
        }
        Self { dt, n_sbs, joules }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_sbs(&self) -> usize {
        self.n_sbs
    }

    pub fn n_slots(&self) -> usize {
        self.joules.len().checked_div(self.n_sbs).unwrap_or(0)
    }

    /// Arrivals of every SBS in `slot`.
    #[inline]
    pub fn slot(&self, slot: usize) -> &[f64] {
        &self.joules[slot * self.n_sbs..(slot + 1) * self.n_sbs]
    }

    pub fn get(&self, slot: usize, sbs_index: usize) -> f64 {
        self.joules[slot * self.n_sbs + sbs_index]
    }

    pub fn set(&mut self, slot: usize, sbs_index: usize, joules: f64) {
        self.joules[slot * self.n_sbs + sbs_index] = joules;
    }

    /// Slots `[start, start + len)` as a new trace.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let lo = start * self.n_sbs;
        let hi = (start + len) * self.n_sbs;
        Self {
            dt: self.dt,
            n_sbs: self.n_sbs,
            joules: self.joules[lo..hi].to_vec(),
        }
    }

    /// Arrivals of one SBS over all slots.
    pub fn column(&self, sbs_index: usize) -> Vec<f64> {
        (0..self.n_slots())
            .map(|s| self.get(s, sbs_index))
            .collect()
    }

    /// Writes `time,sbs_id,joules` rows; `sbs_id` is the 1-based BS index and
    /// `time` the slot start in seconds.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EnergyError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| EnergyError::Trace(e.to_string());
        out.write_record(["time", "sbs_id", "joules"])
            .map_err(err)?;
        for slot in 0..self.n_slots() {
            let t = slot as f64 * self.dt;
            for j in 0..self.n_sbs {
                out.write_record([
                    t.to_string(),
                    (j + 1).to_string(),
                    self.get(slot, j).to_string(),
                ])
                .map_err(err)?;
            }
        }
        out.flush().map_err(|e| EnergyError::Trace(e.to_string()))
    }

    /// Reads `time,sbs_id,joules` rows onto a grid of `n_slots` slots of
    /// length `dt`. Rows in the same slot add up; absent slots are zero.
    pub fn read_csv<R: Read>(
        r: R,
        dt: f64,
        n_sbs: usize,
        n_slots: usize,
    ) -> Result<Self, EnergyError> {
        #[derive(Deserialize)]
        struct Row {
            time: f64,
            sbs_id: usize,
            joules: f64,
        }
        let mut trace = Self::zeros(dt, n_sbs, n_slots);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| EnergyError::Trace(e.to_string()))?;
            let at = |msg: String| EnergyError::Trace(format!("data row {}: {msg}", line + 1));
            if row.sbs_id == 0 || row.sbs_id > n_sbs {
                return Err(at(format!("sbs_id {} outside 1..={n_sbs}", row.sbs_id)));
            }
            if !(row.joules >= 0.0 && row.joules.is_finite()) {
                return Err(at(format!("invalid energy {}", row.joules)));
            }
            if !(row.time >= 0.0) {
                return Err(at(format!("invalid time {}", row.time)));
            }
            let slot = (row.time / dt + 1e-9).floor() as usize;
            if slot >= n_slots {
                continue;
            }
            let k = slot * n_sbs + row.sbs_id - 1;
            trace.joules[k] += row.joules;
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Position, RadioParams};
    use crate::rng::stream;
    use proptest::prelude::*;

    fn sbs(op: f64, max_users: u32) -> BsParams {
        BsParams::new(
            1,
            Position::new(0.0, 0.0),
            &RadioParams {
                tx_power: 0.2,
                op_power: op,
                bandwidth: 1e7,
                max_users,
            },
        )
    }

    #[test]
    fn power_fixed_only_when_q_is_one() {
        for n in 0..=10 {
            assert_eq!(bs_power(&sbs(10.0, 10), n, 1.0), 10.0);
        }
    }

    #[test]
    fn power_reference_and_zero() {
        assert!((bs_power(&sbs(10.0, 10), 5, 0.9) - 9.5).abs() < 1e-12);
        assert_eq!(bs_power(&sbs(10.0, 10), 0, 0.0), 0.0);
    }

    #[test]
    fn power_clamps_over_capacity() {
        assert_eq!(
            bs_power(&sbs(10.0, 10), 25, 0.5),
            bs_power(&sbs(10.0, 10), 10, 0.5)
        );
    }

    #[test]
    fn q_validation() {
        assert!(PowerModelParams { q: 1.2 }.validate().is_err());
        assert!(PowerModelParams { q: 0.0 }.validate().is_ok());
    }

    #[test]
    fn harvest_degenerate_cases() {
        let mut rng = stream(3, &[]);
        let none = HarvestParams {
            rate: 0.0,
            quantum: 0.2,
        };
        let empty = HarvestParams {
            rate: 20.0,
            quantum: 0.0,
        };
        for _ in 0..100 {
            assert_eq!(step_harvest(&none, 1.0, &mut rng), 0.0);
            assert_eq!(step_harvest(&empty, 1.0, &mut rng), 0.0);
        }
    }

    #[test]
    fn harvest_mean_and_dispersion() {
        // 1e6 one-second draws at 20 arrivals/s of 0.2 J: mean 4 J.
        let p = HarvestParams::default();
        let mut rng = stream(11, &[]);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let k = step_harvest(&p, 1.0, &mut rng) / p.quantum;
            sum += k;
            sum_sq += k * k;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean * p.quantum - 4.0).abs() < 0.04, "mean {mean}");
        // Poisson: variance equals mean.
        assert!((var / mean - 1.0).abs() < 0.02, "var {var} mean {mean}");
    }

    #[test]
    fn storage_reference_values() {
        assert_eq!(update_storage(99.9, 0.4, 0.0, 100.0).unwrap(), 100.0);
        assert!((update_storage(99.9, 0.4, 0.95, 100.0).unwrap() - 99.35).abs() < 1e-12);
        assert_eq!(update_storage(0.0, 0.0, 0.0, 100.0).unwrap(), 0.0);
        assert!(matches!(
            update_storage(0.1, 0.1, 0.5, 100.0),
            Err(EnergyError::Overdraw { .. })
        ));
    }

    #[test]
    fn depletion_reference_values() {
        assert!(check_depletion(0.5, 9.5, 0.1, 0.2));
        assert!(!check_depletion(0.0, 0.0, 0.1, 0.0));
        assert!(!check_depletion(1.25, 10.0, 0.125, 0.0));
    }

    #[test]
    fn trace_csv_round_trip() {
        let mut rngs = vec![stream(1, &[1]), stream(1, &[2])];
        let t = HarvestTrace::sample(&HarvestParams::default(), 0.1, 20, &mut rngs);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = HarvestTrace::read_csv(buf.as_slice(), 0.1, 2, 20).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn trace_csv_rejects_bad_rows() {
        let bad = "time,sbs_id,joules\n0.0,3,0.2\n";
        assert!(HarvestTrace::read_csv(bad.as_bytes(), 0.1, 2, 10).is_err());
        let neg = "time,sbs_id,joules\n0.0,1,-0.2\n";
        assert!(HarvestTrace::read_csv(neg.as_bytes(), 0.1, 2, 10).is_err());
        let sparse = "time,sbs_id,joules\n0.35,2,0.4\n0.3,2,0.2\n";
        let t = HarvestTrace::read_csv(sparse.as_bytes(), 0.1, 2, 10).unwrap();
        assert!((t.get(3, 1) - 0.6).abs() < 1e-15);
        assert_eq!(t.get(3, 0), 0.0);
    }

    proptest! {
        #[test]
        fn storage_stays_within_bounds(
            e in 0.0f64..100.0,
            h in 0.0f64..5.0,
            p in 0.0f64..20.0,
            dt in 0.01f64..1.0,
        ) {
            if !check_depletion(e, p, dt, h) {
                let next = update_storage(e, h, p * dt, 100.0).unwrap();
                prop_assert!((0.0..=100.0).contains(&next));
            }
        }
    }
}
