//! Two-tier radio model: node placement, path loss, SINR/SNR, max-SINR user
//! association, round-robin rates and per-BS file transmission delay.
//!
//! BS index 0 is always the macro cell (MBS). SBSs reuse one band and
//! interfere with each other; the MBS has its own band, so MBS users see
//! noise only and SBS users never see MBS interference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::units::{dbm_to_watts, watts_to_dbm};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid service area {width} x {height} m")]
    InvalidArea { width: f64, height: f64 },
    #[error("a topology needs at least one UE")]
    NoUsers,
    #[error("distance {0} m is not a valid link distance")]
    Domain(f64),
    #[error("invalid BS {id}: {reason}")]
    InvalidBs { id: usize, reason: String },
    #[error("gain matrix is {rows}x{cols}, expected {ue}x{bs}")]
    GainShape {
        rows: usize,
        cols: usize,
        ue: usize,
        bs: usize,
    },
    #[error("channel gain h[{ue}][{bs}] = {value} must be positive and finite")]
    InvalidGain { ue: usize, bs: usize, value: f64 },
    #[error("noise power must be positive, got {0} W")]
    InvalidNoise(f64),
    #[error("ON/OFF vector has {got} entries for {expected} BSs")]
    SigmaLength { got: usize, expected: usize },
    #[error("the MBS must always be ON")]
    MbsOff,
    #[error("UE {ue} is not associated with any BS")]
    Unassociated { ue: usize },
    #[error("association invariant violated: {0}")]
    Partition(String),
    #[error("BS {0} serves no UEs")]
    EmptyCell(usize),
    #[error("topology document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangular service area `[0, width] x [0, height]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Default for Area {
    fn default() -> Self {
        Self {
            width: 500.0,
            height: 500.0,
        }
    }
}

impl Area {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.width) && ok(self.height) {
            Ok(())
        } else {
            Err(NetworkError::InvalidArea {
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn center(&self) -> Position {
        Position::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        Position::new(
            rng.random::<f64>() * self.width,
            rng.random::<f64>() * self.height,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BsKind {
    Mbs,
    Sbs,
}

/// Log-distance path loss `intercept + slope * log10(d / 1 km)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl PathLoss {
    pub const MBS_DEFAULT: PathLoss = PathLoss {
        intercept_db: 128.1,
        slope_db: 37.6,
    };
    pub const SBS_DEFAULT: PathLoss = PathLoss {
        intercept_db: 140.7,
        slope_db: 36.7,
    };

    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.intercept_db + self.slope_db * (distance_m / 1000.0).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub mbs: PathLoss,
    pub sbs: PathLoss,
    /// Distances below this are clamped up to it (meters).
    pub min_distance: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            mbs: PathLoss::MBS_DEFAULT,
            sbs: PathLoss::SBS_DEFAULT,
            min_distance: 1.0,
        }
    }
}

impl ChannelModel {
    pub fn path_loss(&self, link: BsKind) -> &PathLoss {
        match link {
            BsKind::Mbs => &self.mbs,
            BsKind::Sbs => &self.sbs,
        }
    }
}

/// Linear channel gain of a link of length `d` meters.
pub fn channel_gain(d: f64, link: BsKind, model: &ChannelModel) -> Result<f64, NetworkError> {
    if d.is_nan() {
        return Err(NetworkError::Domain(d));
    }
    let d = d.max(model.min_distance);
    if !(d > 0.0 && d.is_finite()) {
        return Err(NetworkError::Domain(d));
    }
    Ok(10f64.powf(-model.path_loss(link).loss_db(d) / 10.0))
}

/// Radio and power parameters shared by every BS of one tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Transmit power, watts.
    pub tx_power: f64,
    /// Power draw when fully utilized, watts.
    pub op_power: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
    pub max_users: u32,
}

impl RadioParams {
    pub fn default_mbs() -> Self {
        Self {
            tx_power: dbm_to_watts(33.0),
            op_power: 20.0,
            bandwidth: 10e6,
            max_users: 50,
        }
    }

    pub fn default_sbs() -> Self {
        Self {
            tx_power: dbm_to_watts(23.0),
            op_power: 10.0,
            bandwidth: 10e6,
            max_users: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsParams {
    pub id: usize,
    pub kind: BsKind,
    pub position: Position,
    pub tx_power: f64,
    pub op_power_max: f64,
    pub bandwidth: f64,
    pub max_users: u32,
}

impl BsParams {
    pub fn new(id: usize, position: Position, radio: &RadioParams) -> Self {
        Self {
            id,
            kind: if id == 0 { BsKind::Mbs } else { BsKind::Sbs },
            position,
            tx_power: radio.tx_power,
            op_power_max: radio.op_power,
            bandwidth: radio.bandwidth,
            max_users: radio.max_users,
        }
    }

    /// Share of the full-load power spent on transmission.
    pub fn tx_fraction(&self) -> f64 {
        self.tx_power / self.op_power_max
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |reason: &str| {
            Err(NetworkError::InvalidBs {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if (self.kind == BsKind::Mbs) != (self.id == 0) {
            return bad("BS 0 must be the MBS and only BS 0");
        }
        if !(self.tx_power > 0.0 && self.tx_power.is_finite()) {
            return bad("transmit power must be positive");
        }
        if !(self.op_power_max > 0.0 && self.op_power_max.is_finite()) {
            return bad("operational power must be positive");
        }
        if self.tx_fraction() > 1.0 {
            return bad("transmit power exceeds operational power");
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive");
        }
        if self.max_users == 0 {
            return bad("max_users must be at least 1");
        }
        Ok(())
    }
}

/// Static node placement with its time-averaged channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    area: Area,
    bs: Vec<BsParams>,
    ue: Vec<Position>,
    /// Row-major `[ue][bs]`.
    gain: Vec<f64>,
    noise_power: f64,
    channel: ChannelModel,
}

impl Topology {
    /// Builds a topology and fills the gain matrix from the channel model.
    pub fn new(
        area: Area,
        bs: Vec<BsParams>,
        ue: Vec<Position>,
        noise_power: f64,
        channel: ChannelModel,
    ) -> Result<Self, NetworkError> {
        let mut gain = Vec::with_capacity(ue.len() * bs.len());
        for u in &ue {
            for b in &bs {
                gain.push(channel_gain(u.distance(&b.position), b.kind, &channel)?);
            }
        }
        let topo = Self {
            area,
            bs,
            ue,
            gain,
            noise_power,
            channel,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// Builds a topology from an explicit `[ue][bs]` gain matrix.
    pub fn with_gains(
        area: Area,
        bs: Vec<BsParams>,
        ue: Vec<Position>,
        gains: Vec<Vec<f64>>,
        noise_power: f64,
    ) -> Result<Self, NetworkError> {
        if gains.len() != ue.len() || gains.iter().any(|row| row.len() != bs.len()) {
            return Err(NetworkError::GainShape {
                rows: gains.len(),
                cols: gains.first().map_or(0, Vec::len),
                ue: ue.len(),
                bs: bs.len(),
            });
        }
        let topo = Self {
            area,
            bs,
            ue,
            gain: gains.into_iter().flatten().collect(),
            noise_power,
            channel: ChannelModel::default(),
        };
        topo.validate()?;
        Ok(topo)
    }

    fn validate(&self) -> Result<(), NetworkError> {
        self.area.validate()?;
        if self.ue.is_empty() {
            return Err(NetworkError::NoUsers);
        }
        if self.bs.is_empty() {
            return Err(NetworkError::InvalidBs {
                id: 0,
                reason: "missing MBS".into(),
            });
        }
        for (i, b) in self.bs.iter().enumerate() {
            if b.id != i {
                return Err(NetworkError::InvalidBs {
                    id: b.id,
                    reason: format!("stored at position {i}"),
                });
            }
            b.validate()?;
            if i > 0 && b.max_users > self.bs[0].max_users {
                return Err(NetworkError::InvalidBs {
                    id: i,
                    reason: "an SBS cannot serve more users than the MBS".into(),
                });
            }
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(NetworkError::InvalidNoise(self.noise_power));
        }
        let n_bs = self.bs.len();
        for (k, &g) in self.gain.iter().enumerate() {
            if !(g > 0.0 && g.is_finite()) {
                return Err(NetworkError::InvalidGain {
                    ue: k / n_bs,
                    bs: k % n_bs,
                    value: g,
                });
            }
        }
        Ok(())
    }

    pub fn area(&self) -> &Area {
        &self.area
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn base_stations(&self) -> &[BsParams] {
        &self.bs
    }

    pub fn bs(&self, id: usize) -> &BsParams {
        &self.bs[id]
    }

    pub fn mbs(&self) -> &BsParams {
        &self.bs[0]
    }

    pub fn users(&self) -> &[Position] {
        &self.ue
    }

    pub fn n_bs(&self) -> usize {
        self.bs.len()
    }

    pub fn n_sbs(&self) -> usize {
        self.bs.len() - 1
    }

    pub fn n_ue(&self) -> usize {
        self.ue.len()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    #[inline]
    pub fn gain(&self, ue: usize, bs: usize) -> f64 {
        self.gain[ue * self.bs.len() + bs]
    }

    /// Changes the transmit power of one SBS. Gains are unaffected.
    pub fn set_tx_power(&mut self, bs: usize, watts: f64) -> Result<(), NetworkError> {
        let old = self.bs[bs].tx_power;
        self.bs[bs].tx_power = watts;
        if let Err(e) = self.bs[bs].validate() {
            self.bs[bs].tx_power = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            area: self.area,
            noise_power_dbm: watts_to_dbm(self.noise_power),
            channel: self.channel,
            base_stations: self
                .bs
                .iter()
                .map(|b| BsRecord {
                    id: b.id,
                    kind: b.kind,
                    x: b.position.x,
                    y: b.position.y,
                    tx_power_dbm: watts_to_dbm(b.tx_power),
                    op_power_w: b.op_power_max,
                    bandwidth_hz: b.bandwidth,
                    max_users: b.max_users,
                })
                .collect(),
            users: self.ue.clone(),
        }
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self, NetworkError> {
        let bs = doc
            .base_stations
            .iter()
            .map(|r| BsParams {
                id: r.id,
                kind: r.kind,
                position: Position::new(r.x, r.y),
                tx_power: dbm_to_watts(r.tx_power_dbm),
                op_power_max: r.op_power_w,
                bandwidth: r.bandwidth_hz,
                max_users: r.max_users,
            })
            .collect();
        Self::new(
            doc.area,
            bs,
            doc.users.clone(),
            dbm_to_watts(doc.noise_power_dbm),
            doc.channel,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("topology serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, NetworkError> {
        let doc: TopologyDocument =
            serde_json::from_str(json).map_err(|e| NetworkError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// JSON form of a [`Topology`]: positions in meters, powers in dBm, gains
/// recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub area: Area,
    pub noise_power_dbm: f64,
    pub channel: ChannelModel,
    pub base_stations: Vec<BsRecord>,
    pub users: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsRecord {
    pub id: usize,
    pub kind: BsKind,
    pub x: f64,
    pub y: f64,
    pub tx_power_dbm: f64,
    pub op_power_w: f64,
    pub bandwidth_hz: f64,
    pub max_users: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementParams {
    pub area: Area,
    pub n_sbs: usize,
    pub n_ue: usize,
    pub mbs: RadioParams,
    pub sbs: RadioParams,
    pub noise_power: f64,
    pub channel: ChannelModel,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self {
            area: Area::default(),
            n_sbs: 6,
            n_ue: 30,
            mbs: RadioParams::default_mbs(),
            sbs: RadioParams::default_sbs(),
            noise_power: dbm_to_watts(-104.0),
            channel: ChannelModel::default(),
        }
    }
}

/// MBS at the area center; SBSs, then UEs, uniform over the area.
pub fn place_nodes<R: Rng + ?Sized>(
    params: &PlacementParams,
    rng: &mut R,
) -> Result<Topology, NetworkError> {
    params.area.validate()?;
    if params.n_ue == 0 {
        return Err(NetworkError::NoUsers);
    }
    let mut bs = Vec::with_capacity(params.n_sbs + 1);
    bs.push(BsParams::new(0, params.area.center(), &params.mbs));
    for id in 1..=params.n_sbs {
        bs.push(BsParams::new(id, params.area.sample(rng), &params.sbs));
    }
    let ue = (0..params.n_ue).map(|_| params.area.sample(rng)).collect();
    Topology::new(params.area, bs, ue, params.noise_power, params.channel)
}

/// Downlink SINR of `ue` towards SBS `bs` under the ON/OFF vector `sigma`.
/// Interference comes from the other ON SBSs only.
pub fn sinr(ue: usize, bs: usize, sigma: &[bool], topo: &Topology) -> f64 {
    debug_assert!(bs >= 1, "sinr is defined for SBSs");
    if !sigma[bs] {
        return 0.0;
    }
    let interference: f64 = (1..topo.n_bs())
        .filter(|&j| j != bs && sigma[j])
        .map(|j| topo.bs(j).tx_power * topo.gain(ue, j))
        .sum();
    topo.bs(bs).tx_power * topo.gain(ue, bs) / (interference + topo.noise_power())
}

/// SNR of `ue` towards the MBS; independent of the SBS states.
pub fn snr_mbs(ue: usize, topo: &Topology) -> f64 {
    topo.mbs().tx_power * topo.gain(ue, 0) / topo.noise_power()
}

/// Link quality of `ue` towards `bs` (SNR for the MBS, SINR otherwise).
pub fn link_quality(ue: usize, bs: usize, sigma: &[bool], topo: &Topology) -> f64 {
    if bs == 0 {
        snr_mbs(ue, topo)
    } else {
        sinr(ue, bs, sigma, topo)
    }
}

/// ON/OFF vector together with the resulting user association.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    sigma: Vec<bool>,
    serving: Vec<usize>,
    quality: Vec<f64>,
    members: Vec<Vec<usize>>,
}

impl NetworkState {
    pub fn sigma(&self) -> &[bool] {
        &self.sigma
    }

    pub fn is_on(&self, bs: usize) -> bool {
        self.sigma[bs]
    }

    /// BS serving `ue`.
    pub fn serving(&self, ue: usize) -> usize {
        self.serving[ue]
    }

    /// SINR (or SNR) of `ue` on its serving link.
    pub fn quality(&self, ue: usize) -> f64 {
        self.quality[ue]
    }

    /// UEs associated with `bs`, ascending.
    pub fn members(&self, bs: usize) -> &[usize] {
        &self.members[bs]
    }

    pub fn load(&self, bs: usize) -> usize {
        self.members[bs].len()
    }

    /// Checks that every UE sits in exactly one association set and only ON
    /// BSs serve users.
    pub fn check_partition(&self) -> Result<(), NetworkError> {
        if !self.sigma[0] {
            return Err(NetworkError::MbsOff);
        }
        let mut seen = vec![0u32; self.serving.len()];
        for (bs, set) in self.members.iter().enumerate() {
            if !set.is_empty() && !self.sigma[bs] {
                return Err(NetworkError::Partition(format!("OFF BS {bs} serves users")));
            }
            for &ue in set {
                if self.serving[ue] != bs {
                    return Err(NetworkError::Partition(format!(
                        "UE {ue} listed under BS {bs} but served by {}",
                        self.serving[ue]
                    )));
                }
                seen[ue] += 1;
            }
        }
        match seen.iter().position(|&c| c != 1) {
            Some(ue) => Err(NetworkError::Partition(format!(
                "UE {ue} appears in {} association sets",
                seen[ue]
            ))),
            None => Ok(()),
        }
    }
}

/// Associates every UE with the ON BS offering the largest SINR/SNR. Ties go
/// to the lowest BS index.
pub fn associate(sigma: &[bool], topo: &Topology) -> Result<NetworkState, NetworkError> {
    if sigma.len() != topo.n_bs() {
        return Err(NetworkError::SigmaLength {
            got: sigma.len(),
            expected: topo.n_bs(),
        });
    }
    if !sigma[0] {
        return Err(NetworkError::MbsOff);
    }
    let mut serving = Vec::with_capacity(topo.n_ue());
    let mut quality = Vec::with_capacity(topo.n_ue());
    let mut members = vec![Vec::new(); topo.n_bs()];
    for ue in 0..topo.n_ue() {
        let mut best = 0;
        let mut best_q = snr_mbs(ue, topo);
        for bs in 1..topo.n_bs() {
            if !sigma[bs] {
                continue;
            }
            let q = sinr(ue, bs, sigma, topo);
            if q > best_q {
                best = bs;
                best_q = q;
            }
        }
        serving.push(best);
        quality.push(best_q);
        members[best].push(ue);
    }
    Ok(NetworkState {
        sigma: sigma.to_vec(),
        serving,
        quality,
        members,
    })
}

/// Round-robin rate of `ue` on its serving BS, bits/s.
pub fn rate(ue: usize, state: &NetworkState, topo: &Topology) -> Result<f64, NetworkError> {
    let bs = state.serving(ue);
    let load = state.load(bs);
    if load == 0 {
        return Err(NetworkError::EmptyCell(bs));
    }
    Ok(topo.bs(bs).bandwidth / load as f64 * (1.0 + state.quality(ue)).log2())
}

/// Time for `bs` to deliver a `file_bits` file to each of its UEs, seconds.
/// Infinite when some member has a zero rate.
pub fn bs_delay(bs: usize, state: &NetworkState, topo: &Topology, file_bits: f64) -> f64 {
    state
        .members(bs)
        .iter()
        .map(|&ue| {
            let c = rate(ue, state, topo).expect("member of a non-empty cell");
            if c > 0.0 {
                file_bits / c
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, |acc, d| acc + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn approx(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    fn radio_sbs() -> RadioParams {
        RadioParams::default_sbs()
    }

    /// One MBS plus `n_sbs` SBSs, `gains[ue][bs]` given explicitly.
    fn explicit(gains: Vec<Vec<f64>>) -> Topology {
        let n_bs = gains[0].len();
        let bs = (0..n_bs)
            .map(|id| {
                let r = if id == 0 {
                    RadioParams::default_mbs()
                } else {
                    radio_sbs()
                };
                BsParams::new(id, Position::new(0.0, 0.0), &r)
            })
            .collect();
        let ue = vec![Position::new(1.0, 1.0); gains.len()];
        Topology::with_gains(Area::default(), bs, ue, gains, dbm_to_watts(-104.0)).unwrap()
    }

    #[test]
    fn gain_at_one_km_on_mbs_link() {
        let g = channel_gain(1000.0, BsKind::Mbs, &ChannelModel::default()).unwrap();
        assert!(approx(g, 10f64.powf(-12.81), 1e-12));
    }

    #[test]
    fn gain_clamps_below_min_distance() {
        let m = ChannelModel::default();
        let at_one = channel_gain(1.0, BsKind::Sbs, &m).unwrap();
        assert_eq!(channel_gain(0.2, BsKind::Sbs, &m).unwrap(), at_one);
        assert_eq!(channel_gain(0.0, BsKind::Sbs, &m).unwrap(), at_one);
    }

    #[test]
    fn doubling_distance_on_sbs_link() {
        let m = ChannelModel::default();
        let r = channel_gain(200.0, BsKind::Sbs, &m).unwrap()
            / channel_gain(100.0, BsKind::Sbs, &m).unwrap();
        assert!(approx(r, 0.078_563_335_907_614_25, 1e-10));
    }

    #[test]
    fn gain_domain_errors() {
        let mut m = ChannelModel::default();
        assert!(channel_gain(f64::NAN, BsKind::Mbs, &m).is_err());
        m.min_distance = 0.0;
        assert_eq!(
            channel_gain(0.0, BsKind::Mbs, &m),
            Err(NetworkError::Domain(0.0))
        );
    }

    #[test]
    fn placement_mbs_only() {
        let p = PlacementParams {
            n_sbs: 0,
            n_ue: 1,
            ..Default::default()
        };
        let topo = place_nodes(&p, &mut stream(1, &[])).unwrap();
        assert_eq!(topo.n_bs(), 1);
        let st = associate(&[true], &topo).unwrap();
        assert_eq!(st.serving(0), 0);
    }

    #[test]
    fn placement_is_deterministic() {
        let p = PlacementParams::default();
        let a = place_nodes(&p, &mut stream(42, &[])).unwrap();
        let b = place_nodes(&p, &mut stream(42, &[])).unwrap();
        assert_eq!(a, b);
        let c = place_nodes(&p, &mut stream(43, &[])).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn placement_snapshot_scale() {
        let p = PlacementParams {
            n_sbs: 15,
            n_ue: 30,
            ..Default::default()
        };
        let topo = place_nodes(&p, &mut stream(7, &[])).unwrap();
        assert_eq!(topo.n_bs(), 16);
        assert_eq!(topo.n_ue(), 30);
        assert_eq!(topo.mbs().position, Position::new(250.0, 250.0));
        assert!(topo.users().iter().all(|u| topo.area().contains(u)));
        assert!(topo
            .base_stations()
            .iter()
            .all(|b| topo.area().contains(&b.position)));
    }

    #[test]
    fn placement_errors() {
        let mut p = PlacementParams {
            n_ue: 0,
            ..Default::default()
        };
        assert_eq!(
            place_nodes(&p, &mut stream(1, &[])),
            Err(NetworkError::NoUsers)
        );
        p.n_ue = 3;
        p.area.width = 0.0;
        assert!(matches!(
            place_nodes(&p, &mut stream(1, &[])),
            Err(NetworkError::InvalidArea { .. })
        ));
    }

    #[test]
    fn sinr_of_off_sbs_is_zero() {
        let topo = explicit(vec![vec![1e-12, 1e-10]]);
        assert_eq!(sinr(0, 1, &[true, false], &topo), 0.0);
    }

    #[test]
    fn sinr_single_sbs_reference() {
        let topo = explicit(vec![vec![1e-12, 1e-10]]);
        assert!(approx(
            sinr(0, 1, &[true, true], &topo),
            501.187_233_627_272_75,
            1e-10
        ));
    }

    #[test]
    fn sinr_symmetric_pair_tends_to_one() {
        let bs = (0..3)
            .map(|id| {
                let r = if id == 0 {
                    RadioParams::default_mbs()
                } else {
                    radio_sbs()
                };
                BsParams::new(id, Position::new(0.0, 0.0), &r)
            })
            .collect();
        let topo = Topology::with_gains(
            Area::default(),
            bs,
            vec![Position::new(0.0, 0.0)],
            vec![vec![1e-12, 1e-6, 1e-6]],
            1e-30,
        )
        .unwrap();
        assert!(approx(sinr(0, 1, &[true, true, true], &topo), 1.0, 1e-12));
    }

    #[test]
    fn snr_reference_and_invariance() {
        let topo = explicit(vec![vec![1e-12, 1e-10, 1e-9]]);
        assert!(approx(snr_mbs(0, &topo), 50.118_723_362_727_266, 1e-10));
        let a = snr_mbs(0, &topo);
        // no sigma argument at all: SBS state cannot enter
        assert_eq!(link_quality(0, 0, &[true, false, true], &topo), a);
        assert_eq!(link_quality(0, 0, &[true, true, false], &topo), a);
    }

    #[test]
    fn association_all_off_goes_to_mbs() {
        let topo = explicit(vec![vec![1e-12, 1e-8, 1e-9]; 4]);
        let st = associate(&[true, false, false], &topo).unwrap();
        assert_eq!(st.members(0), &[0, 1, 2, 3]);
        st.check_partition().unwrap();
    }

    #[test]
    fn association_prefers_stronger_sbs() {
        // SNR 50.1 towards the MBS vs SINR 501.2 towards the SBS.
        let topo = explicit(vec![vec![1e-12, 1e-10]]);
        let st = associate(&[true, true], &topo).unwrap();
        assert_eq!(st.serving(0), 1);
    }

    #[test]
    fn association_tie_goes_to_lowest_index() {
        let topo = explicit(vec![vec![1e-15, 1e-9, 1e-12, 1e-12, 1e-12, 1e-9]]);
        // SBS 1 and 5 have identical gains and see identical interference.
        let st = associate(&[true, true, false, false, false, true], &topo).unwrap();
        assert_eq!(st.serving(0), 1);
        let st = associate(&[true, false, true, false, false, true], &topo).unwrap();
        assert_eq!(st.serving(0), 5);
        let topo = explicit(vec![vec![1e-15, 1e-12, 1e-9, 1e-12, 1e-12, 1e-9]]);
        let st = associate(&[true, false, true, false, false, true], &topo).unwrap();
        assert_eq!(st.serving(0), 2);
    }

    #[test]
    fn association_rejects_mbs_off() {
        let topo = explicit(vec![vec![1e-12, 1e-10]]);
        assert_eq!(associate(&[false, true], &topo), Err(NetworkError::MbsOff));
        assert!(matches!(
            associate(&[true], &topo),
            Err(NetworkError::SigmaLength { .. })
        ));
    }

    #[test]
    fn rate_reference_values() {
        // Two UEs on the MBS with SNR 3: (10 MHz / 2) * log2(4).
        let g = 3.0 * dbm_to_watts(-104.0) / dbm_to_watts(33.0);
        let topo = explicit(vec![vec![g], vec![g]]);
        let st = associate(&[true], &topo).unwrap();
        assert!(approx(rate(0, &st, &topo).unwrap(), 1e7, 1e-12));
        // K = 1e5 bits to both at 1e7 bits/s each.
        assert!(approx(bs_delay(0, &st, &topo, 1e5), 0.02, 1e-12));

        // Single UE, SNR 1: rate equals the bandwidth.
        let g1 = dbm_to_watts(-104.0) / dbm_to_watts(33.0);
        let topo = explicit(vec![vec![g1]]);
        let st = associate(&[true], &topo).unwrap();
        let c = rate(0, &st, &topo).unwrap();
        assert!(approx(c, 1e7, 1e-12));
        assert!(approx(bs_delay(0, &st, &topo, c), 1.0, 1e-12));
    }

    #[test]
    fn empty_cell_has_zero_delay() {
        let topo = explicit(vec![vec![1e-12, 1e-10]]);
        let st = associate(&[true, true], &topo).unwrap();
        assert_eq!(bs_delay(0, &st, &topo, 1e5), 0.0);
    }

    #[test]
    fn topology_json_round_trip() {
        let topo = place_nodes(&PlacementParams::default(), &mut stream(9, &[])).unwrap();
        let back = Topology::from_json(&topo.to_json()).unwrap();
        assert_eq!(back.n_bs(), topo.n_bs());
        assert_eq!(back.users(), topo.users());
        for ue in 0..topo.n_ue() {
            for bs in 0..topo.n_bs() {
                assert_eq!(back.gain(ue, bs), topo.gain(ue, bs));
            }
        }
        for (a, b) in back.base_stations().iter().zip(topo.base_stations()) {
            assert!(approx(a.tx_power, b.tx_power, 1e-12));
        }
        assert!(Topology::from_json("{\"area\": 1}").is_err());
    }
}
