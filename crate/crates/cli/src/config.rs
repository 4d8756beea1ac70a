//! Experiment documents: flat dotted keys in TOML, e.g. `energy.rate = 20`.
//!
//! Every key has a default, so an empty document is a valid experiment.
//! Powers are strings with a unit suffix (`"23 dBm"`, `"0.2 W"`, `"200 mW"`).

use std::fmt::Write as _;
use std::path::PathBuf;

use ehsched::engine::{EngineError, TxChange};
use ehsched::units::dbm_to_watts;
use ehsched::{Accounting, OffPrecedence, OffRounding, PolicySpec, ScenarioConfig};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Scenario keys, in document order. Any of them can be swept.
pub const SCENARIO_KEYS: &[&str] = &[
    "time.period",
    "time.dt",
    "time.horizon",
    "network.n_sbs",
    "network.n_ue",
    "network.width",
    "network.height",
    "network.noise",
    "channel.mbs_intercept_db",
    "channel.mbs_slope_db",
    "channel.sbs_intercept_db",
    "channel.sbs_slope_db",
    "channel.min_distance",
    "mbs.tx_power",
    "mbs.op_power",
    "mbs.bandwidth",
    "mbs.max_users",
    "sbs.tx_power",
    "sbs.op_power",
    "sbs.bandwidth",
    "sbs.max_users",
    "sbs.tx_schedule",
    "energy.rate",
    "energy.quantum",
    "energy.initial",
    "energy.capacity",
    "energy.q",
    "cost.alpha_d",
    "cost.alpha_p",
    "cost.alpha_b",
    "traffic.file_bits",
    "engine.accounting",
    "engine.off_precedence",
    "engine.off_rounding",
];

/// Config key for a field named in an engine validation error.
fn key_of_field(field: &str) -> &str {
    match field {
        "period" => "time.period",
        "dt" => "time.dt",
        "horizon_periods" => "time.horizon",
        "n_sbs" => "network.n_sbs",
        "n_ue" => "network.n_ue",
        "file_bits" => "traffic.file_bits",
        "capacity" => "energy.capacity",
        "initial_energy" => "energy.initial",
        "harvest" => "energy.rate",
        "q" => "energy.q",
        "weights" => "cost",
        "policy" => "experiment.policies",
        "sbs_tx_schedule" => "sbs.tx_schedule",
        other => other,
    }
}

impl From<EngineError> for ConfigError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidConfig { field, reason } => invalid(key_of_field(&field), reason),
            other => invalid("scenario", other.to_string()),
        }
    }
}

fn float(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        _ => return Err(invalid(key, format!("expected a number, got {v}"))),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, "must be finite"))
    }
}

fn count(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(invalid(
            key,
            format!("expected a non-negative integer, got {v}"),
        )),
    }
}

fn text<'v>(key: &str, v: &'v Value) -> Result<&'v str, ConfigError> {
    v.as_str()
        .ok_or_else(|| invalid(key, format!("expected a string, got {v}")))
}

/// Parses `"23 dBm"`, `"0.2 W"` or `"200 mW"` into watts.
pub fn parse_power(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| format!("`{s}` has no unit; use dBm, W or mW"))?;
    let (number, unit) = s.split_at(split);
    let x: f64 = number
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", number.trim()))?;
    let watts = match unit.trim() {
        "dBm" | "dbm" => dbm_to_watts(x),
        "W" | "w" => x,
        "mW" | "mw" => x * 1e-3,
        other => return Err(format!("unknown power unit `{other}`")),
    };
    if watts > 0.0 && watts.is_finite() {
        Ok(watts)
    } else {
        Err(format!("`{s}` is not a positive power"))
    }
}

fn power(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::String(s) => parse_power(s).map_err(|r| invalid(key, r)),
        _ => Err(invalid(
            key,
            format!("expected a power with a unit such as \"23 dBm\" or \"0.2 W\", got {v}"),
        )),
    }
}

fn watts_value(w: f64) -> Value {
    Value::String(format!("{w} W"))
}

fn tx_schedule(key: &str, v: &Value) -> Result<Vec<TxChange>, ConfigError> {
    let entries = v
        .as_array()
        .ok_or_else(|| invalid(key, "expected an array of { at, power } tables"))?;
    entries
        .iter()
        .map(|e| {
            let t = e
                .as_table()
                .ok_or_else(|| invalid(key, "entries must be { at, power } tables"))?;
            if let Some(extra) = t.keys().find(|k| *k != "at" && *k != "power") {
                return Err(invalid(key, format!("unknown entry field `{extra}`")));
            }
            let at = t
                .get("at")
                .ok_or_else(|| invalid(key, "entry without `at`"))?;
            let p = t
                .get("power")
                .ok_or_else(|| invalid(key, "entry without `power`"))?;
            Ok(TxChange {
                at: float(key, at)?,
                watts: power(key, p)?,
            })
        })
        .collect()
}

fn choice<T: Copy>(key: &str, v: &Value, options: &[(&str, T)]) -> Result<T, ConfigError> {
    let s = text(key, v)?;
    options
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(s))
        .map(|(_, x)| *x)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            invalid(key, format!("`{s}` is not one of {}", names.join(", ")))
        })
}

const ACCOUNTING: &[(&str, Accounting)] =
    &[("live", Accounting::Live), ("frozen", Accounting::Frozen)];
const PRECEDENCE: &[(&str, OffPrecedence)] = &[
    ("voluntary", OffPrecedence::Voluntary),
    ("depletion", OffPrecedence::Depletion),
];
const ROUNDING: &[(&str, OffRounding)] =
    &[("ceil", OffRounding::Ceil), ("floor", OffRounding::Floor)];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], x: T) -> &'static str {
    options
        .iter()
        .find(|(_, o)| *o == x)
        .map_or("?", |(n, _)| n)
}

/// Sets one scenario key. Fails on unknown keys and ill-typed values; range
/// checks are left to [`ScenarioConfig::validate`].
pub fn apply(cfg: &mut ScenarioConfig, key: &str, v: &Value) -> Result<(), ConfigError> {
    let p = &mut cfg.placement;
    match key {
        "time.period" => cfg.period = float(key, v)?,
        "time.dt" => cfg.dt = float(key, v)?,
        "time.horizon" => cfg.horizon_periods = count(key, v)?,
        "network.n_sbs" => p.n_sbs = count(key, v)?,
        "network.n_ue" => p.n_ue = count(key, v)?,
        "network.width" => p.area.width = float(key, v)?,
        "network.height" => p.area.height = float(key, v)?,
        "network.noise" => p.noise_power = power(key, v)?,
        "channel.mbs_intercept_db" => p.channel.mbs.intercept_db = float(key, v)?,
        "channel.mbs_slope_db" => p.channel.mbs.slope_db = float(key, v)?,
        "channel.sbs_intercept_db" => p.channel.sbs.intercept_db = float(key, v)?,
        "channel.sbs_slope_db" => p.channel.sbs.slope_db = float(key, v)?,
        "channel.min_distance" => p.channel.min_distance = float(key, v)?,
        "mbs.tx_power" => p.mbs.tx_power = power(key, v)?,
        "mbs.op_power" => p.mbs.op_power = power(key, v)?,
        "mbs.bandwidth" => p.mbs.bandwidth = float(key, v)?,
        "mbs.max_users" => p.mbs.max_users = users(key, v)?,
        "sbs.tx_power" => p.sbs.tx_power = power(key, v)?,
        "sbs.op_power" => p.sbs.op_power = power(key, v)?,
        "sbs.bandwidth" => p.sbs.bandwidth = float(key, v)?,
        "sbs.max_users" => p.sbs.max_users = users(key, v)?,
        "sbs.tx_schedule" => cfg.sbs_tx_schedule = tx_schedule(key, v)?,
        "energy.rate" => cfg.harvest.rate = float(key, v)?,
        "energy.quantum" => cfg.harvest.quantum = float(key, v)?,
        "energy.initial" => cfg.initial_energy = float(key, v)?,
        "energy.capacity" => cfg.capacity = float(key, v)?,
        "energy.q" => cfg.power.q = float(key, v)?,
        "cost.alpha_d" => cfg.weights.alpha_d = float(key, v)?,
        "cost.alpha_p" => cfg.weights.alpha_p = float(key, v)?,
        "cost.alpha_b" => cfg.weights.alpha_b = float(key, v)?,
        "traffic.file_bits" => cfg.file_bits = float(key, v)?,
        "engine.accounting" => cfg.accounting = choice(key, v, ACCOUNTING)?,
        "engine.off_precedence" => cfg.off_precedence = choice(key, v, PRECEDENCE)?,
        "engine.off_rounding" => cfg.off_rounding = choice(key, v, ROUNDING)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

fn users(key: &str, v: &Value) -> Result<u32, ConfigError> {
    match count(key, v)? {
        0 => Err(invalid(key, "must be at least 1")),
        n => u32::try_from(n).map_err(|_| invalid(key, "too large")),
    }
}

/// Current value of a scenario key, in the form [`apply`] accepts.
pub fn lookup(cfg: &ScenarioConfig, key: &str) -> Option<Value> {
    let p = &cfg.placement;
    let f = Value::Float;
    let n = |x: usize| Value::Integer(x as i64);
    Some(match key {
        "time.period" => f(cfg.period),
        "time.dt" => f(cfg.dt),
        "time.horizon" => n(cfg.horizon_periods),
        "network.n_sbs" => n(p.n_sbs),
        "network.n_ue" => n(p.n_ue),
        "network.width" => f(p.area.width),
        "network.height" => f(p.area.height),
        "network.noise" => watts_value(p.noise_power),
        "channel.mbs_intercept_db" => f(p.channel.mbs.intercept_db),
        "channel.mbs_slope_db" => f(p.channel.mbs.slope_db),
        "channel.sbs_intercept_db" => f(p.channel.sbs.intercept_db),
        "channel.sbs_slope_db" => f(p.channel.sbs.slope_db),
        "channel.min_distance" => f(p.channel.min_distance),
        "mbs.tx_power" => watts_value(p.mbs.tx_power),
        "mbs.op_power" => watts_value(p.mbs.op_power),
        "mbs.bandwidth" => f(p.mbs.bandwidth),
        "mbs.max_users" => n(p.mbs.max_users as usize),
        "sbs.tx_power" => watts_value(p.sbs.tx_power),
        "sbs.op_power" => watts_value(p.sbs.op_power),
        "sbs.bandwidth" => f(p.sbs.bandwidth),
        "sbs.max_users" => n(p.sbs.max_users as usize),
        "sbs.tx_schedule" => Value::Array(
            cfg.sbs_tx_schedule
                .iter()
                .map(|c| {
                    let mut t = Table::new();
                    t.insert("at".into(), f(c.at));
                    t.insert("power".into(), watts_value(c.watts));
                    Value::Table(t)
                })
                .collect(),
        ),
        "energy.rate" => f(cfg.harvest.rate),
        "energy.quantum" => f(cfg.harvest.quantum),
        "energy.initial" => f(cfg.initial_energy),
        "energy.capacity" => f(cfg.capacity),
        "energy.q" => f(cfg.power.q),
        "cost.alpha_d" => f(cfg.weights.alpha_d),
        "cost.alpha_p" => f(cfg.weights.alpha_p),
        "cost.alpha_b" => f(cfg.weights.alpha_b),
        "traffic.file_bits" => f(cfg.file_bits),
        "engine.accounting" => Value::String(name_of(ACCOUNTING, cfg.accounting).into()),
        "engine.off_precedence" => Value::String(name_of(PRECEDENCE, cfg.off_precedence).into()),
        "engine.off_rounding" => Value::String(name_of(ROUNDING, cfg.off_rounding).into()),
        _ => return None,
    })
}

/// What an experiment measures.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentKind {
    /// Costs, energy and switching of each policy.
    Simulate,
    /// Realized-to-optimal cost ratios of the randomized rule.
    CrStudy { grid: f64, budget: u64 },
}

/// One swept scenario key and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    /// Scenario shared by every run; its seed is the master seed.
    pub base: ScenarioConfig,
    pub sweep: Option<Sweep>,
    pub policies: Vec<PolicySpec>,
    pub runs: usize,
    pub out_dir: Option<PathBuf>,
    pub trace: bool,
    pub kind: ExperimentKind,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            base: ScenarioConfig::default(),
            sweep: None,
            policies: vec![PolicySpec::Roa],
            runs: 1,
            out_dir: None,
            trace: false,
            kind: ExperimentKind::Simulate,
        }
    }
}

/// Sweep point label and the scenario it produces. Without a sweep there is
/// one point with an empty label.
pub struct SweepPoint {
    pub label: String,
    pub config: ScenarioConfig,
}

/// Human-readable label of a sweep value.
pub fn label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ExperimentSpec {
    pub fn points(&self) -> Result<Vec<SweepPoint>, ConfigError> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![SweepPoint {
                label: String::new(),
                config: self.base.clone(),
            }]);
        };
        sweep
            .values
            .iter()
            .map(|v| {
                let mut config = self.base.clone();
                apply(&mut config, &sweep.key, v)?;
                Ok(SweepPoint {
                    label: label(v),
                    config,
                })
            })
            .collect()
    }

    /// Checks everything a run needs, for every sweep point and policy.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(invalid("experiment.runs", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(invalid(
                "experiment.policies",
                "at least one policy is required",
            ));
        }
        if let Some(s) = &self.sweep {
            if !SCENARIO_KEYS.contains(&s.key.as_str()) {
                return Err(invalid(
                    "sweep.key",
                    format!("`{}` is not a scenario key", s.key),
                ));
            }
            if s.values.is_empty() {
                return Err(invalid("sweep.values", "at least one value is required"));
            }
        }
        if let ExperimentKind::CrStudy { grid, budget } = self.kind {
            if !(grid > 0.0 && grid.is_finite()) {
                return Err(invalid("cr.grid", "must be positive"));
            }
            if budget == 0 {
                return Err(invalid("cr.budget", "must be positive"));
            }
        }
        for point in self.points()? {
            for policy in &self.policies {
                let cfg = ScenarioConfig {
                    policy: policy.clone(),
                    ..point.config.clone()
                };
                cfg.validate()?;
            }
            if let ExperimentKind::CrStudy { grid, .. } = self.kind {
                ehsched::analysis::cr_study_config(&point.config, grid).validate()?;
            }
        }
        Ok(())
    }
}

/// Line (1-based) of byte `offset` in `text`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            leaf => out.push((key, leaf.clone())),
        }
    }
}

/// Parses an experiment document; omitted keys keep their defaults.
pub fn parse_config(document: &str) -> Result<ExperimentSpec, ConfigError> {
    let table: Table = document
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax {
            line: e.span().map_or(0, |s| line_of(document, s.start)),
            message: e.message().to_string(),
        })?;
    let mut entries = Vec::new();
    flatten("", &table, &mut entries);

    let mut spec = ExperimentSpec::default();
    let mut sweep_key = None;
    let mut sweep_values = None;
    let mut kind = None;
    let mut grid = 0.2;
    let mut budget = ehsched::schedulers::oracle::DEFAULT_BUDGET;
    for (key, v) in &entries {
        let key = key.as_str();
        match key {
            "experiment.name" => spec.name = text(key, v)?.to_string(),
            "experiment.runs" => spec.runs = count(key, v)?,
            "experiment.seed" => {
                spec.base.seed = match v {
                    Value::Integer(i) if *i >= 0 => *i as u64,
                    _ => return Err(invalid(key, "expected a non-negative integer")),
                }
            }
            "experiment.policies" => {
                let list = v
                    .as_array()
                    .ok_or_else(|| invalid(key, "expected an array of policy strings"))?;
                spec.policies =
                    list.iter()
                        .map(|p| {
                            text(key, p)?.parse().map_err(
                                |e: ehsched::schedulers::ScheduleError| invalid(key, e.to_string()),
                            )
                        })
                        .collect::<Result<_, _>>()?;
            }
            "experiment.out_dir" => spec.out_dir = Some(PathBuf::from(text(key, v)?)),
            "experiment.trace" => {
                spec.trace = v
                    .as_bool()
                    .ok_or_else(|| invalid(key, "expected true or false"))?
            }
            "experiment.kind" => kind = Some(text(key, v)?.to_string()),
            "cr.grid" => grid = float(key, v)?,
            "cr.budget" => {
                budget = match v {
                    Value::Integer(i) if *i > 0 => *i as u64,
                    _ => return Err(invalid(key, "expected a positive integer")),
                }
            }
            "sweep.key" => sweep_key = Some(text(key, v)?.to_string()),
            "sweep.values" => {
                sweep_values = Some(
                    v.as_array()
                        .ok_or_else(|| invalid(key, "expected an array"))?
                        .clone(),
                )
            }
            _ => apply(&mut spec.base, key, v)?,
        }
    }
    spec.kind = match kind.as_deref() {
        None | Some("simulate") => ExperimentKind::Simulate,
        Some("cr-study") => ExperimentKind::CrStudy { grid, budget },
        Some(other) => {
            return Err(invalid(
                "experiment.kind",
                format!("`{other}` is not one of simulate, cr-study"),
            ))
        }
    };
    spec.sweep = match (sweep_key, sweep_values) {
        (Some(key), Some(values)) => Some(Sweep { key, values }),
        (None, None) => None,
        (Some(_), None) => return Err(invalid("sweep.values", "missing for `sweep.key`")),
        (None, Some(_)) => return Err(invalid("sweep.key", "missing for `sweep.values`")),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn read_config(path: &std::path::Path) -> Result<ExperimentSpec, ConfigError> {
    let document = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&document)
}

fn line(out: &mut String, key: &str, v: &Value) {
    let _ = writeln!(out, "{key} = {}", inline(v));
}

/// `v` rendered as a TOML value on one line.
fn inline(v: &Value) -> String {
    match v {
        Value::Table(t) => {
            let fields: Vec<String> = t
                .iter()
                .map(|(k, x)| format!("{k} = {}", inline(x)))
                .collect();
            format!("{{ {} }}", fields.join(", "))
        }
        Value::Array(a) => {
            let items: Vec<String> = a.iter().map(inline).collect();
            format!("[{}]", items.join(", "))
        }
        // Keep a decimal point so integral floats read back as floats.
        Value::Float(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{x:.1}"),
        other => other.to_string(),
    }
}

/// Every key of `spec` as a flat document that [`parse_config`] reads back
/// to the same spec.
pub fn serialize(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let s = |x: &str| Value::String(x.to_string());
    line(&mut out, "experiment.name", &s(&spec.name));
    line(
        &mut out,
        "experiment.kind",
        &s(match spec.kind {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::CrStudy { .. } => "cr-study",
        }),
    );
    line(
        &mut out,
        "experiment.runs",
        &Value::Integer(spec.runs as i64),
    );
    line(
        &mut out,
        "experiment.seed",
        &Value::Integer(spec.base.seed as i64),
    );
    let policies = spec.policies.iter().map(|p| s(&p.to_string())).collect();
    line(&mut out, "experiment.policies", &Value::Array(policies));
    if let Some(dir) = &spec.out_dir {
        line(&mut out, "experiment.out_dir", &s(&dir.to_string_lossy()));
    }
    line(&mut out, "experiment.trace", &Value::Boolean(spec.trace));
    if let ExperimentKind::CrStudy { grid, budget } = spec.kind {
        line(&mut out, "cr.grid", &Value::Float(grid));
        line(&mut out, "cr.budget", &Value::Integer(budget as i64));
    }
    if let Some(sw) = &spec.sweep {
        line(&mut out, "sweep.key", &s(&sw.key));
        line(&mut out, "sweep.values", &Value::Array(sw.values.clone()));
    }
    for key in SCENARIO_KEYS {
        let v = lookup(&spec.base, key).expect("registered key");
        line(&mut out, key, &v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ehsched::units::watts_to_dbm as dbm;

    #[test]
    fn empty_document_gives_defaults() {
        let spec = parse_config("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        let c = &spec.base;
        assert_eq!(
            (c.period, c.dt, c.harvest.rate, c.harvest.quantum),
            (10.0, 0.1, 20.0, 0.2)
        );
        assert_eq!(
            (c.initial_energy, c.capacity, c.power.q, c.file_bits),
            (60.0, 100.0, 0.9, 1e5)
        );
        assert_eq!(c.placement.mbs.op_power, 20.0);
        assert_eq!(c.placement.sbs.op_power, 10.0);
        assert!((dbm(c.placement.mbs.tx_power) - 33.0).abs() < 1e-9);
        assert!((dbm(c.placement.sbs.tx_power) - 23.0).abs() < 1e-9);
        assert!((dbm(c.placement.noise_power) + 104.0).abs() < 1e-9);
        assert_eq!(c.placement.sbs.bandwidth, 10e6);
        assert_eq!(
            (c.placement.mbs.max_users, c.placement.sbs.max_users),
            (50, 10)
        );
    }

    #[test]
    fn every_key_is_registered_both_ways() {
        let cfg = ScenarioConfig::default();
        for key in SCENARIO_KEYS {
            let v = lookup(&cfg, key).unwrap();
            let mut copy = cfg.clone();
            apply(&mut copy, key, &v).unwrap();
            assert_eq!(copy, cfg, "{key}");
        }
    }

    #[test]
    fn non_dividing_slot_names_the_key() {
        match parse_config("time.dt = 0.3") {
            Err(ConfigError::InvalidValue { key, .. }) => assert_eq!(key, "time.dt"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_reports_its_line() {
        let text = "energy.rate = 20\n\ntime.dt = 0.2\nenergy.rate = 30\n";
        match parse_config(text) {
            Err(ConfigError::Syntax { line, message }) => {
                assert_eq!(line, 4, "{message}");
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            parse_config("energy.rat = 20"),
            Err(ConfigError::UnknownKey(k)) if k == "energy.rat"
        ));
    }

    #[test]
    fn powers_need_units() {
        assert!((parse_power("23 dBm").unwrap() - dbm_to_watts(23.0)).abs() < 1e-15);
        assert_eq!(parse_power("0.5W").unwrap(), 0.5);
        assert_eq!(parse_power("200 mW").unwrap(), 0.2);
        assert!(parse_power("23").is_err());
        assert!(parse_power("-1 W").is_err());
        assert!(parse_power("3 kW").is_err());
        assert!(matches!(
            parse_config("sbs.tx_power = 0.2"),
            Err(ConfigError::InvalidValue { key, .. }) if key == "sbs.tx_power"
        ));
    }

    #[test]
    fn tables_and_dotted_keys_mix() {
        let spec = parse_config(
            "[energy]\nrate = 5\ninitial = 30.5\n\n[sbs]\ntx_power = \"26 dBm\"\ntx_schedule = [{ at = 1, power = \"25 dBm\" }]\n",
        )
        .unwrap();
        assert_eq!(spec.base.harvest.rate, 5.0);
        assert_eq!(spec.base.initial_energy, 30.5);
        assert_eq!(spec.base.sbs_tx_schedule.len(), 1);
        assert!((spec.base.sbs_tx_schedule[0].watts - dbm_to_watts(25.0)).abs() < 1e-15);
    }

    #[test]
    fn sweep_key_must_be_a_scenario_key() {
        assert!(parse_config("sweep.key = \"experiment.runs\"\nsweep.values = [1, 2]").is_err());
        assert!(parse_config("sweep.key = \"network.n_sbs\"\nsweep.values = [4, 6]").is_ok());
        assert!(parse_config("sweep.key = \"network.n_sbs\"\nsweep.values = [4.5]").is_err());
    }

    #[test]
    fn unknown_policy_is_rejected() {
        assert!(matches!(
            parse_config("experiment.policies = [\"roa\", \"greedy\"]"),
            Err(ConfigError::InvalidValue { key, .. }) if key == "experiment.policies"
        ));
    }
}
