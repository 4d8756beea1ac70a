//! Runs an experiment and writes its outputs.
//!
//! Files are written to a staging directory inside the output directory and
//! moved into place only once everything succeeded, so a failed run leaves
//! no partial outputs behind.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ehsched::analysis::{empirical_cr_study, AnalysisError};
use ehsched::energy::EnergyError;
use ehsched::engine::{simulate_with, EngineError, RunOptions};
use ehsched::stats::Summary;
use ehsched::{HarvestTrace, PolicySpec, Replication, SbsPeriod, ScenarioConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentKind, ExperimentSpec, SweepPoint};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Engine(#[from] EngineError),
    #[error("ratio study failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("harvest trace {path}: {source}")]
    Harvest { path: PathBuf, source: EnergyError },
    #[error("harvest traces apply to simulate experiments only")]
    HarvestInStudy,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Column set of `results.csv`: one row per replication, period outcomes
/// summed (costs, counts, energy) or averaged (ON time, delay, unused share)
/// over the horizon and the SBSs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_key: String,
    pub sweep_value: String,
    pub policy: String,
    pub replication: u64,
    pub seed: u64,
    pub periods: usize,
    pub n_sbs: usize,
    pub total_cost: f64,
    pub rent_cost: f64,
    pub buy_cost: f64,
    pub handovers: u32,
    pub depletions: u32,
    pub switches: u32,
    /// Mean ON time of the SBSs that had users, empty when none did.
    pub on_time: Option<f64>,
    pub energy_consumed: f64,
    pub energy_harvested: f64,
    /// Mean stored energy per SBS at the end of the horizon.
    pub energy_end: f64,
    pub delay_per_sbs: f64,
    pub unused_sbs_fraction: f64,
    pub ignored_rent_increases: u32,
}

pub const RESULT_COLUMNS: &[&str] = &[
    "sweep_key",
    "sweep_value",
    "policy",
    "replication",
    "seed",
    "periods",
    "n_sbs",
    "total_cost",
    "rent_cost",
    "buy_cost",
    "handovers",
    "depletions",
    "switches",
    "on_time",
    "energy_consumed",
    "energy_harvested",
    "energy_end",
    "delay_per_sbs",
    "unused_sbs_fraction",
    "ignored_rent_increases",
];

impl ResultRow {
    fn of(
        sweep_key: &str,
        sweep_value: &str,
        policy: &PolicySpec,
        seed: u64,
        rep: &Replication,
    ) -> Self {
        let sbs = || rep.periods.iter().flat_map(|p| &p.sbs);
        let total = |f: fn(&SbsPeriod) -> f64| sbs().fold(0.0, |acc, s| acc + f(s));
        let used: Vec<f64> = sbs().filter(|s| s.used).map(|s| s.on_time).collect();
        let n_sbs = rep.topology.n_sbs();
        let last = rep.periods.last();
        Self {
            sweep_key: sweep_key.into(),
            sweep_value: sweep_value.into(),
            policy: policy.to_string(),
            replication: rep.index,
            seed,
            periods: rep.periods.len(),
            n_sbs,
            total_cost: rep.total_cost(),
            rent_cost: total(|s| s.rent_cost),
            buy_cost: total(|s| if s.decision.bought { s.buy_price } else { 0.0 }),
            handovers: sbs().filter(|s| s.decision.bought).count() as u32,
            depletions: sbs().filter(|s| s.depleted_at.is_some()).count() as u32,
            switches: sbs().map(|s| s.switch_count).sum(),
            on_time: (!used.is_empty()).then(|| mean(used.iter().copied())),
            energy_consumed: total(|s| s.energy_consumed),
            energy_harvested: total(|s| s.energy_harvested),
            energy_end: last
                .filter(|p| !p.sbs.is_empty())
                .map_or(0.0, |p| mean(p.sbs.iter().map(|s| s.energy_end))),
            delay_per_sbs: mean(rep.periods.iter().map(|p| p.delay_per_sbs)),
            unused_sbs_fraction: mean(rep.periods.iter().map(|p| p.unused_sbs_fraction)),
            ignored_rent_increases: sbs().map(|s| s.ignored_rent_increases).sum(),
        }
    }
}

#[derive(Debug, Serialize)]
struct TraceCsvRow<'a> {
    sweep_value: &'a str,
    policy: String,
    replication: u64,
    t: f64,
    sbs_id: usize,
    sigma: u8,
    energy: f64,
    assoc_count: usize,
    rent_rate: f64,
}

/// Plot-ready means of one (sweep value, policy) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub sweep_value: String,
    pub policy: String,
    pub runs: usize,
    pub total_cost_mean: f64,
    pub total_cost_sd: f64,
    pub total_cost_ci95: Option<f64>,
    pub on_time_mean: Option<f64>,
    pub switches_mean: f64,
    pub handovers_mean: f64,
    pub depletions_mean: f64,
    pub energy_consumed_mean: f64,
    pub delay_per_sbs_mean: f64,
    pub unused_sbs_fraction_mean: f64,
}

#[derive(Debug, Serialize)]
struct GroupSummary {
    sweep_value: String,
    policy: String,
    total_cost: Option<Summary>,
    on_time: Option<Summary>,
    switches: Option<Summary>,
    energy_consumed: Option<Summary>,
    delay_per_sbs: Option<Summary>,
    unused_sbs_fraction: Option<Summary>,
}

#[derive(Debug, Serialize)]
struct RatioCsvRow<'a> {
    sweep_value: &'a str,
    replication: u64,
    online_cost: f64,
    oracle_cost: f64,
    ratio: f64,
    searched_sbs: usize,
    oracle_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioAggregate {
    pub sweep_value: String,
    pub runs: usize,
    pub skipped: usize,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub worst: f64,
    pub ci95: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SummaryDoc<G> {
    name: String,
    kind: &'static str,
    sweep_key: Option<String>,
    runs: usize,
    seed: u64,
    groups: Vec<G>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn aggregate(value: &str, policy: &PolicySpec, rows: &[ResultRow]) -> (AggregateRow, GroupSummary) {
    let costs: Vec<f64> = rows.iter().map(|r| r.total_cost).collect();
    let on: Vec<f64> = rows.iter().filter_map(|r| r.on_time).collect();
    let pick = |f: fn(&ResultRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let cost = Summary::of(&costs);
    let on_time = Summary::of(&on);
    let agg = AggregateRow {
        sweep_value: value.into(),
        policy: policy.to_string(),
        runs: rows.len(),
        total_cost_mean: cost.as_ref().map_or(f64::NAN, |s| s.mean),
        total_cost_sd: cost.as_ref().map_or(f64::NAN, |s| s.sd),
        total_cost_ci95: cost.as_ref().and_then(|s| s.ci95),
        on_time_mean: on_time.as_ref().map(|s| s.mean),
        switches_mean: mean(rows.iter().map(|r| f64::from(r.switches))),
        handovers_mean: mean(rows.iter().map(|r| f64::from(r.handovers))),
        depletions_mean: mean(rows.iter().map(|r| f64::from(r.depletions))),
        energy_consumed_mean: mean(rows.iter().map(|r| r.energy_consumed)),
        delay_per_sbs_mean: mean(rows.iter().map(|r| r.delay_per_sbs)),
        unused_sbs_fraction_mean: mean(rows.iter().map(|r| r.unused_sbs_fraction)),
    };
    let summary = GroupSummary {
        sweep_value: value.into(),
        policy: policy.to_string(),
        total_cost: cost,
        on_time,
        switches: Summary::of(&pick(|r| f64::from(r.switches))),
        energy_consumed: Summary::of(&pick(|r| r.energy_consumed)),
        delay_per_sbs: Summary::of(&pick(|r| r.delay_per_sbs)),
        unused_sbs_fraction: Summary::of(&pick(|r| r.unused_sbs_fraction)),
    };
    (agg, summary)
}

fn load_harvest(path: &Path, cfg: &ScenarioConfig) -> Result<HarvestTrace, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    HarvestTrace::read_csv(file, cfg.dt, cfg.placement.n_sbs, cfg.total_slots()).map_err(|source| {
        RunError::Harvest {
            path: path.to_path_buf(),
            source,
        }
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), RunError> {
    let csv_err = |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), doc).map_err(|source| RunError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Where a run's files end up and what the experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub aggregates: Vec<AggregateRow>,
    pub ratios: Vec<RatioAggregate>,
}

/// Runs every sweep value, policy and replication of `spec` and writes the
/// outputs into `out_dir`, which is created if needed. Rows are ordered by
/// (sweep value, policy, replication) however the work was scheduled.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: &Path,
    harvest: Option<&Path>,
) -> Result<RunReport, RunError> {
    spec.validate()?;
    if harvest.is_some() && spec.kind != ExperimentKind::Simulate {
        return Err(RunError::HarvestInStudy);
    }
    let existed = out_dir.exists();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let result = stage(spec, out_dir, harvest);
    if result.is_err() && !existed {
        // Only succeeds when nothing else was put there meanwhile.
        let _ = std::fs::remove_dir(out_dir);
    }
    result
}

fn stage(
    spec: &ExperimentSpec,
    out_dir: &Path,
    harvest: Option<&Path>,
) -> Result<RunReport, RunError> {
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(out_dir)
        .map_err(io_err(out_dir))?;
    let dir = staging.path();
    let points = spec.points()?;
    let mut report = match spec.kind {
        ExperimentKind::Simulate => simulate_points(spec, &points, dir, harvest)?,
        ExperimentKind::CrStudy { grid, budget } => ratio_points(spec, &points, dir, grid, budget)?,
    };
    write_text(
        &dir.join("experiment.toml"),
        &crate::config::serialize(spec),
    )?;

    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| PathBuf::from(e.file_name())).map_err(io_err(dir)))
        .collect::<Result<_, _>>()?;
    names.sort();
    for name in names {
        let target = out_dir.join(&name);
        std::fs::rename(dir.join(&name), &target).map_err(io_err(&target))?;
        report.files.push(target);
    }
    Ok(report)
}

fn sweep_key(spec: &ExperimentSpec) -> String {
    spec.sweep
        .as_ref()
        .map_or_else(String::new, |s| s.key.clone())
}

fn simulate_points(
    spec: &ExperimentSpec,
    points: &[SweepPoint],
    dir: &Path,
    harvest: Option<&Path>,
) -> Result<RunReport, RunError> {
    let key = sweep_key(spec);
    let seed = spec.base.seed;
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    let mut groups = Vec::new();
    let mut trace_rows = Vec::new();
    let mut topology = None;
    for point in points {
        let recorded = harvest
            .map(|p| load_harvest(p, &point.config))
            .transpose()?;
        for policy in &spec.policies {
            let cfg = ScenarioConfig {
                policy: policy.clone(),
                ..point.config.clone()
            };
            let opts = RunOptions {
                harvest: recorded.as_ref(),
                trace: spec.trace,
            };
            let reps = (0..spec.runs as u64)
                .into_par_iter()
                .map(|i| simulate_with(&cfg, i, &opts))
                .collect::<Result<Vec<_>, _>>()?;
            let group: Vec<ResultRow> = reps
                .iter()
                .map(|r| ResultRow::of(&key, &point.label, policy, seed, r))
                .collect();
            let (agg, summary) = aggregate(&point.label, policy, &group);
            aggregates.push(agg);
            groups.push(summary);
            rows.extend(group);
            if spec.trace {
                topology.get_or_insert_with(|| reps[0].topology.to_json());
                for rep in &reps {
                    trace_rows.extend(rep.trace.iter().map(|t| TraceCsvRow {
                        sweep_value: &point.label,
                        policy: policy.to_string(),
                        replication: rep.index,
                        t: t.t,
                        sbs_id: t.sbs_id,
                        sigma: t.sigma,
                        energy: t.energy,
                        assoc_count: t.assoc_count,
                        rent_rate: t.rent_rate,
                    }));
                }
            }
        }
    }
    write_rows(&dir.join("results.csv"), &rows)?;
    write_rows(&dir.join("aggregates.csv"), &aggregates)?;
    write_json(
        &dir.join("summary.json"),
        &SummaryDoc {
            name: spec.name.clone(),
            kind: "simulate",
            sweep_key: spec.sweep.as_ref().map(|s| s.key.clone()),
            runs: spec.runs,
            seed,
            groups,
        },
    )?;
    if spec.trace {
        write_rows(&dir.join("trace.csv"), trace_rows)?;
    }
    if let Some(json) = topology {
        write_text(&dir.join("topology.json"), &json)?;
    }
    Ok(RunReport {
        files: Vec::new(),
        aggregates,
        ratios: Vec::new(),
    })
}

fn ratio_points(
    spec: &ExperimentSpec,
    points: &[SweepPoint],
    dir: &Path,
    grid: f64,
    budget: u64,
) -> Result<RunReport, RunError> {
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    for point in points {
        let study = empirical_cr_study(&point.config, spec.runs, grid, budget)?;
        let r = &study.report;
        aggregates.push(RatioAggregate {
            sweep_value: point.label.clone(),
            runs: r.ratios.len(),
            skipped: study.skipped.len(),
            min: r.min,
            median: r.median,
            mean: r.mean,
            worst: r.worst,
            ci95: r.ci95,
        });
        records.push((point.label.as_str(), study.records));
    }
    let rows = records.iter().flat_map(|(label, recs)| {
        recs.iter().map(move |c| RatioCsvRow {
            sweep_value: label,
            replication: c.replication,
            online_cost: c.online_cost,
            oracle_cost: c.oracle_cost,
            ratio: c.ratio,
            searched_sbs: c.searched_sbs,
            oracle_evaluations: c.oracle_evaluations,
        })
    });
    write_rows(&dir.join("ratios.csv"), rows)?;
    write_rows(&dir.join("aggregates.csv"), &aggregates)?;
    write_json(
        &dir.join("summary.json"),
        &SummaryDoc {
            name: spec.name.clone(),
            kind: "cr-study",
            sweep_key: spec.sweep.as_ref().map(|s| s.key.clone()),
            runs: spec.runs,
            seed: spec.base.seed,
            groups: aggregates.clone(),
        },
    )?;
    Ok(RunReport {
        files: Vec::new(),
        aggregates: Vec::new(),
        ratios: aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_match_the_row_type() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rep = ehsched::engine::simulate(&ScenarioConfig::default(), 0).unwrap();
        w.serialize(ResultRow::of("", "", &PolicySpec::Roa, 1, &rep))
            .unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, RESULT_COLUMNS.join(","));
    }

    #[test]
    fn row_sums_match_the_replication() {
        let rep = ehsched::engine::simulate(&ScenarioConfig::default(), 2).unwrap();
        let row = ResultRow::of("", "", &PolicySpec::Roa, 1, &rep);
        assert_eq!(row.total_cost, rep.total_cost());
        assert!((row.rent_cost + row.buy_cost - row.total_cost).abs() < 1e-9);
        assert_eq!(row.periods, 2);
        assert_eq!(row.n_sbs, 6);
    }
}
