use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ehsched::PolicySpec;
use ehsched_cli::config::{read_config, serialize, ExperimentSpec};
use ehsched_cli::{presets, run_experiment, OUT_DIR_ENV};

/// Simulate ON/OFF scheduling of energy-harvesting small cells.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// Experiment document (TOML with dotted keys).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment; see --list-presets.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per sweep value and policy.
    #[arg(long)]
    runs: Option<usize>,
    /// Policy to run instead of the configured ones; repeatable.
    /// One of doa, roa, adaptive, fixed:T, threshold:K, schedule:T1,T2,...
    #[arg(long = "algorithm", value_parser = parse_policy)]
    algorithms: Vec<PolicySpec>,
    /// Output directory [default: $EHSCHED_OUT_DIR, else ./out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write the per-slot trace and the first topology.
    #[arg(long)]
    trace: bool,
    /// Recorded harvest (time, sbs_id, joules) used instead of sampled arrivals.
    #[arg(long)]
    harvest_trace: Option<PathBuf>,
    /// Print the resolved experiment document and exit.
    #[arg(long)]
    print_config: bool,
    /// List the built-in experiments and exit.
    #[arg(long)]
    list_presets: bool,
}

fn parse_policy(s: &str) -> Result<PolicySpec, String> {
    s.parse()
        .map_err(|e: ehsched::schedulers::ScheduleError| e.to_string())
}

fn resolve(args: &Args) -> Result<ExperimentSpec, String> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => read_config(path).map_err(|e| format!("{}: {e}", path.display()))?,
        (None, Some(name)) => presets::preset(name)
            .ok_or_else(|| {
                let names: Vec<&str> = presets::names().collect();
                format!("unknown preset `{name}`; available: {}", names.join(", "))
            })?
            .map_err(|e| format!("preset {name}: {e}"))?,
        (None, None) => ExperimentSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.base.seed = seed;
    }
    if let Some(runs) = args.runs {
        spec.runs = runs;
    }
    if !args.algorithms.is_empty() {
        spec.policies = args.algorithms.clone();
    }
    if args.trace {
        spec.trace = true;
    }
    if let Some(dir) = &args.out_dir {
        spec.out_dir = Some(dir.clone());
    }
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_presets {
        for name in presets::names() {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let spec = match resolve(&args) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        print!("{}", serialize(&spec));
        return ExitCode::SUCCESS;
    }
    let out_dir = spec
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match run_experiment(&spec, &out_dir, args.harvest_trace.as_deref()) {
        Ok(report) => {
            for a in &report.aggregates {
                let at = if a.sweep_value.is_empty() {
                    String::new()
                } else {
                    format!("{} ", a.sweep_value)
                };
                println!(
                    "{at}{}: mean cost {:.5}, switches {:.2}, unused {:.3}",
                    a.policy, a.total_cost_mean, a.switches_mean, a.unused_sbs_fraction_mean
                );
            }
            for r in &report.ratios {
                println!(
                    "{}ratio median {:.4}, worst {:.4} over {} runs ({} skipped)",
                    if r.sweep_value.is_empty() {
                        String::new()
                    } else {
                        format!("{} ", r.sweep_value)
                    },
                    r.median,
                    r.worst,
                    r.runs,
                    r.skipped
                );
            }
            println!(
                "wrote {} files to {}",
                report.files.len(),
                out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
