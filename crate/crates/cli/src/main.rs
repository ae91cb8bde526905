use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amod_core::audit::{replay_bundle, sweep, Gain, SweepOptions, REPRO_SCHEMA};
use amod_core::experiment::{compare, run_experiment, ExperimentSummary};
use amod_core::sim::run;
use amod_core::trace::{read_header, TRACE_SCHEMA};
use amod_core::{MechanismKind, Preset, Rational, SettlementMode, SimConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "amod", version, about = "Ridesharing fleet simulator with posted-price dispatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded replicates and write traces, metrics and a summary.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        replicates: u32,
        /// Worker threads; defaults to the number of processors.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay single-passenger misreports and look for payment gains.
    Audit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 100)]
        per_seed: usize,
        #[arg(long, default_value = "out/audit")]
        out: PathBuf,
    },
    /// Align summaries from the same configuration into plot-ready CSV.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Directory for w_series.csv and ratios.csv; prints to stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a trace from its header, or re-execute an audit repro bundle.
    Replay {
        file: PathBuf,
        /// Where to write the regenerated trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file overlaid on the preset; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    mechanism: Option<MechanismKind>,
    #[arg(long)]
    settlement: Option<SettlementMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    vehicles: Option<u32>,
    /// `N` for a square grid or `ROWSxCOLS`.
    #[arg(long)]
    grid: Option<String>,
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_grid(s: &str) -> Result<(u32, u32)> {
    let (r, c) = s.split_once(['x', 'X']).unwrap_or((s, s));
    Ok((r.trim().parse().context("grid rows")?, c.trim().parse().context("grid columns")?))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut config = SimConfig::preset(self.preset);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let overlay: Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let mut base = serde_json::to_value(&config)?;
            merge(&mut base, overlay);
            config = serde_json::from_value(base).with_context(|| format!("invalid configuration in {}", path.display()))?;
        }
        if let Some(m) = self.mechanism {
            config.mechanism = m;
        }
        if let Some(s) = self.settlement {
            config.settlement = s;
        }
        if let Some(s) = self.seed {
            config.demand.seed = s;
        }
        if let Some(r) = self.rounds {
            config.demand.rounds = r;
        }
        if let Some(v) = self.vehicles {
            config.demand.fleet_size = v;
        }
        if let Some(g) = &self.grid {
            (config.grid.rows, config.grid.cols) = parse_grid(g)?;
        }
        config.validate()?;
        Ok(config.effective())
    }
}

fn cmd_run(config: &SimConfig, replicates: u32, jobs: Option<usize>, out: &Path) -> Result<ExitCode> {
    let summary = run_experiment::<Rational>(config, replicates, jobs, out)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{} replicates={} W mean={} std={} served demand mean={:.1} -> {}",
        summary.mechanism,
        summary.seeds.len(),
        fmt(summary.w_mean),
        fmt(summary.w_std),
        summary.served_demand_mean,
        out.join(ExperimentSummary::file_name(summary.mechanism)).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(config: &SimConfig, seeds: u64, per_seed: usize, out: &Path) -> Result<ExitCode> {
    let first = config.demand.seed;
    let opts = SweepOptions { seeds: (first..first + seeds).collect(), per_seed, ..SweepOptions::default() };
    let report = sweep::<Rational>(config, &opts)?;
    fs::create_dir_all(out)?;
    let mut bundles = Vec::new();
    for (i, g) in report.gains().enumerate() {
        let path = out.join(format!("repro-{i:04}.json"));
        fs::write(&path, serde_json::to_string_pretty(&g.bundle(&report.config))?)?;
        bundles.push(path);
    }
    let mut summary = report.summary_json();
    summary["config"] = serde_json::to_value(&report.config)?;
    summary["seeds"] = serde_json::to_value(&opts.seeds)?;
    summary["bundles"] = bundles.iter().map(|p| Value::from(p.display().to_string())).collect();
    fs::write(out.join("audit.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} manipulations={} cheaper={} served_after_lying={} lost_service={}",
        report.verdict(),
        report.reports.len(),
        report.count(Gain::Cheaper),
        report.count(Gain::Served),
        report.lost_service()
    );
    if bundles.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for p in &bundles {
        eprintln!("repro bundle: {}", p.display());
    }
    Ok(ExitCode::FAILURE)
}

fn cmd_compare(paths: &[PathBuf], out: Option<&Path>) -> Result<ExitCode> {
    let summaries = paths
        .iter()
        .map(|p| -> Result<ExperimentSummary> {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} is not a run summary", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare(&summaries)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("w_series.csv"), &cmp.series_csv)?;
            fs::write(dir.join("ratios.csv"), &cmp.ratio_csv)?;
            println!("wrote {} and {}", dir.join("w_series.csv").display(), dir.join("ratios.csv").display());
        }
        None => print!("{}", cmp.ratio_csv),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(file: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    if let Ok(bundle) = serde_json::from_str::<Value>(&text) {
        if bundle.get("schema").and_then(Value::as_str) == Some(REPRO_SCHEMA) {
            let report = replay_bundle::<Rational>(&bundle)?;
            let recorded = bundle.get("verdict").and_then(Value::as_str).unwrap_or("");
            println!(
                "{}: truthful {:?}, manipulated {:?} -> {}",
                report.manipulation,
                report.truthful,
                report.manipulated,
                report.verdict()
            );
            return Ok(if report.verdict() == recorded { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    let header = text.lines().next().unwrap_or_default();
    let config = read_header(header).with_context(|| format!("{} has no {TRACE_SCHEMA} header", file.display()))?;
    let trace = run::<Rational>(&config)?;
    let regenerated = if header.starts_with('#') { trace.metrics_bytes() } else { trace.trace_bytes() };
    if let Some(path) = out {
        fs::write(path, &regenerated)?;
    }
    if regenerated == text.as_bytes() {
        println!("identical: {}", file.display());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("differs: {}", file.display());
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, replicates, jobs, out } => {
            config.resolve().and_then(|c| cmd_run(&c, *replicates, *jobs, out))
        }
        Command::Audit { config, seeds, per_seed, out } => {
            config.resolve().and_then(|c| {
                if matches!(c.mechanism, MechanismKind::OptimalHindsight) {
                    bail!("the audit replays online mechanisms only");
                }
                cmd_audit(&c, *seeds, *per_seed, out)
            })
        }
        Command::Compare { summaries, out } => cmd_compare(summaries, out.as_deref()),
        Command::Replay { file, out } => cmd_replay(file, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
