//! Replicated runs, summaries and cross-mechanism comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{MechanismKind, SimConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{run, SimTrace};
use crate::trace::ARTIFACT_VERSION;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub version: String,
    pub mechanism: MechanismKind,
    /// Effective configuration of the first replicate.
    pub config: SimConfig,
    pub seeds: Vec<u64>,
    /// Final welfare per seed; absent when nobody was served.
    pub w_final: Vec<Option<f64>>,
    pub w_mean: Option<f64>,
    pub w_std: Option<f64>,
    pub revenue_mean: f64,
    pub served_demand_mean: f64,
    pub service_rate_mean: Option<f64>,
    /// Hardware dependent.
    pub runtime_ms_mean: f64,
    /// Mean welfare per round over the replicates that have one.
    pub w_series: Vec<Option<f64>>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; zero for a single value.
fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

impl ExperimentSummary {
    pub fn from_traces<S: Scalar>(traces: &[SimTrace<S>]) -> Result<Self> {
        let first = traces.first().ok_or_else(|| Error::InputDomain("no runs to summarize".into()))?;
        let w_final: Vec<Option<f64>> = traces.iter().map(|t| t.summary.w.as_ref().map(S::as_f64)).collect();
        let ws: Vec<f64> = w_final.iter().flatten().copied().collect();
        let rounds = traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
        let w_series = (0..rounds)
            .map(|k| {
                let at: Vec<f64> = traces
                    .iter()
                    .filter_map(|t| t.rows.get(k).or(t.rows.last()).and_then(|r| r.w.as_ref()).map(S::as_f64))
                    .collect();
                mean(&at)
            })
            .collect();
        let rates: Vec<f64> = traces.iter().filter_map(|t| t.summary.service_rate()).collect();
        let count = traces.len() as f64;
        Ok(ExperimentSummary {
            version: ARTIFACT_VERSION.to_string(),
            mechanism: first.config.mechanism,
            config: first.config.clone(),
            seeds: traces.iter().map(|t| t.config.demand.seed).collect(),
            w_mean: mean(&ws),
            w_std: std_dev(&ws),
            w_final,
            revenue_mean: traces.iter().map(|t| t.summary.revenue.as_f64()).sum::<f64>() / count,
            served_demand_mean: traces.iter().map(|t| t.summary.served_demand as f64).sum::<f64>() / count,
            service_rate_mean: mean(&rates),
            runtime_ms_mean: traces.iter().map(|t| t.runtime_ms).sum::<f64>() / count,
            w_series,
        })
    }

    pub fn file_name(mechanism: MechanismKind) -> String {
        format!("{}.summary.json", mechanism.as_str())
    }
}

/// Seeds of `replicates` consecutive runs starting at the configured seed.
pub fn replicate_seeds(config: &SimConfig, replicates: u32) -> Vec<u64> {
    (0..u64::from(replicates)).map(|i| config.demand.seed.wrapping_add(i)).collect()
}

/// Run replicates on a pool of `jobs` workers (all processors when `None`).
pub fn run_replicates<S: Scalar>(config: &SimConfig, replicates: u32, jobs: Option<usize>) -> Result<Vec<SimTrace<S>>> {
    config.validate()?;
    let seeds = replicate_seeds(config, replicates);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| run::<S>(&config.clone().with_seed(s))).collect())
}

pub fn trace_path(out: &Path, config: &SimConfig) -> PathBuf {
    out.join(format!("{}-seed{}.trace.jsonl", config.mechanism.as_str(), config.demand.seed))
}

pub fn metrics_path(out: &Path, config: &SimConfig) -> PathBuf {
    out.join(format!("{}-seed{}.metrics.csv", config.mechanism.as_str(), config.demand.seed))
}

/// Run replicates and write every trace, metrics table and the summary under `out`.
pub fn run_experiment<S: Scalar>(
    config: &SimConfig,
    replicates: u32,
    jobs: Option<usize>,
    out: &Path,
) -> Result<ExperimentSummary> {
    let traces = run_replicates::<S>(config, replicates, jobs)?;
    fs::create_dir_all(out)?;
    for t in &traces {
        fs::write(trace_path(out, &t.config), t.trace_bytes())?;
        fs::write(metrics_path(out, &t.config), t.metrics_bytes())?;
    }
    let summary = ExperimentSummary::from_traces(&traces)?;
    fs::write(out.join(ExperimentSummary::file_name(summary.mechanism)), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// `round,<mechanism>...` welfare series.
    pub series_csv: String,
    /// Per-seed final welfare and its ratio to the first summary.
    pub ratio_csv: String,
}

/// Two summaries are comparable when only the mechanism differs. The auction
/// always settles per epoch, so settlement is ignored when either side is it.
fn comparable(a: &ExperimentSummary, b: &ExperimentSummary) -> bool {
    let mut b_cfg = b.config.clone();
    b_cfg.mechanism = a.config.mechanism;
    if a.mechanism == MechanismKind::Auction || b.mechanism == MechanismKind::Auction {
        b_cfg.settlement = a.config.settlement;
    }
    b_cfg == a.config && a.seeds == b.seeds
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn compare(summaries: &[ExperimentSummary]) -> Result<Comparison> {
    let [base, rest @ ..] = summaries else {
        return Err(Error::InputDomain("compare needs at least two summaries".into()));
    };
    if rest.is_empty() {
        return Err(Error::InputDomain("compare needs at least two summaries".into()));
    }
    if let Some(bad) = rest.iter().find(|s| !comparable(base, s)) {
        return Err(Error::InputDomain(format!(
            "summary for {} was produced under a different configuration or seed set",
            bad.mechanism.as_str()
        )));
    }
    let names: Vec<&str> = summaries.iter().map(|s| s.mechanism.as_str()).collect();

    let mut series_csv = format!("round,{}\n", names.join(","));
    let rounds = summaries.iter().map(|s| s.w_series.len()).max().unwrap_or(0);
    for k in 0..rounds {
        let row: Vec<String> =
            summaries.iter().map(|s| cell(s.w_series.get(k).or(s.w_series.last()).copied().flatten())).collect();
        let _ = writeln!(series_csv, "{k},{}", row.join(","));
    }

    let mut ratio_csv = String::from("seed");
    for n in &names {
        let _ = write!(ratio_csv, ",w_{n}");
    }
    for n in &names {
        let _ = write!(ratio_csv, ",ratio_{n}");
    }
    ratio_csv.push('\n');
    let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    };
    for (i, seed) in base.seeds.iter().enumerate() {
        let ws: Vec<Option<f64>> = summaries.iter().map(|s| s.w_final[i]).collect();
        let mut line = seed.to_string();
        for w in &ws {
            let _ = write!(line, ",{}", cell(*w));
        }
        for w in &ws {
            let _ = write!(line, ",{}", cell(ratio(*w, ws[0])));
        }
        let _ = writeln!(ratio_csv, "{line}");
    }
    let mut line = String::from("mean");
    for s in summaries {
        let _ = write!(line, ",{}", cell(s.w_mean));
    }
    for s in summaries {
        let _ = write!(line, ",{}", cell(ratio(s.w_mean, base.w_mean)));
    }
    let _ = writeln!(ratio_csv, "{line}");
    Ok(Comparison { series_csv, ratio_csv })
}
