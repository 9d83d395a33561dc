//! Command layer: run a scenario under one policy, or several policies side
//! by side, and write the reports to disk.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{Policy, PolicyConfig};
use crate::report::fmt_sig6;
use crate::scenario::{parse_scenario, Scenario, ScenarioError};
use crate::simengine::{run, RunOutput, SimError, TimeseriesRow};
use crate::time::SimTime;

pub const COMPARE_HEADER: &str = "policy,total_revenue,total_penalties,total_outage_s,kpi_violation_s,reconfig_ops";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSummary {
    pub id: String,
    pub level_seconds: Vec<f64>,
    pub outage_s: f64,
    pub secondary_fraction: f64,
    pub sla_ok: bool,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub policy: Policy,
    pub total_revenue: f64,
    pub total_penalties: f64,
    pub per_service: Vec<ServiceSummary>,
}

impl RunSummary {
    pub fn new(scenario: &str, seed: u64, policy: Policy, out: &RunOutput) -> Self {
        let r = &out.report;
        RunSummary {
            scenario: scenario.to_string(),
            seed,
            policy,
            total_revenue: r.total_revenue,
            total_penalties: r.total_penalties,
            per_service: r
                .services
                .iter()
                .map(|s| ServiceSummary {
                    id: s.id.clone(),
                    level_seconds: s.level_seconds(),
                    outage_s: s.outage_s(),
                    secondary_fraction: s.secondary_fraction,
                    sla_ok: s.sla_ok,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Scenario name reported in summaries: the file stem.
pub fn scenario_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load(path: &Path, duration_override: Option<f64>) -> Result<Scenario, CliError> {
    let mut scenario = parse_scenario(path)?;
    if let Some(d) = duration_override {
        if !(d.is_finite() && d >= 0.001) {
            return Err(CliError::Usage(format!("--duration-override must be at least 0.001 s, got {d}")));
        }
        scenario.duration = SimTime::from_secs_f64(d);
    }
    Ok(scenario)
}

pub fn events_log(out: &RunOutput) -> String {
    let mut s = String::new();
    for r in &out.log {
        let _ = writeln!(s, "{r}");
    }
    s
}

pub fn timeseries_csv(out: &RunOutput) -> String {
    let mut s = String::from(TimeseriesRow::HEADER);
    s.push('\n');
    for row in &out.timeseries {
        s.push_str(&row.to_csv());
        s.push('\n');
    }
    s
}

pub fn summary_json(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summaries serialize");
    s.push('\n');
    s
}

pub fn compare_row(policy: Policy, out: &RunOutput) -> String {
    let r = &out.report;
    format!(
        "{},{},{},{},{},{}",
        policy,
        fmt_sig6(r.total_revenue),
        fmt_sig6(r.total_penalties),
        fmt_sig6(r.total_outage_s),
        fmt_sig6(r.kpi_violation_s),
        r.reconfig_ops
    )
}

/// Writes `summary.json`, `events.log` and `timeseries.csv` into `dir`.
pub fn write_run(dir: &Path, summary: &RunSummary, out: &RunOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, body) in
        [("summary.json", summary_json(summary)), ("events.log", events_log(out)), ("timeseries.csv", timeseries_csv(out))]
    {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    Ok(())
}

pub fn simulate(
    scenario_path: &Path,
    seed: u64,
    policy: Policy,
    out_dir: &Path,
    duration_override: Option<f64>,
) -> Result<RunSummary, CliError> {
    let scenario = load(scenario_path, duration_override)?;
    let out = run(&scenario, seed, PolicyConfig::new(policy))?;
    let summary = RunSummary::new(&scenario_name(scenario_path), seed, policy, &out);
    write_run(out_dir, &summary, &out)?;
    Ok(summary)
}

/// Runs every policy on its own thread, writes each run under
/// `out_dir/<policy>/` and the merged table to `out_dir/compare.csv`.
pub fn compare(
    scenario_path: &Path,
    seed: u64,
    policies: &[Policy],
    out_dir: &Path,
    duration_override: Option<f64>,
) -> Result<String, CliError> {
    if policies.len() < 2 {
        return Err(CliError::Usage(format!("compare needs at least 2 policies, got {}", policies.len())));
    }
    let scenario = load(scenario_path, duration_override)?;
    let name = scenario_name(scenario_path);
    let results: Vec<Result<RunOutput, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = policies
            .iter()
            .map(|&p| {
                let sc = &scenario;
                scope.spawn(move || run(sc, seed, PolicyConfig::new(p)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut csv = String::from(COMPARE_HEADER);
    csv.push('\n');
    for (&p, res) in policies.iter().zip(results) {
        let out = res?;
        let summary = RunSummary::new(&name, seed, p, &out);
        write_run(&out_dir.join(p.as_str()), &summary, &out)?;
        csv.push_str(&compare_row(p, &out));
        csv.push('\n');
    }
    let path = out_dir.join("compare.csv");
    fs::write(&path, &csv).map_err(io_err(&path))?;
    Ok(csv)
}

/// `simulate` as a process exit code: 0 on success, 2 with a diagnostic on
/// stderr otherwise.
pub fn cmd_simulate(
    scenario_path: &Path,
    seed: u64,
    policy: Policy,
    out_dir: &Path,
    duration_override: Option<f64>,
) -> i32 {
    match simulate(scenario_path, seed, policy, out_dir, duration_override) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn cmd_compare(
    scenario_path: &Path,
    seed: u64,
    policies: &[Policy],
    out_dir: &Path,
    duration_override: Option<f64>,
) -> i32 {
    match compare(scenario_path, seed, policies, out_dir, duration_override) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
