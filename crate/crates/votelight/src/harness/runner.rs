//! The decision loop (observe, vote, step, measure) plus run and
//! comparison outputs.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{build_controller, HarnessError, RunConfig};
use super::report::{atomic_write, fmt_opt, markdown_table, mean, std_dev};
use crate::ensemble::VoteRecord;
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::sim::{Counters, Simulation};

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub metrics: MetricsReport,
    pub decision_steps: usize,
    pub counters: Counters,
    /// Fraction of intersection votes where all agents agreed.
    pub unanimity_rate: f64,
    /// Fraction of agent decisions answered by a policy's fallback.
    pub fallback_rate: f64,
    #[serde(skip)]
    pub votes: Vec<VoteRecord>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Execute one full run. Decision count is exactly duration / tau.
pub fn run(config: &RunConfig) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let start = Instant::now();
    let sim_config = config.sim_config();
    let (network, sim_config, demand) = config.scenario.build(&sim_config)?;
    let mut sim = Simulation::new(network, sim_config, demand)?;
    let mut controller = build_controller(config)?;
    let k = sim.intersection_count();
    let steps = sim.config().decision_steps();
    let mut metrics = MetricsAccumulator::new(k);
    let mut votes = Vec::with_capacity(k * steps as usize);
    for _ in 0..steps {
        let observations = sim.observe_all();
        let pressures = sim.pressures_all();
        let (actions, records) = controller.decide_all(&observations, &pressures)?;
        votes.extend(records);
        let outcome = sim.step(&actions)?;
        metrics.record_step(&outcome.queues, &outcome.window_waiting)?;
        for vehicle in &outcome.exited {
            metrics.record_exit(vehicle)?;
        }
    }
    let counters = sim.counters();
    let metrics = metrics.finalize(counters.entered);
    let unanimity_rate = if votes.is_empty() {
        1.0
    } else {
        votes.iter().filter(|v| v.unanimous).count() as f64 / votes.len() as f64
    };
    let total_decisions = (config.agents * k) as u64 * steps as u64;
    let fallbacks: u64 = controller.agents_mut().iter().map(|a| a.fallback_count()).sum();
    let fallback_rate = if total_decisions == 0 {
        0.0
    } else {
        fallbacks as f64 / total_decisions as f64
    };
    Ok(RunResult {
        config: config.clone(),
        metrics,
        decision_steps: steps as usize,
        counters,
        unanimity_rate,
        fallback_rate,
        votes,
        wall_clock: start.elapsed(),
    })
}

pub const RESULTS_CSV_HEADER: &str =
    "label,controller,agents,seed,duration,tau,att,aql,awt,n_entered,n_exited,unanimity_rate,fallback_rate";

pub fn results_csv_row(r: &RunResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{:.3},{},{},{},{:.4},{:.4}",
        r.config.label(),
        r.config.controller,
        r.config.agents,
        r.config.seed,
        r.config.duration_seconds,
        r.config.tau_seconds,
        r.metrics.att_display(),
        r.metrics.aql,
        r.metrics.awt_display(),
        r.metrics.n_entered,
        r.metrics.n_exited,
        r.unanimity_rate,
        r.fallback_rate,
    )
}

/// Write run outputs into `out_dir`: the config echo with metrics
/// (`run_summary.json`), a one-row `results.csv`, and optionally the full
/// vote log as newline-delimited JSON.
pub fn write_run_outputs(
    result: &RunResult,
    out_dir: impl AsRef<Path>,
    vote_log: bool,
) -> Result<(), HarnessError> {
    let out_dir = out_dir.as_ref();
    let mut summary = serde_json::to_string_pretty(result).expect("result serializes");
    summary.push('\n');
    atomic_write(out_dir.join("run_summary.json"), summary.as_bytes())?;
    let csv = format!("{RESULTS_CSV_HEADER}\n{}\n", results_csv_row(result));
    atomic_write(out_dir.join("results.csv"), csv.as_bytes())?;
    if vote_log {
        let mut log = String::new();
        for vote in &result.votes {
            log.push_str(&serde_json::to_string(vote).expect("vote serializes"));
            log.push('\n');
        }
        atomic_write(out_dir.join("votes.ndjson"), log.as_bytes())?;
    }
    Ok(())
}

/// One aggregated comparison row: a (controller, N) cell averaged over its
/// seeds.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub controller: String,
    pub agents: usize,
    pub seeds: usize,
    pub att_mean: Option<f64>,
    pub att_std: Option<f64>,
    pub aql_mean: f64,
    pub aql_std: f64,
    pub awt_mean: Option<f64>,
    pub awt_std: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    pub csv: String,
    pub markdown: String,
}

/// Run every config and aggregate rows by (label, controller, agents).
/// All configs must share one scenario; fewer than two distinct rows is a
/// contract violation.
pub fn compare(configs: &[RunConfig]) -> Result<CompareResult, HarnessError> {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    for c in configs {
        let key = (c.label(), c.controller.to_string(), c.agents);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    if keys.len() < 2 {
        return Err(HarnessError::InvalidConfig(
            "compare needs at least two distinct (label, controller, agents) entries".into(),
        ));
    }
    let reference = configs[0].scenario.to_canonical_json();
    for c in &configs[1..] {
        if c.scenario.to_canonical_json() != reference {
            return Err(HarnessError::InvalidConfig(
                "compare requires all runs to share one scenario".into(),
            ));
        }
    }
    let mut rows = Vec::new();
    for (label, controller, agents) in keys {
        let mut att = Vec::new();
        let mut aql = Vec::new();
        let mut awt = Vec::new();
        let mut seeds = 0;
        for c in configs {
            if (c.label(), c.controller.to_string(), c.agents) != (label.clone(), controller.clone(), agents) {
                continue;
            }
            let result = run(c)?;
            seeds += 1;
            if let Some(v) = result.metrics.att {
                att.push(v);
            }
            aql.push(result.metrics.aql);
            if let Some(v) = result.metrics.awt {
                awt.push(v);
            }
        }
        let opt_stats = |v: &Vec<f64>| {
            if v.is_empty() {
                (None, None)
            } else {
                (Some(mean(v)), Some(std_dev(v)))
            }
        };
        let (att_mean, att_std) = opt_stats(&att);
        let (awt_mean, awt_std) = opt_stats(&awt);
        rows.push(CompareRow {
            label,
            controller,
            agents,
            seeds,
            att_mean,
            att_std,
            aql_mean: mean(&aql),
            aql_std: std_dev(&aql),
            awt_mean,
            awt_std,
        });
    }
    Ok(render_compare(rows))
}

fn render_compare(rows: Vec<CompareRow>) -> CompareResult {
    let mut csv = String::from(
        "label,controller,agents,seeds,att_mean,att_std,aql_mean,aql_std,awt_mean,awt_std\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{:.3},{},{}\n",
            r.label,
            r.controller,
            r.agents,
            r.seeds,
            fmt_opt(r.att_mean),
            fmt_opt(r.att_std),
            r.aql_mean,
            r.aql_std,
            fmt_opt(r.awt_mean),
            fmt_opt(r.awt_std),
        ));
    }
    // Lower is better for every metric; flag the best mean per column.
    let best_idx = |get: &dyn Fn(&CompareRow) -> Option<f64>| -> Option<usize> {
        rows.iter()
            .enumerate()
            .filter_map(|(i, r)| get(r).map(|v| (i, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    };
    let mut best = Vec::new();
    for (col, get) in [
        (2usize, &(|r: &CompareRow| r.att_mean) as &dyn Fn(&CompareRow) -> Option<f64>),
        (3, &|r: &CompareRow| Some(r.aql_mean)),
        (4, &|r: &CompareRow| r.awt_mean),
    ] {
        if let Some(row) = best_idx(get) {
            best.push((row, col));
        }
    }
    let header: Vec<String> =
        ["Method", "Agents", "ATT", "AQL", "AWT"].iter().map(|s| s.to_string()).collect();
    let md_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
                (Some(m), Some(s)) if r.seeds > 1 => format!("{m:.3} ± {s:.3}"),
                (Some(m), _) => format!("{m:.3}"),
                _ => "n/a".to_string(),
            };
            vec![
                r.label.clone(),
                r.agents.to_string(),
                pm(r.att_mean, r.att_std),
                pm(Some(r.aql_mean), Some(r.aql_std)),
                pm(r.awt_mean, r.awt_std),
            ]
        })
        .collect();
    let markdown = markdown_table(&header, &md_rows, &best);
    CompareResult { rows, csv, markdown }
}

pub fn write_compare_outputs(
    result: &CompareResult,
    out_dir: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let out_dir = out_dir.as_ref();
    atomic_write(out_dir.join("comparison.csv"), result.csv.as_bytes())?;
    atomic_write(out_dir.join("comparison.md"), result.markdown.as_bytes())?;
    Ok(())
}

/// Declarative input for the `compare` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparePlan {
    /// Scenario file path, resolved relative to the plan file.
    pub scenario: String,
    #[serde(default = "default_duration")]
    pub duration_seconds: u32,
    #[serde(default = "default_tau")]
    pub tau_seconds: u32,
    pub seeds: Vec<u64>,
    pub runs: Vec<PlanEntry>,
}

fn default_duration() -> u32 {
    crate::sim::SimConfig::default().duration_seconds
}

fn default_tau() -> u32 {
    crate::sim::SimConfig::default().tau_seconds
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub label: Option<String>,
    pub controller: super::config::ControllerKind,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default)]
    pub llm: super::config::LlmSettings,
    #[serde(default)]
    pub weights_dir: Option<std::path::PathBuf>,
}

fn default_agents() -> usize {
    1
}

impl ComparePlan {
    pub fn load(path: impl AsRef<Path>) -> Result<(ComparePlan, Vec<RunConfig>), HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let plan: ComparePlan = serde_json::from_str(&text)
            .map_err(|e| HarnessError::InvalidConfig(format!("bad plan file: {e}")))?;
        let scenario_path = match path.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => dir.join(&plan.scenario),
            _ => std::path::PathBuf::from(&plan.scenario),
        };
        let scenario = crate::scenario::ScenarioFile::from_path(scenario_path)?;
        let configs = plan.to_configs(scenario);
        Ok((plan, configs))
    }

    pub fn to_configs(&self, scenario: crate::scenario::ScenarioFile) -> Vec<RunConfig> {
        let mut configs = Vec::new();
        for entry in &self.runs {
            for &seed in &self.seeds {
                configs.push(RunConfig {
                    label: entry.label.clone(),
                    scenario: scenario.clone(),
                    controller: entry.controller,
                    agents: entry.agents,
                    seed,
                    duration_seconds: self.duration_seconds,
                    tau_seconds: self.tau_seconds,
                    llm: entry.llm.clone(),
                    weights_dir: entry.weights_dir.clone(),
                });
            }
        }
        configs
    }
}
