use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use votelight::harness::{
    compare, run, train, write_compare_outputs, write_run_outputs, write_train_outputs,
    ComparePlan, ControllerKind, LlmBackendKind, RunConfig, TrainConfig,
};
use votelight::scenario::{generate_grid, DemandProfile, ScenarioFile, SyntheticGridSpec};

const LLM_URL_ENV: &str = "VOTELIGHT_LLM_URL";

#[derive(Parser)]
#[command(name = "votelight", version, about = "Traffic signal control experiments: \
queue microsimulation, classical and learned controllers, and multi-agent voting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one simulation run and write metrics
    Run(RunArgs),
    /// Generate a synthetic grid scenario file
    GenGrid(GenGridArgs),
    /// Run a comparison plan and emit a method-by-method table
    Compare(CompareArgs),
    /// Train MPLight agents and save weights plus the reward curve
    Train(TrainArgs),
}

#[derive(Args)]
struct LlmArgs {
    /// LLM backend: mock, mock-stochastic or http
    #[arg(long, default_value = "mock")]
    llm_backend: String,
    /// Wrong-answer probability of the stochastic mock
    #[arg(long, default_value_t = 0.2)]
    error_rate: f64,
    /// Chat endpoint base URL (or set VOTELIGHT_LLM_URL)
    #[arg(long)]
    base_url: Option<String>,
    /// Model identifier sent to the backend
    #[arg(long, default_value = "lightgpt")]
    model: String,
    /// Retries before falling back to max-pressure
    #[arg(long, default_value_t = 2)]
    retries: u32,
}

impl LlmArgs {
    fn to_settings(&self) -> anyhow::Result<votelight::harness::LlmSettings> {
        let backend = match self.llm_backend.as_str() {
            "mock" => LlmBackendKind::MockDeterministic,
            "mock-stochastic" => LlmBackendKind::MockStochastic { error_rate: self.error_rate },
            "http" => {
                let base_url = self
                    .base_url
                    .clone()
                    .or_else(|| std::env::var(LLM_URL_ENV).ok())
                    .with_context(|| {
                        format!("http backend needs --base-url or {LLM_URL_ENV}")
                    })?;
                LlmBackendKind::Http { base_url }
            }
            other => bail!("unknown llm backend {other:?}; expected mock, mock-stochastic or http"),
        };
        Ok(votelight::harness::LlmSettings {
            backend,
            model: self.model.clone(),
            retries: self.retries,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    /// Controller: fixed, maxpressure, mplight or llm
    #[arg(long)]
    controller: ControllerKind,
    /// Ensemble size N
    #[arg(long, default_value_t = 1)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated seconds
    #[arg(long, default_value_t = 3600)]
    duration: u32,
    /// Seconds each chosen phase is held
    #[arg(long, default_value_t = 30)]
    tau: u32,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Row label in result files (defaults to the controller name)
    #[arg(long)]
    label: Option<String>,
    /// Also write the per-intersection vote log (votes.ndjson)
    #[arg(long)]
    vote_log: bool,
    /// Directory with weights_agent{i}.bin for mplight
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct GenGridArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Arrival rate per entry lane, vehicles per second
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Demand profile: uniform or peak-directional
    #[arg(long, default_value = "uniform")]
    profile: String,
    /// Output scenario file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Plan JSON: scenario path, seeds and run entries
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    episodes: u32,
    #[arg(long, default_value_t = 1)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated seconds per training episode
    #[arg(long, default_value_t = 600)]
    episode_seconds: u32,
    #[arg(long, default_value_t = 30)]
    tau: u32,
    /// Train each agent alone instead of executing the majority action
    #[arg(long)]
    no_vote: bool,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let scenario = ScenarioFile::from_path(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    let config = RunConfig {
        label: args.label,
        scenario,
        controller: args.controller,
        agents: args.agents,
        seed: args.seed,
        duration_seconds: args.duration,
        tau_seconds: args.tau,
        llm: args.llm.to_settings()?,
        weights_dir: args.weights_dir,
    };
    eprintln!("effective config: {}", serde_json::to_string(&config)?);
    let result = run(&config)?;
    write_run_outputs(&result, &args.out, args.vote_log)?;
    println!(
        "controller={} agents={} steps={} ATT={} AQL={:.3} AWT={} exited={} unanimity={:.3} fallback={:.3} wall={:.2}s",
        config.controller,
        config.agents,
        result.decision_steps,
        result.metrics.att_display(),
        result.metrics.aql,
        result.metrics.awt_display(),
        result.metrics.n_exited,
        result.unanimity_rate,
        result.fallback_rate,
        result.wall_clock.as_secs_f64(),
    );
    println!("results written to {}", args.out.display());
    Ok(())
}

fn cmd_gen_grid(args: GenGridArgs) -> anyhow::Result<()> {
    let demand_profile = match args.profile.as_str() {
        "uniform" => DemandProfile::Uniform,
        "peak-directional" => DemandProfile::PeakDirectional,
        other => bail!("unknown profile {other:?}; expected uniform or peak-directional"),
    };
    let scenario = generate_grid(&SyntheticGridSpec {
        rows: args.rows,
        cols: args.cols,
        demand_profile,
        base_lambda: args.lambda,
        seed: args.seed,
    })?;
    scenario.write_to(&args.out)?;
    println!(
        "wrote {}x{} grid ({} intersections) to {}",
        args.rows,
        args.cols,
        scenario.intersection_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let (plan, configs) = ComparePlan::load(&args.plan)?;
    eprintln!("effective plan: {}", serde_json::to_string(&plan)?);
    let result = compare(&configs)?;
    write_compare_outputs(&result, &args.out)?;
    print!("{}", result.markdown);
    println!("comparison written to {}", args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let scenario = ScenarioFile::from_path(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    let config = TrainConfig {
        episodes: args.episodes,
        agents: args.agents,
        seed: args.seed,
        episode_seconds: args.episode_seconds,
        tau_seconds: args.tau,
        vote_during_training: !args.no_vote,
        ..TrainConfig::new(scenario)
    };
    eprintln!("effective config: {}", serde_json::to_string(&config)?);
    let outcome = train(&config)?;
    write_train_outputs(&outcome, &args.out)?;
    let first = outcome.curve.first().copied().unwrap_or(0.0);
    let last = outcome.curve.last().copied().unwrap_or(0.0);
    println!(
        "trained {} episodes, mean reward {:.3} -> {:.3}; weights and curve in {}",
        config.episodes,
        first,
        last,
        args.out.display()
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::GenGrid(args) => cmd_gen_grid(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Train(args) => cmd_train(args),
    }
}
