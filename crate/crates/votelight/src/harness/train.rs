//! MPLight training loop: N independently seeded agents collecting their
//! own experience, with optional majority voting on the executed action.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, HarnessError};
use super::report::atomic_write;
use crate::ensemble::majority_vote;
use crate::mplight::{encode_state, MPLightAgent, MPLightConfig, Transition};
use crate::scenario::ScenarioFile;
use crate::sim::{ObservationState, Phase, SimConfig, Simulation};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: ScenarioFile,
    pub episodes: u32,
    pub agents: usize,
    pub seed: u64,
    pub episode_seconds: u32,
    pub tau_seconds: u32,
    /// Execute the ensemble's majority action during training; otherwise
    /// each agent trains alone in its own environment copy.
    pub vote_during_training: bool,
    /// Gradient updates per decision step; more updates squeeze more
    /// learning out of each simulated episode.
    pub updates_per_step: u32,
}

impl TrainConfig {
    pub fn new(scenario: ScenarioFile) -> Self {
        TrainConfig {
            scenario,
            episodes: 50,
            agents: 1,
            seed: 0,
            episode_seconds: 600,
            tau_seconds: SimConfig::default().tau_seconds,
            vote_during_training: true,
            updates_per_step: 8,
        }
    }

    fn sim_config(&self, episode: u32) -> SimConfig {
        SimConfig {
            duration_seconds: self.episode_seconds,
            tau_seconds: self.tau_seconds,
            // Each episode sees fresh traffic, still derived from the run seed.
            seed: self.seed.wrapping_add(episode as u64),
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::InvalidConfig("nothing to train: episodes is 0".into()));
        }
        if self.agents == 0 {
            return Err(HarnessError::InvalidConfig("agents must be at least 1".into()));
        }
        self.sim_config(0).validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let violations = self.scenario.validate();
        if !violations.is_empty() {
            return Err(HarnessError::Scenario(crate::scenario::ScenarioError::Invalid(violations)));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Mean per-decision reward (negative pressure) of each episode;
    /// exactly `episodes` entries.
    pub curve: Vec<f64>,
    pub agents: Vec<MPLightAgent>,
}

fn make_agents(config: &TrainConfig) -> Vec<MPLightAgent> {
    let steps = (config.episode_seconds / config.tau_seconds) as u64;
    let intersections = config.scenario.intersection_count() as u64;
    let planned = config.episodes as u64 * steps * intersections;
    // Epsilon anneals over the first fifth of all planned decisions.
    let decay = (planned / 5).max(1) as u32;
    (0..config.agents)
        .map(|i| {
            MPLightAgent::new(MPLightConfig {
                seed: derive_seed(config.seed, i),
                epsilon_decay_steps: decay,
                ..MPLightConfig::default()
            })
        })
        .collect()
}

/// Reward for intersection `k` at the end of a window: the negated
/// intersection pressure (each governed lane counted once).
fn window_reward(pressures: &[[i64; 4]], k: usize) -> f64 {
    -(pressures[k].iter().sum::<i64>() as f64)
}

fn states_of(observations: &[ObservationState], norm: f64) -> Vec<[f64; 12]> {
    observations.iter().map(|o| encode_state(o, norm)).collect()
}

/// One episode where every agent proposes and the majority action runs in
/// a single shared environment. Returns the summed reward and reward count.
fn shared_episode(
    sim: &mut Simulation,
    agents: &mut [MPLightAgent],
    steps: u32,
    updates: u32,
) -> Result<(f64, u64), HarnessError> {
    let k = sim.intersection_count();
    let norm = agents[0].config().norm_capacity;
    let mut reward_sum = 0.0;
    let mut reward_count = 0u64;
    for _ in 0..steps {
        let states = states_of(&sim.observe_all(), norm);
        let mut executed = Vec::with_capacity(k);
        let mut proposals = vec![Vec::with_capacity(agents.len()); k];
        for agent in agents.iter_mut() {
            for (i, state) in states.iter().enumerate() {
                proposals[i].push(agent.act(state, true));
            }
        }
        for lane_proposals in &proposals {
            let (phase, _) = majority_vote(lane_proposals).expect("at least one agent");
            executed.push(phase);
        }
        sim.step(&executed)?;
        let pressures = sim.pressures_all();
        let next_states = states_of(&sim.observe_all(), norm);
        for agent in agents.iter_mut() {
            for i in 0..k {
                agent.store(Transition {
                    state: states[i],
                    action: executed[i],
                    reward: window_reward(&pressures, i),
                    next_state: next_states[i],
                });
            }
            for _ in 0..updates {
                agent.train_step();
            }
        }
        for i in 0..k {
            reward_sum += window_reward(&pressures, i);
            reward_count += 1;
        }
    }
    Ok((reward_sum, reward_count))
}

/// One episode with a single agent driving its own environment.
fn solo_episode(
    sim: &mut Simulation,
    agent: &mut MPLightAgent,
    steps: u32,
    updates: u32,
) -> Result<(f64, u64), HarnessError> {
    let k = sim.intersection_count();
    let norm = agent.config().norm_capacity;
    let mut reward_sum = 0.0;
    let mut reward_count = 0u64;
    for _ in 0..steps {
        let states = states_of(&sim.observe_all(), norm);
        let executed: Vec<Phase> = states.iter().map(|s| agent.act(s, true)).collect();
        sim.step(&executed)?;
        let pressures = sim.pressures_all();
        let next_states = states_of(&sim.observe_all(), norm);
        for i in 0..k {
            agent.store(Transition {
                state: states[i],
                action: executed[i],
                reward: window_reward(&pressures, i),
                next_state: next_states[i],
            });
            reward_sum += window_reward(&pressures, i);
            reward_count += 1;
        }
        for _ in 0..updates {
            agent.train_step();
        }
    }
    Ok((reward_sum, reward_count))
}

/// Train for `episodes` episodes and return the reward curve plus the
/// trained agents (weights still in memory; see [`write_train_outputs`]).
pub fn train(config: &TrainConfig) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let mut agents = make_agents(config);
    let steps = config.episode_seconds / config.tau_seconds;
    let mut curve = Vec::with_capacity(config.episodes as usize);
    for episode in 0..config.episodes {
        let sim_config = config.sim_config(episode);
        let (mut sum, mut count) = (0.0, 0u64);
        if config.vote_during_training {
            let (network, sim_config, demand) = config.scenario.build(&sim_config)?;
            let mut sim = Simulation::new(network, sim_config, demand)?;
            let (s, c) = shared_episode(&mut sim, &mut agents, steps, config.updates_per_step)?;
            sum += s;
            count += c;
        } else {
            for agent in &mut agents {
                let (network, sim_config, demand) = config.scenario.build(&sim_config)?;
                let mut sim = Simulation::new(network, sim_config, demand)?;
                let (s, c) = solo_episode(&mut sim, agent, steps, config.updates_per_step)?;
                sum += s;
                count += c;
            }
        }
        curve.push(if count == 0 { 0.0 } else { sum / count as f64 });
    }
    Ok(TrainOutcome { curve, agents })
}

/// Persist `weights_agent{i}.bin` per agent and the training curve CSV
/// (header plus one row per episode).
pub fn write_train_outputs(
    outcome: &TrainOutcome,
    out_dir: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)
        .map_err(|source| HarnessError::Io { path: out_dir.display().to_string(), source })?;
    for (i, agent) in outcome.agents.iter().enumerate() {
        agent.save_weights(out_dir.join(format!("weights_agent{i}.bin")))?;
    }
    let mut csv = String::from("episode,mean_reward\n");
    for (episode, reward) in outcome.curve.iter().enumerate() {
        csv.push_str(&format!("{episode},{reward:.6}\n"));
    }
    atomic_write(out_dir.join("training_curve.csv"), csv.as_bytes())?;
    Ok(())
}
