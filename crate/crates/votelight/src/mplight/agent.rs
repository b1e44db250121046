//! The MPLight-style agent: a small Q-network shared across all
//! intersections, epsilon-greedy action selection, replay memory and
//! online TD(0) updates with a periodically refreshed target network.
//!
//! The original MPLight sits on top of the FRAP architecture; here the
//! Q-function is a plain fully-connected net over a 12-dimensional state
//! (one-hot phase + normalized per-lane counts).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{QNetwork, QSample};
use super::replay::{ReplayMemory, Transition, STATE_DIM};
use super::weights::{self, WeightsError};
use crate::policy::Policy;
use crate::sim::{ObservationState, Phase, PHASES};

#[derive(Debug, Clone, PartialEq)]
pub struct MPLightConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Target network refresh interval, in train steps.
    pub target_update_interval: u32,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Epsilon decays linearly over this many action selections.
    pub epsilon_decay_steps: u32,
    /// Lane counts are normalized by this constant and clamped to [0, 1].
    pub norm_capacity: f64,
    pub seed: u64,
}

impl Default for MPLightConfig {
    fn default() -> Self {
        MPLightConfig {
            hidden: 32,
            gamma: 0.8,
            learning_rate: 0.001,
            batch_size: 32,
            replay_capacity: 10_000,
            target_update_interval: 100,
            epsilon_start: 1.0,
            epsilon_min: 0.05,
            epsilon_decay_steps: 1000,
            norm_capacity: 40.0,
            seed: 0,
        }
    }
}

/// Encode an observation as the 12-dimensional state vector: one-hot
/// current phase followed by the total vehicle count of each governed lane
/// divided by `norm_capacity`, clamped to [0, 1].
pub fn encode_state(obs: &ObservationState, norm_capacity: f64) -> [f64; STATE_DIM] {
    let mut v = [0.0; STATE_DIM];
    v[obs.phase.index()] = 1.0;
    for lane in 0..8 {
        v[4 + lane] = (obs.lane_total(lane) as f64 / norm_capacity).clamp(0.0, 1.0);
    }
    v
}

/// TD(0) target: `r + gamma * max_a' Q_target(s', a')`.
pub fn td_target(reward: f64, gamma: f64, max_next_q: f64) -> f64 {
    reward + gamma * max_next_q
}

fn greedy_index(q: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..q.len() {
        if q[i] > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug)]
pub struct MPLightAgent {
    config: MPLightConfig,
    qnet: QNetwork,
    target: QNetwork,
    memory: ReplayMemory,
    rng: ChaCha8Rng,
    act_steps: u32,
    train_steps: u32,
}

impl MPLightAgent {
    pub fn new(config: MPLightConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = [STATE_DIM, config.hidden, config.hidden, 4];
        let qnet = QNetwork::new(&dims, &mut rng);
        let target = qnet.clone();
        let memory = ReplayMemory::new(config.replay_capacity);
        MPLightAgent { config, qnet, target, memory, rng, act_steps: 0, train_steps: 0 }
    }

    pub fn config(&self) -> &MPLightConfig {
        &self.config
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    pub fn train_steps(&self) -> u32 {
        self.train_steps
    }

    /// Current exploration probability under the linear decay schedule.
    pub fn epsilon(&self) -> f64 {
        let c = &self.config;
        if c.epsilon_decay_steps == 0 {
            return c.epsilon_min;
        }
        let frac = (self.act_steps as f64 / c.epsilon_decay_steps as f64).min(1.0);
        c.epsilon_start + (c.epsilon_min - c.epsilon_start) * frac
    }

    pub fn q_values(&self, state: &[f64; STATE_DIM]) -> [f64; 4] {
        let q = self.qnet.forward(state);
        [q[0], q[1], q[2], q[3]]
    }

    /// Select a phase. With `explore`, a uniformly random phase is taken
    /// with probability epsilon (advancing the decay schedule); otherwise
    /// the greedy argmax with ties to the lowest phase index.
    pub fn act(&mut self, state: &[f64; STATE_DIM], explore: bool) -> Phase {
        if explore {
            let eps = self.epsilon();
            self.act_steps += 1;
            if self.rng.gen::<f64>() < eps {
                return PHASES[self.rng.gen_range(0..4)];
            }
        }
        PHASES[greedy_index(&self.qnet.forward(state))]
    }

    pub fn store(&mut self, transition: Transition) {
        self.memory.push(transition);
    }

    /// One training update on a uniformly sampled batch. Returns the batch
    /// loss, or `None` while the memory is smaller than the batch size.
    pub fn train_step(&mut self) -> Option<f64> {
        let batch = self.memory.sample(&mut self.rng, self.config.batch_size)?;
        let samples: Vec<QSample> = batch
            .into_iter()
            .map(|t| {
                let next_q = self.target.forward(&t.next_state);
                let max_next = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                QSample {
                    state: t.state.to_vec(),
                    action: t.action.index(),
                    target: td_target(t.reward, self.config.gamma, max_next),
                }
            })
            .collect();
        let loss = self.qnet.train_batch(&samples, self.config.learning_rate);
        self.train_steps += 1;
        if self.train_steps % self.config.target_update_interval == 0 {
            self.target = self.qnet.clone();
        }
        Some(loss)
    }

    pub fn network(&self) -> &QNetwork {
        &self.qnet
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        weights::save(&self.qnet, path)
    }

    pub fn load_weights(&mut self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        let dims = self.qnet.dims();
        let net = weights::load(path, &dims)?;
        self.qnet = net.clone();
        self.target = net;
        Ok(())
    }
}

/// [`Policy`] adapter. One instance (hence one parameter set) serves every
/// intersection of the network.
pub struct MPLightPolicy {
    agent: MPLightAgent,
    explore: bool,
}

impl MPLightPolicy {
    pub fn new(agent: MPLightAgent, explore: bool) -> Self {
        MPLightPolicy { agent, explore }
    }

    pub fn agent(&self) -> &MPLightAgent {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut MPLightAgent {
        &mut self.agent
    }
}

impl Policy for MPLightPolicy {
    fn name(&self) -> &str {
        "mplight"
    }

    fn is_deterministic(&self) -> bool {
        !self.explore
    }

    fn decide(&mut self, obs: &ObservationState, _pressures: Option<&[i64; 4]>) -> Phase {
        let state = encode_state(obs, self.agent.config.norm_capacity);
        self.agent.act(&state, self.explore)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(phase: Phase, counts: [u32; 8]) -> ObservationState {
        let mut approaching = [[0u32; 3]; 8];
        for (i, c) in counts.iter().enumerate() {
            approaching[i] = [0, 0, *c];
        }
        ObservationState { intersection: 0, phase, queued: [0; 8], approaching }
    }

    #[test]
    fn encode_one_hot_and_normalization() {
        let s = encode_state(&obs(Phase::EastWestThrough, [0; 8]), 40.0);
        assert_eq!(s, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = encode_state(&obs(Phase::EastWestLeft, [1, 2, 3, 4, 5, 6, 7, 8]), 40.0);
        assert_eq!(s[0], 1.0);
        for lane in 0..8 {
            let expected = (lane + 1) as f64 * 0.025;
            assert!((s[4 + lane] - expected).abs() < 1e-12);
        }
        // Clamped at capacity.
        let s = encode_state(&obs(Phase::EastWestLeft, [100, 0, 0, 0, 0, 0, 0, 0]), 40.0);
        assert_eq!(s[4], 1.0);
    }

    #[test]
    fn encode_is_injective_below_capacity() {
        let mut seen = std::collections::HashMap::new();
        for phase in PHASES {
            for a in 0..4u32 {
                for b in 0..4u32 {
                    let counts = [a, b, 0, 0, 0, 0, 0, 0];
                    let enc = encode_state(&obs(phase, counts), 40.0);
                    let key: Vec<u64> = enc.iter().map(|v| v.to_bits()).collect();
                    if let Some(prev) = seen.insert(key, (phase, counts)) {
                        panic!("collision between {prev:?} and {:?}", (phase, counts));
                    }
                }
            }
        }
    }

    #[test]
    fn td_target_formula() {
        assert!((td_target(-2.0, 0.8, 1.0) - (-1.2)).abs() < 1e-12);
    }

    #[test]
    fn greedy_tie_breaks_to_lowest_index() {
        assert_eq!(greedy_index(&[1.0, 2.0, 0.5, 2.0]), 1);
        assert_eq!(greedy_index(&[0.0, 0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn full_exploration_is_roughly_uniform() {
        let config = MPLightConfig {
            epsilon_start: 1.0,
            epsilon_min: 1.0,
            epsilon_decay_steps: 0,
            ..MPLightConfig::default()
        };
        let mut agent = MPLightAgent::new(config);
        let state = [0.0; STATE_DIM];
        let mut counts = [0u32; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[agent.act(&state, true).index()] += 1;
        }
        // Binomial(10000, 0.25): sigma ~ 43.3, allow +-3 sigma.
        for c in counts {
            assert!((c as f64 - 2500.0).abs() < 130.0, "counts {counts:?}");
        }
    }

    #[test]
    fn explore_false_ignores_epsilon() {
        let config = MPLightConfig {
            epsilon_start: 1.0,
            epsilon_min: 1.0,
            ..MPLightConfig::default()
        };
        let mut agent = MPLightAgent::new(config);
        let state = encode_state(&obs(Phase::EastWestLeft, [3, 1, 4, 1, 5, 9, 2, 6]), 40.0);
        let first = agent.act(&state, false);
        for _ in 0..50 {
            assert_eq!(agent.act(&state, false), first);
        }
        assert_eq!(agent.epsilon(), 1.0); // schedule untouched
    }

    #[test]
    fn epsilon_decays_linearly_to_the_floor() {
        let config = MPLightConfig {
            epsilon_decay_steps: 100,
            ..MPLightConfig::default()
        };
        let mut agent = MPLightAgent::new(config);
        let state = [0.0; STATE_DIM];
        assert_eq!(agent.epsilon(), 1.0);
        for _ in 0..50 {
            agent.act(&state, true);
        }
        assert!((agent.epsilon() - 0.525).abs() < 1e-9);
        for _ in 0..200 {
            agent.act(&state, true);
        }
        assert!((agent.epsilon() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn train_step_requires_a_full_batch() {
        let mut agent = MPLightAgent::new(MPLightConfig { batch_size: 4, ..Default::default() });
        assert!(agent.train_step().is_none());
        for i in 0..4 {
            agent.store(Transition {
                state: [i as f64 / 10.0; STATE_DIM],
                action: Phase::EastWestLeft,
                reward: -1.0,
                next_state: [0.0; STATE_DIM],
            });
        }
        assert!(agent.train_step().is_some());
    }

    #[test]
    fn repeated_training_converges_toward_the_target() {
        let config = MPLightConfig {
            batch_size: 1,
            learning_rate: 0.01,
            target_update_interval: 1_000_000,
            ..MPLightConfig::default()
        };
        let mut agent = MPLightAgent::new(config);
        let t = Transition {
            state: [0.3; STATE_DIM],
            action: Phase::NorthSouthLeft,
            reward: -2.0,
            next_state: [0.1; STATE_DIM],
        };
        agent.store(t.clone());
        let y = {
            let next_q = agent.target.forward(&t.next_state);
            td_target(t.reward, agent.config.gamma, next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        };
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let loss = agent.train_step().unwrap();
            assert!(loss <= last + 1e-12, "loss increased");
            last = loss;
        }
        let q = agent.q_values(&t.state);
        assert!((q[1] - y).abs() < 0.1, "Q={q:?} target={y}");
    }

    #[test]
    fn identical_seeds_give_identical_weight_trajectories() {
        let mk = || {
            let mut agent = MPLightAgent::new(MPLightConfig {
                batch_size: 2,
                seed: 33,
                ..Default::default()
            });
            for i in 0..10 {
                agent.store(Transition {
                    state: [(i as f64) / 10.0; STATE_DIM],
                    action: PHASES[i % 4],
                    reward: -(i as f64),
                    next_state: [(i as f64 + 1.0) / 10.0; STATE_DIM],
                });
            }
            for _ in 0..20 {
                agent.train_step().unwrap();
            }
            agent
        };
        let a = mk();
        let b = mk();
        assert_eq!(a.qnet, b.qnet);
    }

    #[test]
    fn weight_round_trip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let agent = MPLightAgent::new(MPLightConfig { seed: 4, ..Default::default() });
        agent.save_weights(&path).unwrap();
        let mut other = MPLightAgent::new(MPLightConfig { seed: 99, ..Default::default() });
        other.load_weights(&path).unwrap();
        let state = [0.2; STATE_DIM];
        assert_eq!(agent.q_values(&state), other.q_values(&state));
    }

    #[test]
    fn shared_policy_serves_all_intersections() {
        let mut policy = MPLightPolicy::new(
            MPLightAgent::new(MPLightConfig::default()),
            false,
        );
        // Same parameters answer for every intersection id.
        let a = policy.decide(&obs(Phase::EastWestLeft, [1; 8]), None);
        let o2 = ObservationState { intersection: 7, ..obs(Phase::EastWestLeft, [1; 8]) };
        assert_eq!(policy.decide(&o2, None), a);
        assert_eq!(policy.name(), "mplight");
        assert!(policy.is_deterministic());
    }
}
