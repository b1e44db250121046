//! The `Policy` decision interface and the two classical controllers:
//! fixed-time cycling and max-pressure.

use std::collections::HashMap;

use crate::sim::{ObservationState, Phase, PHASES};

/// A traffic signal controller: maps an intersection observation to the
/// phase to hold for the next decision window.
///
/// `pressures` carries the per-phase pressure of the observed intersection
/// when the caller can provide it; pressure-based policies degrade to a
/// queue-count proxy without it.
pub trait Policy {
    fn name(&self) -> &str;

    fn is_deterministic(&self) -> bool;

    fn decide(&mut self, obs: &ObservationState, pressures: Option<&[i64; 4]>) -> Phase;

    /// Decisions answered by an internal fallback instead of the policy's
    /// primary mechanism. Zero for policies without one.
    fn fallback_count(&self) -> u64 {
        0
    }
}

/// Argmax over the four phases with ties broken by lowest phase index.
pub fn argmax_phase(values: &[i64; 4]) -> Phase {
    let mut best = 0;
    for i in 1..4 {
        if values[i] > values[best] {
            best = i;
        }
    }
    Phase::from_index(best).unwrap()
}

/// Cycles through a fixed phase schedule, ignoring traffic state.
#[derive(Debug, Clone)]
pub struct FixedTimePolicy {
    cycle: Vec<Phase>,
    counters: HashMap<usize, u64>,
}

impl FixedTimePolicy {
    pub fn new(cycle: Vec<Phase>) -> Self {
        assert!(!cycle.is_empty(), "fixed-time cycle must be non-empty");
        FixedTimePolicy { cycle, counters: HashMap::new() }
    }
}

impl Default for FixedTimePolicy {
    fn default() -> Self {
        FixedTimePolicy::new(PHASES.to_vec())
    }
}

impl Policy for FixedTimePolicy {
    fn name(&self) -> &str {
        "fixed"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn decide(&mut self, obs: &ObservationState, _pressures: Option<&[i64; 4]>) -> Phase {
        let counter = self.counters.entry(obs.intersection).or_insert(0);
        let phase = self.cycle[(*counter % self.cycle.len() as u64) as usize];
        *counter += 1;
        phase
    }
}

/// Picks the phase with maximal pressure (incoming minus downstream queue
/// lengths over the phase's governed lanes). Stateless.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPressurePolicy;

impl MaxPressurePolicy {
    /// Fallback signal when no pressure values are available: total queued
    /// vehicles on each phase's governed lanes (downstream treated as 0).
    pub fn queue_proxy(obs: &ObservationState) -> [i64; 4] {
        let mut out = [0i64; 4];
        for (i, phase) in PHASES.iter().enumerate() {
            for (approach, movement) in phase.governed_lanes() {
                let slot = crate::sim::governed_lane_index(approach, movement).unwrap();
                out[i] += obs.queued[slot] as i64;
            }
        }
        out
    }
}

impl Policy for MaxPressurePolicy {
    fn name(&self) -> &str {
        "maxpressure"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn decide(&mut self, obs: &ObservationState, pressures: Option<&[i64; 4]>) -> Phase {
        match pressures {
            Some(p) => argmax_phase(p),
            None => argmax_phase(&Self::queue_proxy(obs)),
        }
    }
}
