//! Sampling-and-voting over N agents: collect one proposed phase per agent
//! per intersection, then execute the plurality choice.

use serde::Serialize;
use thiserror::Error;

use crate::policy::Policy;
use crate::sim::{ObservationState, Phase};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("majority vote requires at least one proposal")]
    NoProposals,
    #[error("expected {expected} pressure vectors, got {got}")]
    PressureCountMismatch { expected: usize, got: usize },
}

/// Outcome of one per-intersection vote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteRecord {
    pub intersection: usize,
    pub proposals: Vec<Phase>,
    /// Votes per phase index.
    pub tally: [u32; 4],
    pub chosen: Phase,
    pub unanimous: bool,
}

/// Plurality vote with ties broken by lowest phase index.
pub fn majority_vote(proposals: &[Phase]) -> Result<(Phase, [u32; 4]), EnsembleError> {
    if proposals.is_empty() {
        return Err(EnsembleError::NoProposals);
    }
    let mut tally = [0u32; 4];
    for p in proposals {
        tally[p.index()] += 1;
    }
    let mut best = 0;
    for i in 1..4 {
        if tally[i] > tally[best] {
            best = i;
        }
    }
    Ok((Phase::from_index(best).unwrap(), tally))
}

pub struct EnsembleController {
    agents: Vec<Box<dyn Policy>>,
}

impl EnsembleController {
    pub fn new(agents: Vec<Box<dyn Policy>>) -> Self {
        assert!(!agents.is_empty(), "ensemble needs at least one agent");
        EnsembleController { agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agents_mut(&mut self) -> &mut [Box<dyn Policy>] {
        &mut self.agents
    }

    /// Sampling phase: query every agent independently on the same state.
    pub fn sample_actions(
        &mut self,
        obs: &ObservationState,
        pressures: Option<&[i64; 4]>,
    ) -> Vec<Phase> {
        self.agents.iter_mut().map(|a| a.decide(obs, pressures)).collect()
    }

    /// Sampling plus voting for every intersection, in input order.
    pub fn decide_all(
        &mut self,
        observations: &[ObservationState],
        pressures: &[[i64; 4]],
    ) -> Result<(Vec<Phase>, Vec<VoteRecord>), EnsembleError> {
        if pressures.len() != observations.len() {
            return Err(EnsembleError::PressureCountMismatch {
                expected: observations.len(),
                got: pressures.len(),
            });
        }
        let mut actions = Vec::with_capacity(observations.len());
        let mut records = Vec::with_capacity(observations.len());
        for (obs, p) in observations.iter().zip(pressures) {
            let proposals = self.sample_actions(obs, Some(p));
            let (chosen, tally) = majority_vote(&proposals)?;
            let unanimous = proposals.iter().all(|&a| a == chosen);
            records.push(VoteRecord {
                intersection: obs.intersection,
                proposals,
                tally,
                chosen,
                unanimous,
            });
            actions.push(chosen);
        }
        Ok((actions, records))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FixedTimePolicy, MaxPressurePolicy};
    use crate::sim::PHASES;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phases(indices: &[usize]) -> Vec<Phase> {
        indices.iter().map(|&i| Phase::from_index(i).unwrap()).collect()
    }

    fn obs(intersection: usize) -> ObservationState {
        ObservationState {
            intersection,
            phase: Phase::EastWestLeft,
            queued: [0; 8],
            approaching: [[0; 3]; 8],
        }
    }

    #[test]
    fn plurality_wins() {
        let (chosen, tally) = majority_vote(&phases(&[2, 2, 1, 2, 0])).unwrap();
        assert_eq!(chosen.index(), 2);
        assert_eq!(tally, [1, 1, 3, 0]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let (chosen, _) = majority_vote(&phases(&[0, 1])).unwrap();
        assert_eq!(chosen.index(), 0);
        let (chosen, _) = majority_vote(&phases(&[3, 1])).unwrap();
        assert_eq!(chosen.index(), 1);
    }

    #[test]
    fn empty_proposals_are_rejected() {
        assert_eq!(majority_vote(&[]), Err(EnsembleError::NoProposals));
    }

    #[test]
    fn vote_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=10);
            let proposals: Vec<Phase> =
                (0..n).map(|_| PHASES[rng.gen_range(0..4)]).collect();
            let (chosen, _) = majority_vote(&proposals).unwrap();
            let counts: Vec<usize> =
                (0..4).map(|i| proposals.iter().filter(|p| p.index() == i).count()).collect();
            let brute = (0..4).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
            assert_eq!(chosen.index(), brute);
        }
    }

    #[test]
    fn vote_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=10);
            let mut proposals: Vec<Phase> =
                (0..n).map(|_| PHASES[rng.gen_range(0..4)]).collect();
            let (chosen, _) = majority_vote(&proposals).unwrap();
            // Fisher-Yates shuffle.
            for i in (1..proposals.len()).rev() {
                proposals.swap(i, rng.gen_range(0..=i));
            }
            assert_eq!(majority_vote(&proposals).unwrap().0, chosen);
        }
    }

    #[test]
    fn reinforcing_the_winner_never_flips_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=10);
            let mut proposals: Vec<Phase> =
                (0..n).map(|_| PHASES[rng.gen_range(0..4)]).collect();
            let (chosen, _) = majority_vote(&proposals).unwrap();
            let idx = rng.gen_range(0..proposals.len());
            proposals[idx] = chosen;
            assert_eq!(majority_vote(&proposals).unwrap().0, chosen);
        }
    }

    #[test]
    fn unanimity_absorbs() {
        for p in PHASES {
            let (chosen, _) = majority_vote(&vec![p; 7]).unwrap();
            assert_eq!(chosen, p);
        }
    }

    #[test]
    fn single_agent_ensemble_is_transparent() {
        let mut bare = FixedTimePolicy::default();
        let mut ens = EnsembleController::new(vec![Box::new(FixedTimePolicy::default())]);
        for step in 0..8 {
            let o = obs(step % 2);
            let expected = bare.decide(&o, None);
            let (actions, records) = ens.decide_all(&[o], &[[0; 4]]).unwrap();
            assert_eq!(actions, vec![expected]);
            assert!(records[0].unanimous);
        }
    }

    #[test]
    fn identical_deterministic_agents_vote_unanimously() {
        let agents: Vec<Box<dyn Policy>> =
            (0..5).map(|_| Box::new(MaxPressurePolicy) as Box<dyn Policy>).collect();
        let mut ens = EnsembleController::new(agents);
        let proposals = ens.sample_actions(&obs(0), Some(&[1, 5, 2, 0]));
        assert_eq!(proposals, vec![Phase::NorthSouthLeft; 5]);
    }

    #[test]
    fn decide_all_preserves_order_and_tallies() {
        let agents: Vec<Box<dyn Policy>> =
            (0..3).map(|_| Box::new(MaxPressurePolicy) as Box<dyn Policy>).collect();
        let mut ens = EnsembleController::new(agents);
        let observations = vec![obs(0), obs(1)];
        let pressures = vec![[9, 0, 0, 0], [0, 0, 0, 9]];
        let (actions, records) = ens.decide_all(&observations, &pressures).unwrap();
        assert_eq!(actions.iter().map(|a| a.index()).collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(records[1].intersection, 1);
        assert_eq!(records[1].tally, [0, 0, 0, 3]);
        assert_eq!(
            ens.decide_all(&observations, &pressures[..1]),
            Err(EnsembleError::PressureCountMismatch { expected: 2, got: 1 })
        );
    }
}
