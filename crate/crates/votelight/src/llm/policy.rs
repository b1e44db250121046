//! [`Policy`] adapter around a text-generation backend with retries and a
//! max-pressure fallback.

use super::backend::{Backend, LLMRequest, DEFAULT_TEMPERATURE};
use super::prompt::{build_prompt, parse_signal, PromptContext, SYSTEM_PROMPT};
use crate::policy::{MaxPressurePolicy, Policy};
use crate::sim::{ObservationState, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// First attempt parsed cleanly.
    Llm,
    /// Succeeded after this many retries.
    LlmRetry(u32),
    /// All attempts failed; max-pressure answered instead.
    Fallback,
}

impl Provenance {
    pub fn label(self) -> String {
        match self {
            Provenance::Llm => "llm".to_string(),
            Provenance::LlmRetry(n) => format!("llm-retry-{n}"),
            Provenance::Fallback => "fallback".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmPolicyConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_seconds: u64,
    /// Additional attempts after the first before falling back.
    pub retries: u32,
}

impl Default for LlmPolicyConfig {
    fn default() -> Self {
        LlmPolicyConfig {
            model: "lightgpt".to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 1024,
            timeout_seconds: 60,
            retries: 2,
        }
    }
}

pub struct LlmPolicy {
    config: LlmPolicyConfig,
    backend: Box<dyn Backend>,
    fallback: MaxPressurePolicy,
    decisions: u64,
    fallbacks: u64,
    retried: u64,
}

impl LlmPolicy {
    pub fn new(backend: Box<dyn Backend>, config: LlmPolicyConfig) -> Self {
        LlmPolicy {
            config,
            backend,
            fallback: MaxPressurePolicy,
            decisions: 0,
            fallbacks: 0,
            retried: 0,
        }
    }

    pub fn config(&self) -> &LlmPolicyConfig {
        &self.config
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    /// Count of decisions answered by the max-pressure fallback.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// Count of decisions that needed at least one retry.
    pub fn retried(&self) -> u64 {
        self.retried
    }

    fn request(&self, obs: &ObservationState, pressures: Option<&[i64; 4]>) -> LLMRequest {
        let user = build_prompt(&PromptContext::new(obs.clone()));
        let mut req = LLMRequest::new(self.config.model.clone(), SYSTEM_PROMPT, user);
        req.temperature = self.config.temperature;
        req.max_tokens = self.config.max_tokens;
        req.timeout_seconds = self.config.timeout_seconds;
        req.pressure_hint = pressures.copied();
        req
    }

    /// Query the backend, retrying on transport or parse failure, then fall
    /// back to max-pressure on the same observation.
    pub fn decide_with_provenance(
        &mut self,
        obs: &ObservationState,
        pressures: Option<&[i64; 4]>,
    ) -> (Phase, Provenance) {
        self.decisions += 1;
        let req = self.request(obs, pressures);
        for attempt in 0..=self.config.retries {
            let parsed = self.backend.complete(&req).ok().and_then(|raw| parse_signal(&raw).ok());
            if let Some(phase) = parsed {
                let provenance = if attempt == 0 {
                    Provenance::Llm
                } else {
                    self.retried += 1;
                    Provenance::LlmRetry(attempt)
                };
                return (phase, provenance);
            }
        }
        self.fallbacks += 1;
        (self.fallback.decide(obs, pressures), Provenance::Fallback)
    }
}

impl Policy for LlmPolicy {
    fn name(&self) -> &str {
        "llm"
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn decide(&mut self, obs: &ObservationState, pressures: Option<&[i64; 4]>) -> Phase {
        self.decide_with_provenance(obs, pressures).0
    }

    fn fallback_count(&self) -> u64 {
        self.fallbacks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::backend::{BackendError, DeterministicMockBackend, ScriptedBackend};

    fn obs() -> ObservationState {
        ObservationState {
            intersection: 0,
            phase: Phase::EastWestLeft,
            queued: [9, 0, 4, 0, 0, 0, 0, 0],
            approaching: [[0; 3]; 8],
        }
    }

    #[test]
    fn clean_first_attempt_is_llm_provenance() {
        let mut p = LlmPolicy::new(Box::new(DeterministicMockBackend), LlmPolicyConfig::default());
        let (phase, prov) = p.decide_with_provenance(&obs(), Some(&[0, 3, 0, 1]));
        assert_eq!(phase, Phase::NorthSouthLeft);
        assert_eq!(prov, Provenance::Llm);
        assert_eq!(p.fallbacks(), 0);
    }

    #[test]
    fn one_failure_then_success_is_retry_one() {
        let backend = ScriptedBackend::new(vec![
            Err(BackendError::Timeout),
            Ok("Step 2: <signal>NTST</signal>".into()),
        ]);
        let mut p = LlmPolicy::new(Box::new(backend), LlmPolicyConfig::default());
        let (phase, prov) = p.decide_with_provenance(&obs(), None);
        assert_eq!(phase, Phase::NorthSouthThrough);
        assert_eq!(prov, Provenance::LlmRetry(1));
        assert_eq!(p.retried(), 1);
    }

    #[test]
    fn exhausted_retries_fall_back_to_max_pressure() {
        let backend = ScriptedBackend::new(vec![
            Ok("no tag here".into()),
            Ok("<signal>PURPLE</signal>".into()),
            Err(BackendError::Timeout),
        ]);
        let config = LlmPolicyConfig { retries: 2, ..Default::default() };
        let mut p = LlmPolicy::new(Box::new(backend), config);
        // Hand-computed: NTST governs both queued lanes (9 + 4), pressures
        // with no downstream traffic equal the queue sums.
        let (phase, prov) = p.decide_with_provenance(&obs(), Some(&[0, 0, 0, 13]));
        assert_eq!(phase, Phase::NorthSouthThrough);
        assert_eq!(prov, Provenance::Fallback);
        assert_eq!(p.fallbacks(), 1);
    }

    #[test]
    fn fallback_works_without_pressures_via_queue_proxy() {
        let backend = ScriptedBackend::new(vec![]);
        let config = LlmPolicyConfig { retries: 0, ..Default::default() };
        let mut p = LlmPolicy::new(Box::new(backend), config);
        let (phase, prov) = p.decide_with_provenance(&obs(), None);
        assert_eq!(phase, Phase::NorthSouthThrough);
        assert_eq!(prov, Provenance::Fallback);
    }

    #[test]
    fn counters_track_every_decision() {
        let backend = ScriptedBackend::new(vec![
            Ok("<signal>ELWL</signal>".into()),
            Ok("garbage".into()),
            Ok("<signal>ETWT</signal>".into()),
        ]);
        let config = LlmPolicyConfig { retries: 1, ..Default::default() };
        let mut p = LlmPolicy::new(Box::new(backend), config);
        p.decide(&obs(), None);
        p.decide(&obs(), None);
        p.decide(&obs(), None); // script exhausted, falls back
        assert_eq!(p.decisions(), 3);
        assert_eq!(p.retried(), 1);
        assert_eq!(p.fallbacks(), 1);
    }
}
