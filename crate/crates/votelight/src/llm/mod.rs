//! LLM-backed signal controller.

pub mod backend;
pub mod policy;
pub mod prompt;

pub use backend::{Backend, BackendError, DeterministicMockBackend, LLMRequest, LLMResponse, ScriptedBackend, StochasticMockBackend};
pub use policy::{LlmPolicy, LlmPolicyConfig, Provenance};
pub use prompt::{build_prompt, parse_signal, ParseError, PromptContext, SYSTEM_PROMPT};
