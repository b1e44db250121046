//! Multi-agent traffic signal control by sampling and voting.
//!
//! The crate simulates grid road networks under four controller families
//! (fixed-time, max-pressure, a pressure-reward DQN, and an LLM-backed
//! agent), aggregates per-intersection decisions from N agents by majority
//! vote, and reports travel-time, queue-length and waiting-time metrics.

pub mod ensemble;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod mplight;
pub mod policy;
pub mod scenario;
pub mod sim;
