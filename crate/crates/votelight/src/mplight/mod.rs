//! Pressure-driven deep Q-learning signal controller.

mod agent;
mod net;
mod replay;
mod weights;

pub use agent::{encode_state, td_target, MPLightAgent, MPLightConfig, MPLightPolicy};
pub use net::{Dense, QNetwork, QSample};
pub use replay::{ReplayMemory, Transition, STATE_DIM};
pub use weights::{load as load_weights, save as save_weights, WeightsError};
