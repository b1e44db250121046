//! Discrete-time traffic environment: grid topology, vehicle arrivals,
//! segment-based movement, queue discharge under signal phases, and
//! observation extraction.

mod engine;
mod network;
mod types;

pub use engine::{
    Counters, Demand, Event, Placement, ScheduledVehicle, SimError, Simulation, StepOutcome,
    Vehicle,
};
pub use network::{DownstreamLink, Intersection, Lane, RoadNetwork, SegmentVehicle};
pub use types::{
    governed_lane_index, Dir, LaneId, Movement, ObservationState, Phase, SimConfig, VehicleId,
    DIRS, GOVERNED_LANES, MOVEMENTS, PHASES,
};
