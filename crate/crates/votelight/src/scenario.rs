//! Scenario files: versioned JSON documents describing a grid network and
//! its arrival demand, plus a generator for synthetic grids.
//!
//! Schema v1 (unknown keys rejected):
//!
//! ```json
//! {
//!   "version": "1",
//!   "grid": { "rows": 3, "cols": 4 },
//!   "demand": [ { "entry_lane": "0:N:T", "lambda": 0.05 } ],
//!   "vehicles": [
//!     { "entry_time": 0, "route": { "entry_lane": "0:W:T", "exits": ["E", "E"] } }
//!   ],
//!   "dynamics": {
//!     "saturation_headway": 2.0,
//!     "segment_traverse_seconds": 10,
//!     "capacity_per_segment": 40
//!   }
//! }
//! ```
//!
//! `entry_lane` is `<intersection>:<approach N|S|E|W>:<movement T|L|R>`.
//! A vehicle route lists its exit heading at every intersection visited,
//! starting with the entry intersection; the first exit must match the
//! entry lane's movement.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Demand, Dir, LaneId, RoadNetwork, ScheduledVehicle, SimConfig};

pub const SCENARIO_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// A single schema violation with a machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationCode {
    BadVersion,
    GridEmpty,
    NegativeLambda,
    UnknownEntryLane,
    NotEntryLane,
    DuplicateEntryLane,
    VehiclesUnsorted,
    RouteEmpty,
    RouteDangling,
    RouteMovementMismatch,
    RouteUturn,
    BadDynamics,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::BadVersion => "BAD_VERSION",
            ViolationCode::GridEmpty => "GRID_EMPTY",
            ViolationCode::NegativeLambda => "NEGATIVE_LAMBDA",
            ViolationCode::UnknownEntryLane => "UNKNOWN_ENTRY_LANE",
            ViolationCode::NotEntryLane => "NOT_ENTRY_LANE",
            ViolationCode::DuplicateEntryLane => "DUPLICATE_ENTRY_LANE",
            ViolationCode::VehiclesUnsorted => "VEHICLES_UNSORTED",
            ViolationCode::RouteEmpty => "ROUTE_EMPTY",
            ViolationCode::RouteDangling => "ROUTE_DANGLING",
            ViolationCode::RouteMovementMismatch => "ROUTE_MOVEMENT_MISMATCH",
            ViolationCode::RouteUturn => "ROUTE_UTURN",
            ViolationCode::BadDynamics => "BAD_DYNAMICS",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.detail)
    }
}

fn violation(code: ViolationCode, detail: impl Into<String>) -> Violation {
    Violation { code, detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: String,
    pub grid: GridShape,
    pub demand: Vec<DemandEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicles: Option<Vec<VehicleEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsOverrides>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandEntry {
    pub entry_lane: LaneId,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleEntry {
    pub entry_time: u32,
    pub route: RouteSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub entry_lane: LaneId,
    pub exits: Vec<Dir>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DynamicsOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation_headway: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_traverse_seconds: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_per_segment: Option<usize>,
}

/// Demand layout for [`generate_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandProfile {
    /// Same rate on every entry lane.
    Uniform,
    /// East-west entries loaded heavier than north-south, with seeded
    /// per-lane jitter.
    PeakDirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGridSpec {
    pub rows: usize,
    pub cols: usize,
    pub demand_profile: DemandProfile,
    /// Base arrival rate in vehicles per second per entry lane.
    pub base_lambda: f64,
    pub seed: u64,
}

/// Generate a synthetic grid scenario. Pure function of the spec: the same
/// spec (including seed) always yields an identical file.
pub fn generate_grid(spec: &SyntheticGridSpec) -> Result<ScenarioFile, ScenarioError> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(ScenarioError::Invalid(vec![violation(
            ViolationCode::GridEmpty,
            format!("grid {}x{} has no intersections", spec.rows, spec.cols),
        )]));
    }
    if !spec.base_lambda.is_finite() || spec.base_lambda < 0.0 {
        return Err(ScenarioError::Invalid(vec![violation(
            ViolationCode::NegativeLambda,
            format!("base_lambda {} must be non-negative", spec.base_lambda),
        )]));
    }
    let network = RoadNetwork::grid(spec.rows, spec.cols, SimConfig::default().capacity_per_segment);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let demand = network
        .entry_lanes
        .iter()
        .map(|&lane| {
            let lambda = match spec.demand_profile {
                DemandProfile::Uniform => spec.base_lambda,
                DemandProfile::PeakDirectional => {
                    let weight = match lane.approach {
                        Dir::East | Dir::West => 1.6,
                        Dir::North | Dir::South => 0.4,
                    };
                    let jitter: f64 = rng.gen_range(0.9..1.1);
                    spec.base_lambda * weight * jitter
                }
            };
            DemandEntry { entry_lane: lane, lambda }
        })
        .collect();
    Ok(ScenarioFile {
        version: SCENARIO_VERSION.to_string(),
        grid: GridShape { rows: spec.rows, cols: spec.cols },
        demand,
        vehicles: None,
        dynamics: None,
    })
}

impl ScenarioFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<ScenarioFile, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        let scenario: ScenarioFile = serde_json::from_str(&text)?;
        let violations = scenario.validate();
        if violations.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }

    /// Canonical serialization: pretty JSON plus a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_json())
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
    }

    /// Check every schema invariant; an empty list means the scenario is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.version != SCENARIO_VERSION {
            out.push(violation(
                ViolationCode::BadVersion,
                format!("version {:?}, expected {SCENARIO_VERSION:?}", self.version),
            ));
        }
        if self.grid.rows == 0 || self.grid.cols == 0 {
            out.push(violation(
                ViolationCode::GridEmpty,
                format!("grid {}x{} has no intersections", self.grid.rows, self.grid.cols),
            ));
            return out;
        }
        let network = RoadNetwork::grid(self.grid.rows, self.grid.cols, 1);
        let mut seen = std::collections::HashSet::new();
        for entry in &self.demand {
            if !entry.lambda.is_finite() || entry.lambda < 0.0 {
                out.push(violation(
                    ViolationCode::NegativeLambda,
                    format!("lambda {} on {}", entry.lambda, entry.entry_lane),
                ));
            }
            match network.lane(entry.entry_lane) {
                None => out.push(violation(
                    ViolationCode::UnknownEntryLane,
                    format!("{} does not exist in the grid", entry.entry_lane),
                )),
                Some(lane) if !lane.is_entry => out.push(violation(
                    ViolationCode::NotEntryLane,
                    format!("{} is fed by an upstream intersection", entry.entry_lane),
                )),
                Some(_) => {}
            }
            if !seen.insert(entry.entry_lane) {
                out.push(violation(
                    ViolationCode::DuplicateEntryLane,
                    format!("{} appears more than once", entry.entry_lane),
                ));
            }
        }
        if let Some(vehicles) = &self.vehicles {
            if !vehicles.windows(2).all(|w| w[0].entry_time <= w[1].entry_time) {
                out.push(violation(
                    ViolationCode::VehiclesUnsorted,
                    "explicit vehicles must be sorted by entry_time",
                ));
            }
            for (i, v) in vehicles.iter().enumerate() {
                out.extend(validate_route(&network, i, &v.route));
            }
        }
        if let Some(d) = &self.dynamics {
            if let Some(h) = d.saturation_headway {
                if !(h > 0.0) {
                    out.push(violation(ViolationCode::BadDynamics, "saturation_headway must be positive"));
                }
            }
            if d.segment_traverse_seconds == Some(0) {
                out.push(violation(ViolationCode::BadDynamics, "segment_traverse_seconds must be positive"));
            }
            if d.capacity_per_segment == Some(0) {
                out.push(violation(ViolationCode::BadDynamics, "capacity_per_segment must be positive"));
            }
        }
        out
    }

    /// Materialize the scenario: network topology, the simulation config
    /// with dynamics overrides applied, and the arrival demand.
    pub fn build(&self, base: &SimConfig) -> Result<(RoadNetwork, SimConfig, Demand), ScenarioError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(ScenarioError::Invalid(violations));
        }
        let mut config = base.clone();
        if let Some(d) = &self.dynamics {
            if let Some(h) = d.saturation_headway {
                config.saturation_headway = h;
            }
            if let Some(t) = d.segment_traverse_seconds {
                config.segment_traverse_seconds = t;
            }
            if let Some(c) = d.capacity_per_segment {
                config.capacity_per_segment = c;
            }
        }
        let network = RoadNetwork::grid(self.grid.rows, self.grid.cols, config.capacity_per_segment);
        let demand = Demand {
            arrival_rates: self.demand.iter().map(|d| (d.entry_lane, d.lambda)).collect(),
            scheduled: self
                .vehicles
                .iter()
                .flatten()
                .map(|v| ScheduledVehicle {
                    entry_time: v.entry_time,
                    entry_lane: v.route.entry_lane,
                    exits: v.route.exits.clone(),
                })
                .collect(),
        };
        Ok((network, config, demand))
    }

    pub fn intersection_count(&self) -> usize {
        self.grid.rows * self.grid.cols
    }
}

fn validate_route(network: &RoadNetwork, index: usize, route: &RouteSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let lane = match network.lane(route.entry_lane) {
        Some(l) => l,
        None => {
            out.push(violation(
                ViolationCode::RouteDangling,
                format!("vehicle {index}: entry lane {} outside the grid", route.entry_lane),
            ));
            return out;
        }
    };
    if !lane.is_entry {
        out.push(violation(
            ViolationCode::NotEntryLane,
            format!("vehicle {index}: {} is not an entry lane", route.entry_lane),
        ));
    }
    if route.exits.is_empty() {
        out.push(violation(ViolationCode::RouteEmpty, format!("vehicle {index}: no exits")));
        return out;
    }
    let first = route.entry_lane.approach.exit_heading(route.entry_lane.movement);
    if route.exits[0] != first {
        out.push(violation(
            ViolationCode::RouteMovementMismatch,
            format!(
                "vehicle {index}: first exit {} contradicts entry lane {}",
                route.exits[0], route.entry_lane
            ),
        ));
        return out;
    }
    let mut current = route.entry_lane.intersection;
    for (i, &heading) in route.exits.iter().enumerate() {
        if i > 0 && route.exits[i - 1].opposite().movement_toward(heading).is_none() {
            out.push(violation(
                ViolationCode::RouteUturn,
                format!("vehicle {index}: U-turn at intersection {current}"),
            ));
            return out;
        }
        match network.neighbor_of(current, heading) {
            Some(next) if i + 1 == route.exits.len() => {
                out.push(violation(
                    ViolationCode::RouteDangling,
                    format!(
                        "vehicle {index}: route ends at intersection {current} but continues to {next}"
                    ),
                ));
                return out;
            }
            Some(next) => current = next,
            None if i + 1 != route.exits.len() => {
                out.push(violation(
                    ViolationCode::RouteDangling,
                    format!("vehicle {index}: route leaves the grid at intersection {current}"),
                ));
                return out;
            }
            None => {}
        }
    }
    out
}
