//! Core domain types shared across the simulator and the controllers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four mutually exclusive signal phases. Each phase grants
/// right-of-way to exactly two signal-governed lanes; right turns are
/// always permitted and belong to no phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    /// Left-turn from east and west.
    #[serde(rename = "ELWL")]
    EastWestLeft,
    /// Left-turn from north and south.
    #[serde(rename = "NLSL")]
    NorthSouthLeft,
    /// Through traffic from east and west.
    #[serde(rename = "ETWT")]
    EastWestThrough,
    /// Through traffic from north and south.
    #[serde(rename = "NTST")]
    NorthSouthThrough,
}

pub const PHASES: [Phase; 4] = [
    Phase::EastWestLeft,
    Phase::NorthSouthLeft,
    Phase::EastWestThrough,
    Phase::NorthSouthThrough,
];

impl Phase {
    pub fn index(self) -> usize {
        match self {
            Phase::EastWestLeft => 0,
            Phase::NorthSouthLeft => 1,
            Phase::EastWestThrough => 2,
            Phase::NorthSouthThrough => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Phase> {
        PHASES.get(index).copied()
    }

    /// Stable mnemonic code used by the CLI, the LLM prompt protocol and the
    /// `<signal>` tag vocabulary.
    pub fn code(self) -> &'static str {
        match self {
            Phase::EastWestLeft => "ELWL",
            Phase::NorthSouthLeft => "NLSL",
            Phase::EastWestThrough => "ETWT",
            Phase::NorthSouthThrough => "NTST",
        }
    }

    /// Case-insensitive parse of a phase code.
    pub fn from_code(code: &str) -> Option<Phase> {
        match code.trim().to_ascii_uppercase().as_str() {
            "ELWL" => Some(Phase::EastWestLeft),
            "NLSL" => Some(Phase::NorthSouthLeft),
            "ETWT" => Some(Phase::EastWestThrough),
            "NTST" => Some(Phase::NorthSouthThrough),
            _ => None,
        }
    }

    /// The two signal-governed lanes this phase relieves.
    pub fn governed_lanes(self) -> [(Dir, Movement); 2] {
        match self {
            Phase::EastWestLeft => [(Dir::East, Movement::Left), (Dir::West, Movement::Left)],
            Phase::NorthSouthLeft => [(Dir::North, Movement::Left), (Dir::South, Movement::Left)],
            Phase::EastWestThrough => {
                [(Dir::East, Movement::Through), (Dir::West, Movement::Through)]
            }
            Phase::NorthSouthThrough => {
                [(Dir::North, Movement::Through), (Dir::South, Movement::Through)]
            }
        }
    }

    pub fn governs(self, approach: Dir, movement: Movement) -> bool {
        self.governed_lanes().contains(&(approach, movement))
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Compass direction. Used both for the side a lane approaches from
/// ("approach N" carries southbound traffic) and for the heading a vehicle
/// exits toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    #[serde(rename = "N")]
    North,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "W")]
    West,
}

pub const DIRS: [Dir; 4] = [Dir::North, Dir::South, Dir::East, Dir::West];

impl Dir {
    pub fn opposite(self) -> Dir {
        match self {
            Dir::North => Dir::South,
            Dir::South => Dir::North,
            Dir::East => Dir::West,
            Dir::West => Dir::East,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Dir::North => "N",
            Dir::South => "S",
            Dir::East => "E",
            Dir::West => "W",
        }
    }

    pub fn from_letter(s: &str) -> Option<Dir> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" => Some(Dir::North),
            "S" => Some(Dir::South),
            "E" => Some(Dir::East),
            "W" => Some(Dir::West),
            _ => None,
        }
    }

    /// Heading a vehicle leaves toward when it arrives on approach `self`
    /// and performs `movement`. Approach N traffic heads south, so its left
    /// turn exits east, its right turn west.
    pub fn exit_heading(self, movement: Movement) -> Dir {
        match (self, movement) {
            (Dir::North, Movement::Through) => Dir::South,
            (Dir::North, Movement::Left) => Dir::East,
            (Dir::North, Movement::Right) => Dir::West,
            (Dir::South, Movement::Through) => Dir::North,
            (Dir::South, Movement::Left) => Dir::West,
            (Dir::South, Movement::Right) => Dir::East,
            (Dir::East, Movement::Through) => Dir::West,
            (Dir::East, Movement::Left) => Dir::South,
            (Dir::East, Movement::Right) => Dir::North,
            (Dir::West, Movement::Through) => Dir::East,
            (Dir::West, Movement::Left) => Dir::North,
            (Dir::West, Movement::Right) => Dir::South,
        }
    }

    /// Inverse of [`Dir::exit_heading`]: the movement that takes a vehicle
    /// arriving on approach `self` out toward `heading`. `None` for U-turns.
    pub fn movement_toward(self, heading: Dir) -> Option<Movement> {
        [Movement::Through, Movement::Left, Movement::Right]
            .into_iter()
            .find(|&m| self.exit_heading(m) == heading)
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Movement {
    #[serde(rename = "T")]
    Through,
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

pub const MOVEMENTS: [Movement; 3] = [Movement::Through, Movement::Left, Movement::Right];

impl Movement {
    pub fn letter(self) -> &'static str {
        match self {
            Movement::Through => "T",
            Movement::Left => "L",
            Movement::Right => "R",
        }
    }

    pub fn from_letter(s: &str) -> Option<Movement> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T" => Some(Movement::Through),
            "L" => Some(Movement::Left),
            "R" => Some(Movement::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// Identifies one incoming lane of one intersection, e.g. `3:N:T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneId {
    pub intersection: usize,
    pub approach: Dir,
    pub movement: Movement,
}

impl LaneId {
    pub fn new(intersection: usize, approach: Dir, movement: Movement) -> Self {
        LaneId { intersection, approach, movement }
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.intersection, self.approach, self.movement)
    }
}

impl FromStr for LaneId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let bad = || format!("invalid lane id {s:?}, expected <intersection>:<N|S|E|W>:<T|L|R>");
        let intersection = parts
            .next()
            .and_then(|p| p.trim().parse::<usize>().ok())
            .ok_or_else(bad)?;
        let approach = parts.next().and_then(Dir::from_letter).ok_or_else(bad)?;
        let movement = parts.next().and_then(Movement::from_letter).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(LaneId { intersection, approach, movement })
    }
}

impl Serialize for LaneId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LaneId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// The eight signal-governed lanes of an intersection, in the fixed order
/// used by observations, state encodings and the prompt protocol.
pub const GOVERNED_LANES: [(Dir, Movement); 8] = [
    (Dir::North, Movement::Through),
    (Dir::North, Movement::Left),
    (Dir::South, Movement::Through),
    (Dir::South, Movement::Left),
    (Dir::East, Movement::Through),
    (Dir::East, Movement::Left),
    (Dir::West, Movement::Through),
    (Dir::West, Movement::Left),
];

/// Index of a governed lane in [`GOVERNED_LANES`], or `None` for right turns.
pub fn governed_lane_index(approach: Dir, movement: Movement) -> Option<usize> {
    GOVERNED_LANES.iter().position(|&(a, m)| a == approach && m == movement)
}

/// Per-intersection snapshot handed to policies: the current phase plus
/// vehicle counts on the eight governed lanes, split into the segment-1
/// queue and the approaching vehicles per segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationState {
    pub intersection: usize,
    pub phase: Phase,
    /// Queued (segment 1) vehicles per governed lane, in [`GOVERNED_LANES`] order.
    pub queued: [u32; 8],
    /// Approaching vehicles per governed lane per segment, `[seg1, seg2, seg3]`.
    pub approaching: [[u32; 3]; 8],
}

impl ObservationState {
    /// Total vehicles on governed lane `i` (queued + approaching).
    pub fn lane_total(&self, i: usize) -> u32 {
        self.queued[i] + self.approaching[i].iter().sum::<u32>()
    }

    pub fn total_queued(&self) -> u32 {
        self.queued.iter().sum()
    }
}

/// Simulation dynamics parameters. All times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tick_seconds: u32,
    /// Minimum action time: how long each chosen phase is held.
    pub tau_seconds: u32,
    pub duration_seconds: u32,
    /// Seconds per discharged vehicle per green lane.
    pub saturation_headway: f64,
    /// Free-flow seconds to traverse one segment.
    pub segment_traverse_seconds: u32,
    pub capacity_per_segment: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_seconds: 1,
            tau_seconds: 30,
            duration_seconds: 3600,
            saturation_headway: 2.0,
            segment_traverse_seconds: 10,
            capacity_per_segment: 40,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.tick_seconds == 0 {
            return Err("tick_seconds must be positive".into());
        }
        if self.tau_seconds == 0 || self.tau_seconds % self.tick_seconds != 0 {
            return Err(format!(
                "tau_seconds ({}) must be a positive multiple of tick_seconds ({})",
                self.tau_seconds, self.tick_seconds
            ));
        }
        if self.duration_seconds == 0 || self.duration_seconds % self.tau_seconds != 0 {
            return Err(format!(
                "duration_seconds ({}) must be a positive multiple of tau_seconds ({})",
                self.duration_seconds, self.tau_seconds
            ));
        }
        if !(self.saturation_headway > 0.0) {
            return Err("saturation_headway must be positive".into());
        }
        if self.segment_traverse_seconds == 0 {
            return Err("segment_traverse_seconds must be positive".into());
        }
        if self.capacity_per_segment == 0 {
            return Err("capacity_per_segment must be positive".into());
        }
        Ok(())
    }

    /// Number of decision steps in a full run.
    pub fn decision_steps(&self) -> u32 {
        self.duration_seconds / self.tau_seconds
    }
}
