//! Static road network: a rows x cols grid of four-way intersections.
//!
//! Every intersection has twelve incoming lanes (four approaches, each with
//! a through, a left and a right lane). Lanes are split into three segments;
//! segment 1 is the stop-line queue. An approach is an entry point when no
//! neighboring intersection feeds it.

use std::collections::VecDeque;

use super::types::{Dir, LaneId, Movement, Phase, VehicleId, DIRS, MOVEMENTS};

/// Where vehicles discharged from a lane go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownstreamLink {
    /// Receiving intersection and approach. The canonical receiving lane
    /// (used by the pressure computation) is the through lane of that
    /// approach; the actual lane a vehicle joins depends on its route.
    ToIntersection { intersection: usize, approach: Dir },
    /// The lane's exit heading leaves the grid.
    NetworkExit,
}

/// A vehicle traversing segment 3 or 2 of a lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentVehicle {
    pub id: VehicleId,
    pub seconds_in_segment: u32,
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: LaneId,
    /// Farthest segment from the stop line; arrivals and upstream discharges enter here.
    pub segment3: VecDeque<SegmentVehicle>,
    pub segment2: VecDeque<SegmentVehicle>,
    /// Segment 1: the stop-line queue.
    pub queue: VecDeque<VehicleId>,
    pub capacity_per_segment: usize,
    pub downstream: DownstreamLink,
    /// True when no upstream intersection feeds this lane.
    pub is_entry: bool,
    /// Fractional discharge budget accumulated while green.
    pub discharge_credit: f64,
}

impl Lane {
    pub fn vehicle_count(&self) -> usize {
        self.segment3.len() + self.segment2.len() + self.queue.len()
    }

    /// Exit heading of traffic leaving this lane.
    pub fn exit_heading(&self) -> Dir {
        self.id.approach.exit_heading(self.id.movement)
    }
}

#[derive(Debug, Clone)]
pub struct Intersection {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    /// Twelve lanes indexed by [`lane_slot`].
    pub lanes: Vec<Lane>,
    pub current_phase: Phase,
    pub phase_elapsed: u32,
}

/// Fixed slot of a lane within an intersection's lane vector.
pub fn lane_slot(approach: Dir, movement: Movement) -> usize {
    let d = DIRS.iter().position(|&x| x == approach).unwrap();
    let m = MOVEMENTS.iter().position(|&x| x == movement).unwrap();
    d * 3 + m
}

impl Intersection {
    pub fn lane(&self, approach: Dir, movement: Movement) -> &Lane {
        &self.lanes[lane_slot(approach, movement)]
    }

    pub fn lane_mut(&mut self, approach: Dir, movement: Movement) -> &mut Lane {
        &mut self.lanes[lane_slot(approach, movement)]
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    pub rows: usize,
    pub cols: usize,
    pub intersections: Vec<Intersection>,
    /// All entry lanes in deterministic order (intersection id, then lane slot).
    pub entry_lanes: Vec<LaneId>,
}

impl RoadNetwork {
    /// Build a fully connected rows x cols grid.
    pub fn grid(rows: usize, cols: usize, capacity_per_segment: usize) -> RoadNetwork {
        assert!(rows >= 1 && cols >= 1, "grid must be at least 1x1");
        let mut intersections = Vec::with_capacity(rows * cols);
        let mut entry_lanes = Vec::new();
        for row in 0..rows {
            for col in 0..cols {
                let id = row * cols + col;
                let mut lanes = Vec::with_capacity(12);
                for approach in DIRS {
                    for movement in MOVEMENTS {
                        let lane_id = LaneId::new(id, approach, movement);
                        let heading = approach.exit_heading(movement);
                        let downstream = match neighbor(rows, cols, row, col, heading) {
                            Some(n) => DownstreamLink::ToIntersection {
                                intersection: n,
                                approach: heading.opposite(),
                            },
                            None => DownstreamLink::NetworkExit,
                        };
                        let is_entry = neighbor(rows, cols, row, col, approach).is_none();
                        if is_entry {
                            entry_lanes.push(lane_id);
                        }
                        lanes.push(Lane {
                            id: lane_id,
                            segment3: VecDeque::new(),
                            segment2: VecDeque::new(),
                            queue: VecDeque::new(),
                            capacity_per_segment,
                            downstream,
                            is_entry,
                            discharge_credit: 0.0,
                        });
                    }
                }
                intersections.push(Intersection {
                    id,
                    row,
                    col,
                    lanes,
                    current_phase: Phase::EastWestLeft,
                    phase_elapsed: 0,
                });
            }
        }
        RoadNetwork { rows, cols, intersections, entry_lanes }
    }

    pub fn intersection_count(&self) -> usize {
        self.intersections.len()
    }

    pub fn lane(&self, id: LaneId) -> Option<&Lane> {
        self.intersections
            .get(id.intersection)
            .map(|i| i.lane(id.approach, id.movement))
    }

    pub fn lane_mut(&mut self, id: LaneId) -> Option<&mut Lane> {
        self.intersections
            .get_mut(id.intersection)
            .map(|i| i.lane_mut(id.approach, id.movement))
    }

    /// Neighbor intersection in compass direction `dir` from intersection `id`.
    pub fn neighbor_of(&self, id: usize, dir: Dir) -> Option<usize> {
        let row = id / self.cols;
        let col = id % self.cols;
        neighbor(self.rows, self.cols, row, col, dir)
    }

    /// Queue length of the canonical receiving lane downstream of `lane`,
    /// or 0 when the lane exits the network.
    pub fn downstream_queue_len(&self, lane: &Lane) -> usize {
        match lane.downstream {
            DownstreamLink::NetworkExit => 0,
            DownstreamLink::ToIntersection { intersection, approach } => self.intersections
                [intersection]
                .lane(approach, Movement::Through)
                .queue
                .len(),
        }
    }
}

fn neighbor(rows: usize, cols: usize, row: usize, col: usize, dir: Dir) -> Option<usize> {
    let (r, c) = match dir {
        Dir::North => (row.checked_sub(1)?, col),
        Dir::South => (row + 1, col),
        Dir::East => (row, col + 1),
        Dir::West => (row, col.checked_sub(1)?),
    };
    if r < rows && c < cols {
        Some(r * cols + c)
    } else {
        None
    }
}
