//! Discrete-time queue microsimulation.
//!
//! A run advances in 1 s micro-ticks grouped into decision windows of
//! `tau_seconds`. Within each tick: arrivals spawn on entry lanes, green
//! lanes (and all right-turn lanes) discharge their queues at the saturation
//! rate, approaching vehicles advance one segment per
//! `segment_traverse_seconds`, and queued vehicles accumulate waiting time.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use thiserror::Error;

use super::network::{DownstreamLink, RoadNetwork, SegmentVehicle};
use super::types::{Dir, LaneId, Movement, ObservationState, Phase, SimConfig, VehicleId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown intersection {0}")]
    UnknownIntersection(usize),
    #[error("expected {expected} actions, got {got}")]
    ActionCountMismatch { expected: usize, got: usize },
    #[error("simulation already ran for the configured duration")]
    PastDuration,
    #[error("topology error: {0}")]
    Topology(String),
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
}

/// Arrival demand: Poisson rates per entry lane plus optional scheduled
/// vehicles with explicit routes.
#[derive(Debug, Clone, Default)]
pub struct Demand {
    /// (entry lane, lambda in vehicles per second).
    pub arrival_rates: Vec<(LaneId, f64)>,
    /// Must be sorted by `entry_time`.
    pub scheduled: Vec<ScheduledVehicle>,
}

#[derive(Debug, Clone)]
pub struct ScheduledVehicle {
    pub entry_time: u32,
    pub entry_lane: LaneId,
    /// Exit heading at each intersection visited, starting with the entry
    /// intersection. `exits[0]` must match the entry lane's movement.
    pub exits: Vec<Dir>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub entry_lane: LaneId,
    pub exits: Vec<Dir>,
    /// Index into `exits` of the intersection the vehicle is currently at.
    pub hop: usize,
    /// Second at which the vehicle was admitted onto the network.
    pub entry_time: u32,
    pub exit_time: Option<u32>,
    /// Total seconds spent in segment-1 queues.
    pub waiting_seconds: u32,
}

impl Vehicle {
    pub fn travel_time(&self) -> Option<u32> {
        self.exit_time.map(|t| t - self.entry_time)
    }
}

/// Audit log entry. The full log of a run is deterministic given
/// (network, config, demand, action sequence).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Event {
    PhaseSet { time: u32, intersection: usize, phase: Phase },
    Created { time: u32, vehicle: VehicleId, lane: LaneId },
    Entered { time: u32, vehicle: VehicleId, lane: LaneId },
    JoinedQueue { time: u32, vehicle: VehicleId, lane: LaneId },
    LeftQueue { time: u32, vehicle: VehicleId, lane: LaneId },
    Moved { time: u32, vehicle: VehicleId, from: LaneId, to: LaneId },
    Exited { time: u32, vehicle: VehicleId },
}

/// Vehicle population counters. Conservation:
/// `created == entered + backlog` and `entered == exited + on_network`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub created: u64,
    pub entered: u64,
    pub exited: u64,
    pub on_network: u64,
    pub backlog: u64,
}

/// Everything the harness needs after one decision window.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<ObservationState>,
    /// Queue length per intersection at the end of the window (Q_i).
    pub queues: Vec<u32>,
    /// Waiting seconds accrued per intersection during the window (W_i).
    pub window_waiting: Vec<u32>,
    /// Vehicles that exited the network during the window.
    pub exited: Vec<Vehicle>,
}

/// Where to place a fixture vehicle; see [`Simulation::place_vehicle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Queued,
    Segment2,
    Segment3,
}

pub struct Simulation {
    network: RoadNetwork,
    config: SimConfig,
    demand: Demand,
    clock: u32,
    rng: ChaCha8Rng,
    vehicles: HashMap<VehicleId, Vehicle>,
    next_id: u64,
    /// Off-network holding area per entry lane, parallel to `network.entry_lanes`.
    backlog: Vec<VecDeque<VehicleId>>,
    scheduled_cursor: usize,
    events: Vec<Event>,
    created: u64,
    entered: u64,
    exited: u64,
    window_waiting: Vec<u32>,
    window_exited: Vec<Vehicle>,
}

impl Simulation {
    /// Reset the environment: build it at clock 0 with no vehicles, all
    /// phases at phase 0 and the RNG seeded from `config.seed`.
    pub fn new(network: RoadNetwork, config: SimConfig, demand: Demand) -> Result<Self, SimError> {
        config.validate().map_err(SimError::InvalidConfig)?;
        for (lane, lambda) in &demand.arrival_rates {
            if !lambda.is_finite() || *lambda < 0.0 {
                return Err(SimError::InvalidDemand(format!("negative arrival rate on {lane}")));
            }
            let l = network
                .lane(*lane)
                .ok_or_else(|| SimError::InvalidDemand(format!("unknown lane {lane}")))?;
            if !l.is_entry {
                return Err(SimError::InvalidDemand(format!("{lane} is not an entry lane")));
            }
        }
        if !demand.scheduled.windows(2).all(|w| w[0].entry_time <= w[1].entry_time) {
            return Err(SimError::InvalidDemand("scheduled vehicles not sorted by entry_time".into()));
        }
        for v in &demand.scheduled {
            validate_route(&network, v)?;
        }
        let k = network.intersection_count();
        let backlog = vec![VecDeque::new(); network.entry_lanes.len()];
        let mut sim = Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            network,
            config,
            demand,
            clock: 0,
            vehicles: HashMap::new(),
            next_id: 0,
            backlog,
            scheduled_cursor: 0,
            events: Vec::new(),
            created: 0,
            entered: 0,
            exited: 0,
            window_waiting: vec![0; k],
            window_exited: Vec::new(),
        };
        sim.reset_network_state();
        Ok(sim)
    }

    /// Return to the initial state without rebuilding topology or demand.
    pub fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.clock = 0;
        self.vehicles.clear();
        self.next_id = 0;
        for b in &mut self.backlog {
            b.clear();
        }
        self.scheduled_cursor = 0;
        self.events.clear();
        self.created = 0;
        self.entered = 0;
        self.exited = 0;
        self.window_waiting.iter_mut().for_each(|w| *w = 0);
        self.window_exited.clear();
        self.reset_network_state();
    }

    fn reset_network_state(&mut self) {
        for i in &mut self.network.intersections {
            i.current_phase = Phase::EastWestLeft;
            i.phase_elapsed = 0;
            for lane in &mut i.lanes {
                lane.segment3.clear();
                lane.segment2.clear();
                lane.queue.clear();
                lane.discharge_credit = 0.0;
            }
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.network
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.get(&id)
    }

    pub fn intersection_count(&self) -> usize {
        self.network.intersection_count()
    }

    pub fn counters(&self) -> Counters {
        let on_network: usize =
            self.network.intersections.iter().flat_map(|i| &i.lanes).map(|l| l.vehicle_count()).sum();
        let backlog: usize = self.backlog.iter().map(|b| b.len()).sum();
        Counters {
            created: self.created,
            entered: self.entered,
            exited: self.exited,
            on_network: on_network as u64,
            backlog: backlog as u64,
        }
    }

    /// Verify vehicle conservation from the live state.
    pub fn check_conservation(&self) -> Result<(), String> {
        let c = self.counters();
        if c.created != c.exited + c.on_network + c.backlog {
            return Err(format!(
                "conservation violated at t={}: created={} exited={} on_network={} backlog={}",
                self.clock, c.created, c.exited, c.on_network, c.backlog
            ));
        }
        Ok(())
    }

    pub fn observe(&self, k: usize) -> Result<ObservationState, SimError> {
        let i = self.network.intersections.get(k).ok_or(SimError::UnknownIntersection(k))?;
        let mut queued = [0u32; 8];
        let mut approaching = [[0u32; 3]; 8];
        for (slot, (approach, movement)) in super::types::GOVERNED_LANES.iter().enumerate() {
            let lane = i.lane(*approach, *movement);
            queued[slot] = lane.queue.len() as u32;
            approaching[slot] = [0, lane.segment2.len() as u32, lane.segment3.len() as u32];
        }
        Ok(ObservationState { intersection: k, phase: i.current_phase, queued, approaching })
    }

    pub fn observe_all(&self) -> Vec<ObservationState> {
        (0..self.intersection_count()).map(|k| self.observe(k).unwrap()).collect()
    }

    /// Pressure of `phase` at intersection `k`: over the phase's two
    /// governed lanes, incoming queue length minus the queue length of the
    /// canonical downstream receiving lane (0 for network exits).
    pub fn pressure(&self, k: usize, phase: Phase) -> Result<i64, SimError> {
        let i = self.network.intersections.get(k).ok_or(SimError::UnknownIntersection(k))?;
        let mut p = 0i64;
        for (approach, movement) in phase.governed_lanes() {
            let lane = i.lane(approach, movement);
            p += lane.queue.len() as i64 - self.network.downstream_queue_len(lane) as i64;
        }
        Ok(p)
    }

    pub fn pressures(&self, k: usize) -> Result<[i64; 4], SimError> {
        let mut out = [0i64; 4];
        for (idx, phase) in super::types::PHASES.iter().enumerate() {
            out[idx] = self.pressure(k, *phase)?;
        }
        Ok(out)
    }

    pub fn pressures_all(&self) -> Vec<[i64; 4]> {
        (0..self.intersection_count()).map(|k| self.pressures(k).unwrap()).collect()
    }

    /// Apply one action per intersection and run the decision window of
    /// `tau_seconds` micro-ticks.
    pub fn step(&mut self, actions: &[Phase]) -> Result<StepOutcome, SimError> {
        let k = self.intersection_count();
        if actions.len() != k {
            return Err(SimError::ActionCountMismatch { expected: k, got: actions.len() });
        }
        if self.clock >= self.config.duration_seconds {
            return Err(SimError::PastDuration);
        }
        self.window_waiting.iter_mut().for_each(|w| *w = 0);
        self.window_exited.clear();
        for (idx, &phase) in actions.iter().enumerate() {
            let i = &mut self.network.intersections[idx];
            if i.current_phase != phase {
                i.current_phase = phase;
                i.phase_elapsed = 0;
                // A phase change forfeits unused discharge credit.
                for lane in &mut i.lanes {
                    if lane.id.movement != Movement::Right {
                        lane.discharge_credit = 0.0;
                    }
                }
            }
            self.events.push(Event::PhaseSet { time: self.clock, intersection: idx, phase });
        }
        let ticks = self.config.tau_seconds / self.config.tick_seconds;
        for _ in 0..ticks {
            self.tick()?;
        }
        let queues = (0..k)
            .map(|idx| {
                self.network.intersections[idx]
                    .lanes
                    .iter()
                    .map(|l| l.queue.len() as u32)
                    .sum::<u32>()
            })
            .collect();
        Ok(StepOutcome {
            observations: self.observe_all(),
            queues,
            window_waiting: self.window_waiting.clone(),
            exited: std::mem::take(&mut self.window_exited),
        })
    }

    fn tick(&mut self) -> Result<(), SimError> {
        self.spawn_arrivals();
        self.discharge()?;
        self.advance();
        self.accumulate_waiting();
        self.clock += self.config.tick_seconds;
        for i in &mut self.network.intersections {
            i.phase_elapsed += self.config.tick_seconds;
        }
        debug_assert!(self.check_conservation().is_ok());
        Ok(())
    }

    /// Spawn scheduled and Poisson arrivals into per-lane backlogs, then
    /// admit backlogged vehicles into segment 3 while it has room.
    fn spawn_arrivals(&mut self) {
        // Scheduled vehicles due this tick.
        while self.scheduled_cursor < self.demand.scheduled.len()
            && self.demand.scheduled[self.scheduled_cursor].entry_time <= self.clock
        {
            let sv = self.demand.scheduled[self.scheduled_cursor].clone();
            self.scheduled_cursor += 1;
            let id = self.create_vehicle(sv.entry_lane, sv.exits);
            let slot = self.entry_slot(sv.entry_lane);
            self.backlog[slot].push_back(id);
        }
        // Poisson arrivals.
        for i in 0..self.demand.arrival_rates.len() {
            let (lane, lambda) = self.demand.arrival_rates[i];
            let mean = lambda * self.config.tick_seconds as f64;
            if mean <= 0.0 {
                continue;
            }
            let n = Poisson::new(mean).expect("validated rate").sample(&mut self.rng) as u64;
            for _ in 0..n {
                let exits = self.sample_route(lane);
                let id = self.create_vehicle(lane, exits);
                let slot = self.entry_slot(lane);
                self.backlog[slot].push_back(id);
            }
        }
        // Admission.
        for slot in 0..self.network.entry_lanes.len() {
            let lane_id = self.network.entry_lanes[slot];
            loop {
                let lane = self.network.lane(lane_id).unwrap();
                if lane.segment3.len() >= lane.capacity_per_segment {
                    break;
                }
                let Some(id) = self.backlog[slot].pop_front() else { break };
                let lane = self.network.lane_mut(lane_id).unwrap();
                lane.segment3.push_back(SegmentVehicle { id, seconds_in_segment: 0 });
                let v = self.vehicles.get_mut(&id).unwrap();
                v.entry_time = self.clock;
                self.entered += 1;
                self.events.push(Event::Entered { time: self.clock, vehicle: id, lane: lane_id });
            }
        }
    }

    fn entry_slot(&self, lane: LaneId) -> usize {
        self.network
            .entry_lanes
            .iter()
            .position(|&l| l == lane)
            .expect("entry lane validated at construction")
    }

    fn create_vehicle(&mut self, entry_lane: LaneId, exits: Vec<Dir>) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        self.created += 1;
        self.vehicles.insert(
            id,
            Vehicle {
                id,
                entry_lane,
                exits,
                hop: 0,
                entry_time: self.clock,
                exit_time: None,
                waiting_seconds: 0,
            },
        );
        self.events.push(Event::Created { time: self.clock, vehicle: id, lane: entry_lane });
        id
    }

    /// Sample a route starting at `entry_lane`: the first exit heading is
    /// forced by the lane's movement, later intersections go straight with
    /// probability 0.9 and turn (left or right, equally) otherwise.
    fn sample_route(&mut self, entry_lane: LaneId) -> Vec<Dir> {
        let mut exits = vec![entry_lane.approach.exit_heading(entry_lane.movement)];
        let mut current = entry_lane.intersection;
        loop {
            let heading = *exits.last().unwrap();
            let Some(next) = self.network.neighbor_of(current, heading) else { break };
            let approach = heading.opposite();
            let movement = if exits.len() >= 32 {
                Movement::Through
            } else {
                let u: f64 = self.rng.gen();
                if u < 0.9 {
                    Movement::Through
                } else if u < 0.95 {
                    Movement::Left
                } else {
                    Movement::Right
                }
            };
            exits.push(approach.exit_heading(movement));
            current = next;
        }
        exits
    }

    /// Discharge the queues of green lanes (and all right-turn lanes) at one
    /// vehicle per `saturation_headway` seconds per lane.
    fn discharge(&mut self) -> Result<(), SimError> {
        let per_tick = self.config.tick_seconds as f64 / self.config.saturation_headway;
        let cap = per_tick.max(1.0);
        for k in 0..self.intersection_count() {
            let phase = self.network.intersections[k].current_phase;
            for slot in 0..12 {
                let lane = &mut self.network.intersections[k].lanes[slot];
                let green = lane.id.movement == Movement::Right
                    || phase.governs(lane.id.approach, lane.id.movement);
                if !green {
                    lane.discharge_credit = 0.0;
                    continue;
                }
                lane.discharge_credit = (lane.discharge_credit + per_tick).min(cap);
                while self.network.intersections[k].lanes[slot].discharge_credit >= 1.0 {
                    let lane = &self.network.intersections[k].lanes[slot];
                    let Some(&front) = lane.queue.front() else { break };
                    let lane_id = lane.id;
                    let downstream = lane.downstream;
                    match downstream {
                        DownstreamLink::NetworkExit => {
                            self.network.intersections[k].lanes[slot].queue.pop_front();
                            self.network.intersections[k].lanes[slot].discharge_credit -= 1.0;
                            let v = self.vehicles.get_mut(&front).unwrap();
                            v.exit_time = Some(self.clock);
                            self.exited += 1;
                            self.events.push(Event::LeftQueue {
                                time: self.clock,
                                vehicle: front,
                                lane: lane_id,
                            });
                            self.events.push(Event::Exited { time: self.clock, vehicle: front });
                            self.window_exited.push(self.vehicles[&front].clone());
                        }
                        DownstreamLink::ToIntersection { intersection, approach } => {
                            let v = &self.vehicles[&front];
                            let next_heading = *v.exits.get(v.hop + 1).ok_or_else(|| {
                                SimError::Topology(format!(
                                    "vehicle {front} route ends at {lane_id} but the lane \
                                     continues to intersection {intersection}"
                                ))
                            })?;
                            let movement =
                                approach.movement_toward(next_heading).ok_or_else(|| {
                                    SimError::Topology(format!(
                                        "vehicle {front} route makes a U-turn at intersection \
                                         {intersection}"
                                    ))
                                })?;
                            let target_id = LaneId::new(intersection, approach, movement);
                            let target = self.network.lane(target_id).unwrap();
                            if target.segment3.len() >= target.capacity_per_segment {
                                // Head of queue is blocked downstream; the lane
                                // cannot discharge further this tick.
                                break;
                            }
                            self.network.intersections[k].lanes[slot].queue.pop_front();
                            self.network.intersections[k].lanes[slot].discharge_credit -= 1.0;
                            self.network
                                .lane_mut(target_id)
                                .unwrap()
                                .segment3
                                .push_back(SegmentVehicle { id: front, seconds_in_segment: 0 });
                            let v = self.vehicles.get_mut(&front).unwrap();
                            v.hop += 1;
                            self.events.push(Event::LeftQueue {
                                time: self.clock,
                                vehicle: front,
                                lane: lane_id,
                            });
                            self.events.push(Event::Moved {
                                time: self.clock,
                                vehicle: front,
                                from: lane_id,
                                to: target_id,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Advance approaching vehicles one segment per
    /// `segment_traverse_seconds`, FIFO within a segment, no overtaking.
    fn advance(&mut self) {
        let tick = self.config.tick_seconds;
        let traverse = self.config.segment_traverse_seconds;
        let mut joined: Vec<(VehicleId, LaneId)> = Vec::new();
        for i in &mut self.network.intersections {
            for lane in &mut i.lanes {
                for sv in lane.segment2.iter_mut().chain(lane.segment3.iter_mut()) {
                    sv.seconds_in_segment += tick;
                }
                // Segment 2 -> queue.
                while let Some(front) = lane.segment2.front() {
                    if front.seconds_in_segment < traverse
                        || lane.queue.len() >= lane.capacity_per_segment
                    {
                        break;
                    }
                    let sv = lane.segment2.pop_front().unwrap();
                    lane.queue.push_back(sv.id);
                    joined.push((sv.id, lane.id));
                }
                // Segment 3 -> segment 2.
                while let Some(front) = lane.segment3.front() {
                    if front.seconds_in_segment < traverse
                        || lane.segment2.len() >= lane.capacity_per_segment
                    {
                        break;
                    }
                    let mut sv = lane.segment3.pop_front().unwrap();
                    sv.seconds_in_segment = 0;
                    lane.segment2.push_back(sv);
                }
            }
        }
        for (vehicle, lane) in joined {
            self.events.push(Event::JoinedQueue { time: self.clock, vehicle, lane });
        }
    }

    fn accumulate_waiting(&mut self) {
        let tick = self.config.tick_seconds;
        for k in 0..self.intersection_count() {
            let mut ids: Vec<VehicleId> = Vec::new();
            for lane in &self.network.intersections[k].lanes {
                ids.extend(lane.queue.iter().copied());
            }
            self.window_waiting[k] += tick * ids.len() as u32;
            for id in ids {
                self.vehicles.get_mut(&id).unwrap().waiting_seconds += tick;
            }
        }
    }

    /// Place a fixture vehicle directly on a lane. The route goes straight
    /// through every downstream intersection. Intended for tests and
    /// hand-constructed scenarios.
    pub fn place_vehicle(&mut self, lane_id: LaneId, placement: Placement) -> Result<VehicleId, SimError> {
        let lane = self
            .network
            .lane(lane_id)
            .ok_or_else(|| SimError::Topology(format!("unknown lane {lane_id}")))?;
        let _ = lane;
        let exits = self.straight_route(lane_id);
        let id = self.create_vehicle(lane_id, exits);
        let lane = self.network.lane_mut(lane_id).unwrap();
        match placement {
            Placement::Queued => {
                lane.queue.push_back(id);
            }
            Placement::Segment2 => {
                lane.segment2.push_back(SegmentVehicle { id, seconds_in_segment: 0 });
            }
            Placement::Segment3 => {
                lane.segment3.push_back(SegmentVehicle { id, seconds_in_segment: 0 });
            }
        }
        self.entered += 1;
        self.events.push(Event::Entered { time: self.clock, vehicle: id, lane: lane_id });
        if placement == Placement::Queued {
            self.events.push(Event::JoinedQueue { time: self.clock, vehicle: id, lane: lane_id });
        }
        Ok(id)
    }

    /// Route that performs the lane's own movement, then goes straight
    /// through until it leaves the grid.
    fn straight_route(&self, lane_id: LaneId) -> Vec<Dir> {
        let mut exits = vec![lane_id.approach.exit_heading(lane_id.movement)];
        let mut current = lane_id.intersection;
        while let Some(next) = self.network.neighbor_of(current, *exits.last().unwrap()) {
            let approach = exits.last().unwrap().opposite();
            exits.push(approach.exit_heading(Movement::Through));
            current = next;
        }
        exits
    }
}

fn validate_route(network: &RoadNetwork, v: &ScheduledVehicle) -> Result<(), SimError> {
    let lane = network
        .lane(v.entry_lane)
        .ok_or_else(|| SimError::InvalidDemand(format!("unknown entry lane {}", v.entry_lane)))?;
    if !lane.is_entry {
        return Err(SimError::InvalidDemand(format!("{} is not an entry lane", v.entry_lane)));
    }
    if v.exits.is_empty() {
        return Err(SimError::InvalidDemand("empty route".into()));
    }
    if v.exits[0] != v.entry_lane.approach.exit_heading(v.entry_lane.movement) {
        return Err(SimError::InvalidDemand(format!(
            "route's first exit {} does not match entry lane {}",
            v.exits[0], v.entry_lane
        )));
    }
    let mut current = v.entry_lane.intersection;
    for (i, &heading) in v.exits.iter().enumerate() {
        if i > 0 {
            let approach = v.exits[i - 1].opposite();
            if approach.movement_toward(heading).is_none() {
                return Err(SimError::InvalidDemand(format!(
                    "route makes a U-turn at intersection {current}"
                )));
            }
        }
        match network.neighbor_of(current, heading) {
            Some(next) => {
                if i + 1 == v.exits.len() {
                    return Err(SimError::InvalidDemand(format!(
                        "route ends at intersection {current} but heading {heading} continues \
                         to intersection {next}"
                    )));
                }
                current = next;
            }
            None => {
                if i + 1 != v.exits.len() {
                    return Err(SimError::InvalidDemand(format!(
                        "route continues past the network boundary at intersection {current}"
                    )));
                }
            }
        }
    }
    Ok(())
}
