//! Time-stepped simulation loop coupling vehicle dynamics, the broadcast MAC
//! and epidemic dissemination.
//!
//! Each [`Simulation::step`] runs a fixed sequence of phases:
//!
//! 1. warning beacon (every `beacon_interval`);
//! 2. MAC tick for every vehicle with a queued frame, then reception rolls
//!    for every in-range receiver of each frame on air;
//! 3. ledger updates, then one rebroadcast decision per reception;
//! 4. lane-change decisions from the pre-step snapshot;
//! 5. lane changes applied, accelerations computed on the resulting layout,
//!    all vehicles integrated together;
//! 6. exits and obstacle-passage flags;
//! 7. injection of queued arrivals;
//! 8. samples, gridlock and origin-congestion bookkeeping.
//!
//! Vehicles are kept sorted by position in each lane. Any overlap after an
//! update is reported as an error and never repaired.

mod config;
mod events;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{MessageOrigin, SimConfig};
pub use events::{Aux, Event, EventKind, EventLog, EVENT_COLUMNS};

use crate::dissemination::{
    should_rebroadcast, Direction, MessageLedger, MsgId, ReceptionContext, WarningMessage,
};
use crate::error::{DisseminationError, SimError};
use crate::radio::{mac_tick, medium_busy, receive_roll, MacState};
use crate::traffic::{
    accel_behind, base_lane_change, brute_force_lane_change, diff_incentive,
    effective_desired_velocity, integrate_kinematics, lane_change_is_safe, my_advantage,
    others_disadvantage, proportional_lane_change, DriverParams, Lane, LaneChangeVariant, Neighbor,
    Neighborhood, VehicleId, VehicleState,
};

/// Warning about the obstacle; the only message in a scenario.
pub const WARNING_ID: MsgId = MsgId(0);

/// Minimum number of upstream vehicles before a standstill counts as
/// gridlock.
pub const GRIDLOCK_MIN_VEHICLES: usize = 10;
/// Velocity below which a vehicle counts as stopped for gridlock, m/s.
pub const GRIDLOCK_VELOCITY: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub state: VehicleState,
    pub ledger: MessageLedger,
    pub mac: MacState,
    pub last_lane_change: f64,
}

impl Vehicle {
    fn rear(&self) -> f64 {
        self.state.position - self.state.length
    }
}

/// Poisson arrival clock whose rate is scaled during the warm-up period.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    rate: f64,
    warm_up: f64,
    warm_up_factor: f64,
    next: f64,
}

impl ArrivalProcess {
    pub const WARM_UP_FACTOR: f64 = 0.25;

    /// `load` in vehicles per hour.
    pub fn new<R: Rng + ?Sized>(load: f64, warm_up: f64, rng: &mut R) -> Self {
        let mut p = Self {
            rate: load / 3600.0,
            warm_up,
            warm_up_factor: Self::WARM_UP_FACTOR,
            next: 0.0,
        };
        p.next = p.following(0.0, rng);
        p
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        if t < self.warm_up {
            self.rate * self.warm_up_factor
        } else {
            self.rate
        }
    }

    /// Time of the next arrival after `t`, integrating the piecewise rate.
    fn following<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mass = -(1.0 - u).ln();
        if t < self.warm_up {
            let slow = self.rate * self.warm_up_factor;
            let candidate = t + mass / slow;
            if candidate <= self.warm_up {
                return candidate;
            }
            let left = mass - (self.warm_up - t) * slow;
            return self.warm_up + left / self.rate;
        }
        t + mass / self.rate
    }

    pub fn peek(&self) -> f64 {
        self.next
    }

    /// Pops the pending arrival time and schedules the one after it.
    pub fn pop<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let t = self.next;
        self.next = self.following(t, rng);
        t
    }
}

/// Tracks the mean velocity of vehicles near the road origin over fixed
/// time windows and remembers when it first drops below the threshold.
#[derive(Debug, Clone)]
pub struct OriginMonitor {
    window: f64,
    threshold: f64,
    span: f64,
    start: f64,
    sum: f64,
    count: u64,
    congested_at: Option<f64>,
}

impl OriginMonitor {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            window: cfg.origin_window,
            threshold: cfg.origin_velocity_threshold,
            span: cfg.origin_time_window,
            start: 0.0,
            sum: 0.0,
            count: 0,
            congested_at: None,
        }
    }

    /// Closes every window that ends at or before `time`.
    pub fn advance(&mut self, time: f64) {
        while time >= self.start + self.span - TIME_EPS {
            if self.congested_at.is_none()
                && self.count > 0
                && self.sum / (self.count as f64) < self.threshold
            {
                self.congested_at = Some(self.start + self.span);
            }
            self.start += self.span;
            self.sum = 0.0;
            self.count = 0;
        }
    }

    pub fn observe(&mut self, time: f64, position: f64, velocity: f64) {
        self.advance(time);
        if position <= self.window {
            self.sum += velocity;
            self.count += 1;
        }
    }

    /// End of the first window whose mean origin velocity fell below the
    /// threshold.
    pub fn congested_at(&self) -> Option<f64> {
        self.congested_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Slot {
    Empty,
    Obstacle,
    Vehicle(VehicleId),
}

#[derive(Debug, Clone, Copy)]
struct Adjacent {
    slot: Slot,
    gap: f64,
    velocity: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    id: VehicleId,
    from: Lane,
    position: f64,
    leader: Slot,
    follower: Slot,
}

#[derive(Debug, Clone, Copy)]
struct Transmission {
    sender: Option<VehicleId>,
    lane: Option<Lane>,
    position: f64,
    msg: WarningMessage,
}

#[derive(Debug, Clone, Copy)]
struct Reception {
    lane: usize,
    index: usize,
    tx: usize,
    distance: f64,
}

pub struct Simulation {
    cfg: SimConfig,
    params: DriverParams,
    tick: u64,
    now: f64,
    lanes: [Vec<Vehicle>; 2],
    queues: [u64; 2],
    arrivals_clock: ArrivalProcess,
    next_entry_lane: usize,
    generated: u64,
    arrivals: u64,
    exits: u64,
    next_id: u32,
    traffic_rng: ChaCha8Rng,
    comm_rng: ChaCha8Rng,
    last_tx: Vec<(Option<VehicleId>, f64)>,
    next_beacon: f64,
    gridlocked: bool,
    origin: OriginMonitor,
    log: EventLog,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        // Separate streams keep the traffic realisation identical whether
        // or not the radio draws any numbers.
        let mut traffic_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        traffic_rng.set_stream(1);
        let mut comm_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        comm_rng.set_stream(2);
        let arrivals_clock = ArrivalProcess::new(cfg.traffic_load, cfg.warm_up, &mut traffic_rng);
        let log = EventLog {
            header: crate::config::echo(&cfg),
            events: Vec::new(),
        };
        Ok(Self {
            params: cfg.driver_params(),
            origin: OriginMonitor::new(&cfg),
            cfg,
            tick: 0,
            now: 0.0,
            lanes: [Vec::new(), Vec::new()],
            queues: [0, 0],
            arrivals_clock,
            next_entry_lane: 0,
            generated: 0,
            arrivals: 0,
            exits: 0,
            next_id: 0,
            traffic_rng,
            comm_rng,
            last_tx: Vec::new(),
            next_beacon: 0.0,
            gridlocked: false,
            log,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn vehicles(&self, lane: Lane) -> &[Vehicle] {
        &self.lanes[lane.index()]
    }

    pub fn all_vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.lanes.iter().flatten()
    }

    pub fn vehicle_count(&self) -> usize {
        self.lanes[0].len() + self.lanes[1].len()
    }

    /// Arrivals generated so far, including those still queued at the entry.
    pub fn generated(&self) -> u64 {
        self.generated
    }

    /// Vehicles actually inserted onto the road.
    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn exits(&self) -> u64 {
        self.exits
    }

    pub fn queued(&self) -> u64 {
        self.queues[0] + self.queues[1]
    }

    pub fn infected_count(&self) -> usize {
        self.all_vehicles().filter(|v| v.state.infected).count()
    }

    pub fn origin_congested_at(&self) -> Option<f64> {
        self.origin.congested_at()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Physical lane index used in logs. Lane 1 is the fast lane.
    pub fn physical(&self, lane: Lane) -> u8 {
        let i = lane.index() as u8;
        if self.cfg.obstacle_lane == 0 {
            i
        } else {
            1 - i
        }
    }

    /// Places a vehicle directly on the road, bypassing the arrival process.
    /// Fails if it would overlap a neighbour or sit on the obstacle.
    pub fn insert_vehicle(
        &mut self,
        lane: Lane,
        position: f64,
        velocity: f64,
    ) -> Result<VehicleId, SimError> {
        let v = self.new_vehicle(lane, position, velocity);
        let id = v.state.id;
        let vs = &mut self.lanes[lane.index()];
        let at = vs.partition_point(|o| o.state.position < position);
        vs.insert(at, v);
        self.arrivals += 1;
        self.generated += 1;
        self.check_lane_order()?;
        Ok(id)
    }

    /// Replaces the driver parameters of every current and future vehicle.
    pub fn set_driver_params(&mut self, params: DriverParams) {
        self.params = params;
        for v in self.lanes.iter_mut().flatten() {
            v.state.params = params;
        }
    }

    fn new_vehicle(&mut self, lane: Lane, position: f64, velocity: f64) -> Vehicle {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        Vehicle {
            state: VehicleState {
                id,
                lane,
                position,
                velocity,
                length: self.cfg.vehicle_length,
                infected: false,
                passed_obstacle: position > self.cfg.obstacle_position,
                params: self.params,
            },
            ledger: MessageLedger::new(),
            mac: MacState::default(),
            last_lane_change: f64::NEG_INFINITY,
        }
    }

    /// True when every vehicle upstream of the obstacle is at a standstill
    /// and there are at least [`GRIDLOCK_MIN_VEHICLES`] of them.
    pub fn detect_gridlock(&self) -> bool {
        let obs = self.cfg.obstacle_position;
        let upstream: Vec<&Vehicle> = self
            .all_vehicles()
            .filter(|v| v.state.position < obs)
            .collect();
        upstream.len() >= GRIDLOCK_MIN_VEHICLES
            && upstream
                .iter()
                .all(|v| v.state.velocity < GRIDLOCK_VELOCITY)
    }

    /// Runs until `duration`, or until the origin congests when
    /// `stop_at_origin` is set.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn finished(&self) -> bool {
        self.now >= self.cfg.duration - TIME_EPS
            || (self.cfg.stop_at_origin && self.origin.congested_at().is_some())
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        if self.cfg.communication_enabled {
            self.communicate()?;
        }
        let candidates = self.lane_change_candidates()?;
        self.apply_lane_changes(candidates);
        self.advance_vehicles()?;

        self.tick += 1;
        self.now = self.tick as f64 * self.cfg.dt;

        self.remove_exits();
        self.inject();
        self.record_tick();
        self.check_invariants()
    }

    fn push(&mut self, kind: EventKind, v: Option<&VehicleState>, aux: Aux, time: f64) {
        let event = match v {
            Some(s) => Event {
                time,
                kind,
                vehicle: Some(s.id),
                lane: Some(self.physical(s.lane)),
                position: s.position,
                velocity: s.velocity,
                aux,
            },
            None => Event {
                time,
                kind,
                vehicle: None,
                lane: Some(self.physical(Lane::Obstacle)),
                position: self.cfg.obstacle_position,
                velocity: 0.0,
                aux,
            },
        };
        self.log.events.push(event);
    }

    fn warning(&self, created_at: f64) -> WarningMessage {
        WarningMessage {
            id: WARNING_ID,
            origin_position: self.cfg.obstacle_position,
            created_at,
            ttl_time: self.cfg.ttl_time,
            ttl_distance: self.cfg.ttl_distance,
            direction: Direction::Backward,
        }
    }

    fn beacon(&mut self) -> Option<Transmission> {
        if self.now + TIME_EPS < self.next_beacon {
            return None;
        }
        while self.next_beacon <= self.now + TIME_EPS {
            self.next_beacon += self.cfg.beacon_interval;
        }
        let msg = self.warning(self.now);
        match self.cfg.message_origin {
            MessageOrigin::Obstacle => Some(Transmission {
                sender: None,
                lane: None,
                position: self.cfg.obstacle_position,
                msg,
            }),
            MessageOrigin::FirstWitness => {
                let obs = self.cfg.obstacle_position;
                let range = self.cfg.radio.tx_range;
                let now = self.now;
                let lane = &mut self.lanes[Lane::Obstacle.index()];
                let idx = lane.partition_point(|v| v.state.position < obs);
                let witness = idx.checked_sub(1).map(|i| &mut lane[i])?;
                if obs - witness.state.position > range {
                    return None;
                }
                if witness.ledger.originate(&msg, now) {
                    witness.state.infected = true;
                }
                let s = witness.state.clone();
                self.push(
                    EventKind::Infection,
                    Some(&s),
                    Aux::Message(WARNING_ID),
                    now,
                );
                Some(Transmission {
                    sender: Some(s.id),
                    lane: Some(s.lane),
                    position: s.position,
                    msg,
                })
            }
        }
    }

    fn communicate(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let mut txs: Vec<Transmission> = self.beacon().into_iter().collect();

        // Medium occupancy: last tick's frames plus this tick's beacon.
        let mut occupied = self.last_tx.clone();
        occupied.extend(txs.iter().map(|t| (t.sender, t.position)));
        let radio = self.cfg.radio;
        let mut sensed = Vec::with_capacity(occupied.len());
        for li in 0..2 {
            for v in self.lanes[li].iter_mut() {
                if v.mac.pending.is_none() {
                    continue;
                }
                sensed.clear();
                sensed.extend(
                    occupied
                        .iter()
                        .filter(|(s, _)| *s != Some(v.state.id))
                        .map(|(_, x)| *x),
                );
                let busy = medium_busy(v.state.position, &sensed, &radio);
                let (mac, go) = mac_tick(v.mac, busy, &radio, &mut self.comm_rng);
                v.mac = mac;
                if go {
                    let msg = v
                        .ledger
                        .get(WARNING_ID)
                        .map(|e| e.latest)
                        .expect("queued frame without a ledger entry");
                    txs.push(Transmission {
                        sender: Some(v.state.id),
                        lane: Some(v.state.lane),
                        position: v.state.position,
                        msg,
                    });
                }
            }
        }

        let mut receptions = Vec::new();
        for (k, tx) in txs.iter().enumerate() {
            for li in 0..2 {
                let vs = &self.lanes[li];
                let lo = vs.partition_point(|v| v.state.position < tx.position - radio.tx_range);
                let hi = vs.partition_point(|v| v.state.position <= tx.position + radio.tx_range);
                for (index, v) in vs.iter().enumerate().take(hi).skip(lo) {
                    if Some(v.state.id) == tx.sender {
                        continue;
                    }
                    let distance = (v.state.position - tx.position).abs();
                    if receive_roll(distance, &radio, &mut self.comm_rng) {
                        receptions.push(Reception {
                            lane: li,
                            index,
                            tx: k,
                            distance,
                        });
                    }
                }
            }
        }

        for tx in &txs {
            let event = Event {
                time: now,
                kind: EventKind::Transmission,
                vehicle: tx.sender,
                lane: Some(self.physical(tx.lane.unwrap_or(Lane::Obstacle))),
                position: tx.position,
                velocity: 0.0,
                aux: Aux::Message(tx.msg.id),
            };
            let velocity = tx
                .sender
                .and_then(|id| self.all_vehicles().find(|v| v.state.id == id))
                .map_or(0.0, |v| v.state.velocity);
            self.log.events.push(Event { velocity, ..event });
        }

        // All receptions are recorded before any rebroadcast decision.
        let mut accepted = Vec::with_capacity(receptions.len());
        for r in receptions {
            let tx = txs[r.tx];
            let v = &mut self.lanes[r.lane][r.index];
            match v
                .ledger
                .record_reception(&tx.msg, tx.position, v.state.position, now)
            {
                Ok(first) => {
                    let newly = first && !v.state.infected;
                    if first {
                        v.state.infected = true;
                    }
                    let s = v.state.clone();
                    if newly {
                        self.push(EventKind::Infection, Some(&s), Aux::Message(tx.msg.id), now);
                    }
                    if self.cfg.log_receptions {
                        self.push(EventKind::Reception, Some(&s), Aux::Message(tx.msg.id), now);
                    }
                    accepted.push(r);
                }
                // Injection offsets make exact ties unreachable in practice;
                // a tie carries no direction, so the frame is dropped.
                Err(DisseminationError::PositionTie(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }

        for r in accepted {
            let msg = txs[r.tx].msg;
            let v = &mut self.lanes[r.lane][r.index];
            let ctx = ReceptionContext {
                now,
                my_pos: v.state.position,
                sender_distance: r.distance,
                tx_range: radio.tx_range,
            };
            let entry = v
                .ledger
                .get_mut(msg.id)
                .expect("reception was just recorded");
            if should_rebroadcast(&self.cfg.policy, entry, &ctx, &mut self.comm_rng)? {
                v.mac.enqueue(msg.id, &radio, &mut self.comm_rng);
            }
        }

        self.last_tx = txs.iter().map(|t| (t.sender, t.position)).collect();
        Ok(())
    }

    fn leader_in(&self, lane: Lane, x: f64) -> Adjacent {
        let vs = &self.lanes[lane.index()];
        let idx = vs.partition_point(|v| v.state.position <= x);
        let mut best = vs.get(idx).map_or(
            Adjacent {
                slot: Slot::Empty,
                gap: f64::INFINITY,
                velocity: 0.0,
            },
            |l| Adjacent {
                slot: Slot::Vehicle(l.state.id),
                gap: l.rear() - x,
                velocity: l.state.velocity,
            },
        );
        let obs = self.cfg.obstacle_position;
        if lane == Lane::Obstacle && x < obs && obs - x < best.gap {
            best = Adjacent {
                slot: Slot::Obstacle,
                gap: obs - x,
                velocity: 0.0,
            };
        }
        best
    }

    /// Nearest vehicle (or the obstacle) at or behind `x`, excluding the
    /// first `skip` positions counted from the partition point.
    fn follower_in(&self, lane: Lane, x: f64, rear: f64, strict: bool) -> Adjacent {
        let vs = &self.lanes[lane.index()];
        let idx = if strict {
            vs.partition_point(|v| v.state.position < x)
        } else {
            vs.partition_point(|v| v.state.position <= x)
        };
        let mut best = idx.checked_sub(1).map_or(
            Adjacent {
                slot: Slot::Empty,
                gap: f64::INFINITY,
                velocity: 0.0,
            },
            |i| Adjacent {
                slot: Slot::Vehicle(vs[i].state.id),
                gap: rear - vs[i].state.position,
                velocity: vs[i].state.velocity,
            },
        );
        let obs = self.cfg.obstacle_position;
        if lane == Lane::Obstacle && x >= obs && rear - obs < best.gap {
            best = Adjacent {
                slot: Slot::Obstacle,
                gap: rear - obs,
                velocity: 0.0,
            };
        }
        best
    }

    fn neighborhood(leader: Adjacent, follower: Adjacent) -> Option<Neighborhood> {
        let leader = match leader.slot {
            Slot::Empty => None,
            _ => Some(Neighbor::new(leader.gap, leader.velocity).ok()?),
        };
        let follower = match follower.slot {
            Slot::Vehicle(_) => Some(Neighbor::new(follower.gap, follower.velocity).ok()?),
            // The obstacle neither brakes nor accelerates; only its gap matters.
            Slot::Obstacle => {
                if !(follower.gap > 0.0) {
                    return None;
                }
                None
            }
            Slot::Empty => None,
        };
        Some(Neighborhood { leader, follower })
    }

    fn effective_params(&self, s: &VehicleState) -> DriverParams {
        DriverParams {
            desired_velocity: effective_desired_velocity(s, self.cfg.vsl_enabled),
            ..s.params
        }
    }

    fn lane_change_candidates(&self) -> Result<Vec<Candidate>, SimError> {
        let obs = self.cfg.obstacle_position;
        let mut best: BTreeMap<(Lane, Slot, Slot), Candidate> = BTreeMap::new();
        for lane in Lane::ALL {
            for v in &self.lanes[lane.index()] {
                if self.now - v.last_lane_change < self.cfg.lane_change_cooldown - TIME_EPS {
                    continue;
                }
                let s = &v.state;
                let x = s.position;
                let target = lane.other();

                let t_leader = self.leader_in(target, x);
                let t_follower = self.follower_in(target, x, v.rear(), false);
                if t_follower.slot == Slot::Obstacle && t_follower.gap < s.params.min_gap {
                    continue;
                }
                let Some(tgt) = Self::neighborhood(t_leader, t_follower) else {
                    continue;
                };
                let cur = Self::neighborhood(
                    self.leader_in(lane, x),
                    self.follower_in(lane, x, v.rear(), true),
                )
                .ok_or_else(|| SimError::Overlap {
                    time: self.now,
                    lane: self.physical(lane) as usize,
                    detail: format!("vehicle {} has a non-positive gap in its own lane", s.id.0),
                })?;

                let p_eff = self.effective_params(s);
                let bias = if self.physical(target) == 1 {
                    s.params.lane_bias
                } else {
                    0.0
                };
                let my_adv = my_advantage(&cur, &tgt, s.velocity, bias, &p_eff);
                let oth_dis = others_disadvantage(&cur, &tgt, s);
                let rule = self.cfg.lane_change_rule;
                let informed = s.infected && lane == Lane::Obstacle && x < obs;
                let go = match (informed, self.cfg.lane_change_variant) {
                    (true, LaneChangeVariant::BruteForce) => brute_force_lane_change(
                        my_adv,
                        self.cfg.brute_force_extra,
                        oth_dis,
                        &s.params,
                        rule,
                    ),
                    (true, LaneChangeVariant::Proportional) => {
                        let diff = diff_incentive(x, obs, &s.params)?;
                        proportional_lane_change(my_adv, diff, oth_dis, &s.params, rule)
                    }
                    _ => base_lane_change(my_adv, oth_dis, &s.params, rule),
                };
                if !go {
                    continue;
                }
                let mover = VehicleState {
                    params: p_eff,
                    ..s.clone()
                };
                if !lane_change_is_safe(&tgt, &mover, self.cfg.safe_brake) {
                    continue;
                }
                let c = Candidate {
                    id: s.id,
                    from: lane,
                    position: x,
                    leader: t_leader.slot,
                    follower: t_follower.slot,
                };
                // Two vehicles aiming at the same gap: the downstream one wins.
                best.entry((target, c.leader, c.follower))
                    .and_modify(|b| {
                        if c.position > b.position {
                            *b = c;
                        }
                    })
                    .or_insert(c);
            }
        }
        Ok(best.into_values().collect())
    }

    fn apply_lane_changes(&mut self, mut candidates: Vec<Candidate>) {
        if candidates.is_empty() {
            return;
        }
        candidates.sort_by_key(|c| c.id);
        let now = self.now;
        let mut moved: [Vec<Vehicle>; 2] = [Vec::new(), Vec::new()];
        for lane in Lane::ALL {
            let li = lane.index();
            let mut kept = Vec::with_capacity(self.lanes[li].len());
            for v in self.lanes[li].drain(..) {
                if candidates
                    .binary_search_by_key(&v.state.id, |c| c.id)
                    .is_ok()
                {
                    moved[lane.other().index()].push(v);
                } else {
                    kept.push(v);
                }
            }
            self.lanes[li] = kept;
        }
        let mut events = Vec::new();
        for lane in Lane::ALL {
            let li = lane.index();
            for mut v in std::mem::take(&mut moved[li]) {
                let from = v.state.lane;
                events.push(Event {
                    time: now,
                    kind: EventKind::LaneChange,
                    vehicle: Some(v.state.id),
                    lane: Some(self.physical(from)),
                    position: v.state.position,
                    velocity: v.state.velocity,
                    aux: Aux::LaneChange {
                        to_lane: self.physical(lane),
                        infected: v.state.infected,
                    },
                });
                v.state.lane = lane;
                v.last_lane_change = now;
                self.lanes[li].push(v);
            }
            self.lanes[li].sort_by(|a, b| a.state.position.total_cmp(&b.state.position));
        }
        events.sort_by_key(|e| e.vehicle);
        debug_assert!(candidates.iter().all(|c| c.from.other() != c.from));
        self.log.events.extend(events);
    }

    fn advance_vehicles(&mut self) -> Result<(), SimError> {
        let obs = self.cfg.obstacle_position;
        let dt = self.cfg.dt;
        let mut accels: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for lane in Lane::ALL {
            let vs = &self.lanes[lane.index()];
            let mut acc = Vec::with_capacity(vs.len());
            for (i, v) in vs.iter().enumerate() {
                let s = &v.state;
                let mut leader: Option<(f64, f64)> = vs
                    .get(i + 1)
                    .map(|l| (l.rear() - s.position, l.state.velocity));
                if lane == Lane::Obstacle && s.position < obs {
                    let g = obs - s.position;
                    if leader.is_none_or(|(lg, _)| g < lg) {
                        leader = Some((g, 0.0));
                    }
                }
                let neighbor = match leader {
                    Some((gap, vel)) => {
                        Some(Neighbor::new(gap, vel).map_err(|e| SimError::Overlap {
                            time: self.now,
                            lane: self.physical(lane) as usize,
                            detail: format!("vehicle {} at {} m: {e}", s.id.0, s.position),
                        })?)
                    }
                    None => None,
                };
                acc.push(accel_behind(
                    s.velocity,
                    neighbor,
                    &self.effective_params(s),
                ));
            }
            accels[lane.index()] = acc;
        }
        let obstacle_lane = self.physical(Lane::Obstacle) as usize;
        for lane in Lane::ALL {
            let li = lane.index();
            for (v, a) in self.lanes[li].iter_mut().zip(&accels[li]) {
                let upstream = v.state.position < obs;
                v.state = integrate_kinematics(&v.state, *a, dt);
                if lane == Lane::Obstacle && upstream && v.state.position >= obs {
                    return Err(SimError::Overlap {
                        time: self.now,
                        lane: obstacle_lane,
                        detail: format!("vehicle {} ran into the obstacle", v.state.id.0),
                    });
                }
            }
        }
        self.check_lane_order()
    }

    fn check_lane_order(&self) -> Result<(), SimError> {
        for lane in Lane::ALL {
            for pair in self.lanes[lane.index()].windows(2) {
                let gap = pair[1].rear() - pair[0].state.position;
                if !(gap > 0.0) {
                    return Err(SimError::Overlap {
                        time: self.now,
                        lane: self.physical(lane) as usize,
                        detail: format!(
                            "vehicle {} at {} m (v = {}) overlaps vehicle {} at {} m (v = {}), gap {}",
                            pair[0].state.id.0,
                            pair[0].state.position,
                            pair[0].state.velocity,
                            pair[1].state.id.0,
                            pair[1].state.position,
                            pair[1].state.velocity,
                            gap
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn remove_exits(&mut self) {
        let obs = self.cfg.obstacle_position;
        let end = self.cfg.field_length;
        let now = self.now;
        for li in 0..2 {
            for v in self.lanes[li].iter_mut() {
                if v.state.position > obs {
                    v.state.passed_obstacle = true;
                }
            }
            let split = self.lanes[li].partition_point(|v| v.state.position <= end);
            let gone: Vec<Vehicle> = self.lanes[li].drain(split..).collect();
            for v in gone {
                self.exits += 1;
                self.push(EventKind::Exit, Some(&v.state), Aux::None, now);
            }
        }
    }

    fn inject(&mut self) {
        while self.arrivals_clock.peek() <= self.now + TIME_EPS {
            self.arrivals_clock.pop(&mut self.traffic_rng);
            self.generated += 1;
            self.queues[self.next_entry_lane] += 1;
            self.next_entry_lane = 1 - self.next_entry_lane;
        }
        for lane in Lane::ALL {
            let li = lane.index();
            if self.queues[li] == 0 {
                continue;
            }
            // Offset by physical lane so entries in both lanes never tie.
            let x0 = 1e-3 * f64::from(self.physical(lane));
            let (gap, v_lead) = self.lanes[li]
                .first()
                .map_or((f64::INFINITY, f64::INFINITY), |l| {
                    (l.rear() - x0, l.state.velocity)
                });
            let Some(v) = entry_velocity(gap, v_lead, &self.params) else {
                continue;
            };
            let vehicle = self.new_vehicle(lane, x0, v);
            let s = vehicle.state.clone();
            self.lanes[li].insert(0, vehicle);
            self.queues[li] -= 1;
            self.arrivals += 1;
            self.push(EventKind::Injection, Some(&s), Aux::None, self.now);
        }
    }

    fn record_tick(&mut self) {
        let now = self.now;
        self.origin.advance(now);
        for v in self.lanes.iter().flatten() {
            self.origin.observe(now, v.state.position, v.state.velocity);
        }
        if self.tick.is_multiple_of(u64::from(self.cfg.sample_every)) {
            let samples: Vec<VehicleState> = self.all_vehicles().map(|v| v.state.clone()).collect();
            for s in &samples {
                self.push(EventKind::Sample, Some(s), Aux::None, now);
            }
        }
        let gridlock = self.detect_gridlock();
        if gridlock && !self.gridlocked {
            self.log.events.push(Event {
                time: now,
                kind: EventKind::Gridlock,
                vehicle: None,
                lane: None,
                position: 0.0,
                velocity: 0.0,
                aux: Aux::None,
            });
        }
        self.gridlocked = gridlock;
    }

    /// Vehicle conservation: every generated arrival is on the road, in the
    /// entry queue, or has exited.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        let on_road = self.vehicle_count() as u64;
        if self.generated != self.exits + on_road + self.queued()
            || self.arrivals != self.exits + on_road
        {
            return Err(SimError::Invariant {
                time: self.now,
                detail: format!(
                    "generated {} arrivals {} exits {} on road {} queued {}",
                    self.generated,
                    self.arrivals,
                    self.exits,
                    on_road,
                    self.queued()
                ),
            });
        }
        self.check_lane_order()
    }
}

/// Entry speed behind a leader `gap` metres ahead moving at `v_lead`: the
/// leader's speed capped at the desired velocity. `None` while the gap is
/// shorter than the safe headway `s0 + v T` at that speed.
pub fn entry_velocity(gap: f64, v_lead: f64, p: &DriverParams) -> Option<f64> {
    let v = p.desired_velocity.min(v_lead).max(0.0);
    (gap >= p.min_gap + v * p.time_headway).then_some(v)
}

/// Validates `cfg`, runs it to completion and returns the full log.
pub fn run(cfg: &SimConfig) -> Result<EventLog, SimError> {
    let mut sim = Simulation::new(cfg.clone())?;
    sim.run_to_end()?;
    Ok(sim.into_log())
}
