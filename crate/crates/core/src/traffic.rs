//! Vehicle dynamics: the intelligent driver model (IDM) for longitudinal
//! control, MOBIL-style lane-change incentives, the obstacle-aware incentive
//! variants used by informed drivers, and the explicit kinematic update.
//!
//! Everything here is a pure function of its inputs. The engine owns the
//! road geometry and hands in [`Neighborhood`] snapshots.

use crate::error::TrafficError;

/// Driver behaviour parameters shared by the car-following and lane-change
/// models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverParams {
    /// Maximum acceleration on an open road, m/s².
    pub max_accel: f64,
    /// Comfortable braking deceleration, m/s².
    pub comfortable_brake: f64,
    /// Desired (free-flow) velocity, m/s.
    pub desired_velocity: f64,
    /// Safe time headway, s.
    pub time_headway: f64,
    /// Minimum bumper-to-bumper gap at standstill, m.
    pub min_gap: f64,
    /// Acceleration exponent.
    pub accel_exponent: f64,
    /// Weight given to the disadvantage imposed on other drivers.
    pub politeness: f64,
    /// Acceleration gain a lane change must yield, m/s².
    pub change_threshold: f64,
    /// Signed incentive added to changes toward the fast lane, m/s².
    pub lane_bias: f64,
    /// Upper bound on the proximity incentive.
    pub diff_cap: f64,
    /// Reduction of the desired velocity under the variable speed limit, m/s.
    pub vsl_reduction: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            max_accel: 0.73,
            comfortable_brake: 1.67,
            desired_velocity: 120.0 / 3.6,
            time_headway: 1.6,
            min_gap: 2.0,
            accel_exponent: 4.0,
            politeness: 0.2,
            change_threshold: 0.3,
            lane_bias: -0.1,
            diff_cap: 20.0,
            vsl_reduction: 2.7,
        }
    }
}

impl DriverParams {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let checks: [(&'static str, f64, bool, &'static str); 8] = [
            ("max_accel", self.max_accel, self.max_accel > 0.0, "> 0"),
            (
                "comfortable_brake",
                self.comfortable_brake,
                self.comfortable_brake > 0.0,
                "> 0",
            ),
            (
                "desired_velocity",
                self.desired_velocity,
                self.desired_velocity > 0.0,
                "> 0",
            ),
            (
                "time_headway",
                self.time_headway,
                self.time_headway >= 0.0,
                ">= 0",
            ),
            ("min_gap", self.min_gap, self.min_gap >= 0.0, ">= 0"),
            (
                "change_threshold",
                self.change_threshold,
                self.change_threshold > 0.0,
                "> 0",
            ),
            ("diff_cap", self.diff_cap, self.diff_cap > 0.0, "> 0"),
            (
                "politeness",
                self.politeness,
                self.politeness >= 0.0,
                ">= 0",
            ),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok || !value.is_finite() {
                return Err(TrafficError::InvalidParam {
                    name,
                    value,
                    constraint,
                });
            }
        }
        if !(self.accel_exponent > 0.0) {
            return Err(TrafficError::InvalidParam {
                name: "accel_exponent",
                value: self.accel_exponent,
                constraint: "> 0",
            });
        }
        if !(self.vsl_reduction >= 0.0) {
            return Err(TrafficError::InvalidParam {
                name: "vsl_reduction",
                value: self.vsl_reduction,
                constraint: ">= 0",
            });
        }
        Ok(())
    }
}

/// One of the two carriageway lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lane {
    /// The lane containing the obstacle; also the designated slow lane.
    Obstacle,
    /// The free lane next to it.
    Opposite,
}

impl Lane {
    pub const ALL: [Lane; 2] = [Lane::Obstacle, Lane::Opposite];

    pub fn index(self) -> usize {
        match self {
            Lane::Obstacle => 0,
            Lane::Opposite => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Lane> {
        match i {
            0 => Some(Lane::Obstacle),
            1 => Some(Lane::Opposite),
            _ => None,
        }
    }

    pub fn other(self) -> Lane {
        match self {
            Lane::Obstacle => Lane::Opposite,
            Lane::Opposite => Lane::Obstacle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VehicleId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub lane: Lane,
    /// Front bumper position along the road, m.
    pub position: f64,
    pub velocity: f64,
    pub length: f64,
    pub infected: bool,
    pub passed_obstacle: bool,
    pub params: DriverParams,
}

/// A vehicle adjacent to the subject in one lane: its bumper-to-bumper gap
/// and velocity. Construction rejects non-positive gaps, so every
/// `Neighbor` describes a collision-free configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    gap: f64,
    velocity: f64,
}

impl Neighbor {
    pub fn new(gap: f64, velocity: f64) -> Result<Self, TrafficError> {
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(TrafficError::NonPositiveGap { gap });
        }
        if !(velocity >= 0.0) || !velocity.is_finite() {
            return Err(TrafficError::NegativeVelocity { velocity });
        }
        Ok(Self { gap, velocity })
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }
}

/// Leader and follower around the subject vehicle in a single lane. `None`
/// means no vehicle within the field in that direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Neighborhood {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
}

/// Which incentive the lane-change criterion uses for informed drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneChangeVariant {
    Base,
    BruteForce,
    Proportional,
}

/// How the own-advantage and imposed-disadvantage terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneChangeRule {
    /// `(incentive - p) * oth_dis > threshold`
    Multiplicative,
    /// `incentive - p * oth_dis > threshold`
    MobilAdditive,
}

/// Desired dynamic gap `s*` to the leader. The dynamic term is clamped at
/// zero so the result never drops below `min_gap`.
pub fn desired_gap(v: f64, delta_v: f64, p: &DriverParams) -> f64 {
    let dynamic =
        v * p.time_headway + v * delta_v / (2.0 * (p.max_accel * p.comfortable_brake).sqrt());
    p.min_gap + dynamic.max(0.0)
}

/// IDM acceleration. `gap` is the bumper-to-bumper distance to the leader,
/// or `f64::INFINITY` when there is none; `delta_v` is the approach rate
/// `v - v_leader`.
pub fn idm_acceleration(
    v: f64,
    gap: f64,
    delta_v: f64,
    p: &DriverParams,
) -> Result<f64, TrafficError> {
    if !(gap > 0.0) {
        return Err(TrafficError::NonPositiveGap { gap });
    }
    Ok(idm_raw(v, gap, delta_v, p))
}

fn idm_raw(v: f64, gap: f64, delta_v: f64, p: &DriverParams) -> f64 {
    let free = 1.0 - (v / p.desired_velocity).powf(p.accel_exponent);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let ratio = desired_gap(v, delta_v, p) / gap;
        ratio * ratio
    };
    p.max_accel * (free - interaction)
}

/// Bumper-to-bumper gap at which a follower driving at `v` behind a leader at
/// the same speed neither accelerates nor brakes. Infinite at or above `v0`.
pub fn equilibrium_gap(v: f64, p: &DriverParams) -> f64 {
    let free = 1.0 - (v / p.desired_velocity).powf(p.accel_exponent);
    if free <= 0.0 {
        return f64::INFINITY;
    }
    desired_gap(v, 0.0, p) / free.sqrt()
}

/// IDM acceleration against an optional leader.
pub fn accel_behind(v: f64, leader: Option<Neighbor>, p: &DriverParams) -> f64 {
    match leader {
        Some(l) => idm_raw(v, l.gap, v - l.velocity, p),
        None => idm_raw(v, f64::INFINITY, 0.0, p),
    }
}

/// Own acceleration gain from moving into the target lane, plus `bias`.
pub fn my_advantage(
    current: &Neighborhood,
    target: &Neighborhood,
    v: f64,
    bias: f64,
    p: &DriverParams,
) -> f64 {
    let a_old = accel_behind(v, current.leader, p);
    let a_new = accel_behind(v, target.leader, p);
    a_new - a_old + bias
}

/// `a_behind(old) - a_behind(new)`: the accelerations the old-lane and
/// new-lane followers would have after the mover changes lane. A lane
/// without a follower contributes the free-road acceleration of a follower
/// at the mover's speed, so two empty lanes cancel.
///
/// Followers are assumed to drive with the mover's parameters.
pub fn others_disadvantage(
    current: &Neighborhood,
    target: &Neighborhood,
    mover: &VehicleState,
) -> f64 {
    let p = &mover.params;
    let free = accel_behind(mover.velocity, None, p);
    let behind_old = current.follower.map_or(free, |f| {
        // The old follower closes up to the mover's old leader.
        let leader = current.leader.map(|l| Neighbor {
            gap: f.gap + mover.length + l.gap,
            velocity: l.velocity,
        });
        accel_behind(f.velocity, leader, p)
    });
    let behind_new = target.follower.map_or(free, |f| {
        let leader = Some(Neighbor {
            gap: f.gap,
            velocity: mover.velocity,
        });
        accel_behind(f.velocity, leader, p)
    });
    behind_old - behind_new
}

/// Shared threshold test behind all three lane-change criteria.
pub fn lane_change_criterion(
    rule: LaneChangeRule,
    incentive: f64,
    oth_dis: f64,
    p: &DriverParams,
) -> bool {
    match rule {
        LaneChangeRule::Multiplicative => (incentive - p.politeness) * oth_dis > p.change_threshold,
        LaneChangeRule::MobilAdditive => incentive - p.politeness * oth_dis > p.change_threshold,
    }
}

/// Criterion used by uninformed drivers and outside the obstacle lane.
pub fn base_lane_change(my_adv: f64, oth_dis: f64, p: &DriverParams, rule: LaneChangeRule) -> bool {
    lane_change_criterion(rule, my_adv, oth_dis, p)
}

/// Informed criterion with a constant extra incentive `extra`.
pub fn brute_force_lane_change(
    my_adv: f64,
    extra: f64,
    oth_dis: f64,
    p: &DriverParams,
    rule: LaneChangeRule,
) -> bool {
    lane_change_criterion(rule, my_adv + extra, oth_dis, p)
}

/// Proximity incentive `min(cap, pos_obst / (pos_obst - pos_me))`. Grows
/// from 1 at the road origin toward the cap at the obstacle.
pub fn diff_incentive(pos_me: f64, pos_obst: f64, p: &DriverParams) -> Result<f64, TrafficError> {
    if !(pos_me < pos_obst) {
        return Err(TrafficError::PastObstacle {
            position: pos_me,
            obstacle: pos_obst,
        });
    }
    Ok((pos_obst / (pos_obst - pos_me)).min(p.diff_cap))
}

/// Informed criterion with the proximity incentive from [`diff_incentive`].
pub fn proportional_lane_change(
    my_adv: f64,
    diff: f64,
    oth_dis: f64,
    p: &DriverParams,
    rule: LaneChangeRule,
) -> bool {
    lane_change_criterion(rule, my_adv + diff, oth_dis, p)
}

/// Desired velocity after applying the variable speed limit, which only
/// affects informed vehicles that have not yet passed the obstacle.
pub fn effective_desired_velocity(vehicle: &VehicleState, vsl_enabled: bool) -> f64 {
    let p = &vehicle.params;
    if vsl_enabled && vehicle.infected && !vehicle.passed_obstacle {
        (p.desired_velocity - p.vsl_reduction).max(0.0)
    } else {
        p.desired_velocity
    }
}

/// Explicit ballistic update. Velocity is clamped at zero and vehicles never
/// reverse.
pub fn integrate_kinematics(vehicle: &VehicleState, accel: f64, dt: f64) -> VehicleState {
    let v = vehicle.velocity;
    let dx = (v * dt + 0.5 * accel * dt * dt).max(0.0);
    VehicleState {
        velocity: (v + accel * dt).max(0.0),
        position: vehicle.position + dx,
        ..vehicle.clone()
    }
}

/// Safety veto for a prospective change into `target`: the new follower must
/// keep at least `min_gap` and brake no harder than `safe_brake`, and so must
/// the mover behind its new leader.
pub fn lane_change_is_safe(target: &Neighborhood, mover: &VehicleState, safe_brake: f64) -> bool {
    let p = &mover.params;
    if let Some(f) = target.follower {
        if f.gap < p.min_gap {
            return false;
        }
        let leader = Some(Neighbor {
            gap: f.gap,
            velocity: mover.velocity,
        });
        if accel_behind(f.velocity, leader, p) < -safe_brake {
            return false;
        }
    }
    match target.leader {
        Some(l) => l.gap >= p.min_gap && accel_behind(mover.velocity, Some(l), p) >= -safe_brake,
        None => true,
    }
}
