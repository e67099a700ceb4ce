use crate::dissemination::DisseminationPolicy;
use crate::error::ConfigError;
use crate::radio::RadioConfig;
use crate::traffic::{DriverParams, LaneChangeRule, LaneChangeVariant};

/// Who emits the periodic warning beacon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageOrigin {
    /// The obstacle itself beacons from its position.
    Obstacle,
    /// The obstacle-lane vehicle nearest the obstacle, once within
    /// transmission range of it, beacons from its own position.
    FirstWitness,
}

/// Full scenario description.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub field_length: f64,
    pub obstacle_position: f64,
    /// Physical index (0 or 1) of the blocked lane.
    pub obstacle_lane: u8,
    /// Vehicles per hour over both lanes.
    pub traffic_load: f64,
    /// Desired velocity of every driver, m/s.
    pub speed_limit: f64,
    pub dt: f64,
    pub duration: f64,
    /// Initial period during which arrivals run at a quarter of the load.
    pub warm_up: f64,
    pub seed: u64,
    pub vehicle_length: f64,
    /// Driver parameters; `desired_velocity` is taken from `speed_limit`.
    pub driver: DriverParams,
    pub radio: RadioConfig,
    pub policy: DisseminationPolicy,
    pub lane_change_variant: LaneChangeVariant,
    pub lane_change_rule: LaneChangeRule,
    /// Constant incentive for the brute-force variant, m/s².
    pub brute_force_extra: f64,
    /// Largest deceleration a lane change may impose, m/s².
    pub safe_brake: f64,
    /// Minimum time between two lane changes of one vehicle, s.
    pub lane_change_cooldown: f64,
    pub vsl_enabled: bool,
    pub communication_enabled: bool,
    pub beacon_interval: f64,
    pub message_origin: MessageOrigin,
    pub ttl_time: f64,
    pub ttl_distance: f64,
    /// End the run once the road origin is congested.
    pub stop_at_origin: bool,
    /// Stretch of road from position 0 watched for congestion, m.
    pub origin_window: f64,
    /// Mean velocity below which the origin counts as congested, m/s.
    pub origin_velocity_threshold: f64,
    /// Time span over which origin velocities are averaged, s.
    pub origin_time_window: f64,
    /// Record a position/velocity sample of every vehicle every this many ticks.
    pub sample_every: u32,
    pub log_receptions: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let speed_limit = 120.0 / 3.6;
        Self {
            field_length: 1500.0,
            obstacle_position: 1000.0,
            obstacle_lane: 0,
            traffic_load: 4400.0,
            speed_limit,
            dt: 0.25,
            duration: 900.0,
            warm_up: 60.0,
            seed: 1,
            vehicle_length: 5.0,
            driver: DriverParams {
                desired_velocity: speed_limit,
                ..DriverParams::default()
            },
            radio: RadioConfig::default(),
            policy: DisseminationPolicy::default(),
            lane_change_variant: LaneChangeVariant::Proportional,
            lane_change_rule: LaneChangeRule::Multiplicative,
            brute_force_extra: 1.0,
            safe_brake: 4.0,
            lane_change_cooldown: 2.0,
            vsl_enabled: false,
            communication_enabled: true,
            beacon_interval: 1.0,
            message_origin: MessageOrigin::Obstacle,
            ttl_time: 120.0,
            ttl_distance: 2000.0,
            stop_at_origin: false,
            origin_window: 100.0,
            origin_velocity_threshold: 5.0,
            origin_time_window: 10.0,
            sample_every: 1,
            log_receptions: true,
        }
    }
}

impl SimConfig {
    /// Driver parameters with the speed limit applied.
    pub fn driver_params(&self) -> DriverParams {
        DriverParams {
            desired_velocity: self.speed_limit,
            ..self.driver
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn req(ok: bool, key: &str, value: f64, constraint: &str) -> Result<(), ConfigError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(key, value, constraint))
            }
        }
        req(
            self.field_length > 0.0,
            "field_length",
            self.field_length,
            "> 0",
        )?;
        req(
            self.obstacle_position > 0.0 && self.obstacle_position < self.field_length,
            "obstacle_position",
            self.obstacle_position,
            "inside (0, field_length)",
        )?;
        if self.obstacle_lane > 1 {
            return Err(ConfigError::new(
                "obstacle_lane",
                self.obstacle_lane,
                "0 or 1",
            ));
        }
        req(
            self.traffic_load > 0.0,
            "traffic_load",
            self.traffic_load,
            "> 0",
        )?;
        req(
            self.speed_limit > 0.0,
            "speed_limit",
            self.speed_limit,
            "> 0",
        )?;
        req(self.dt > 0.0, "dt", self.dt, "> 0")?;
        req(self.warm_up >= 0.0, "warm_up", self.warm_up, ">= 0")?;
        // A zero-length run is allowed and produces an empty log.
        req(
            self.duration == 0.0 || self.duration > self.warm_up,
            "duration",
            self.duration,
            "> warm_up (or 0 for an empty run)",
        )?;
        req(
            self.vehicle_length > 0.0,
            "vehicle_length",
            self.vehicle_length,
            "> 0",
        )?;
        req(
            self.brute_force_extra >= 0.0,
            "brute_force_v",
            self.brute_force_extra,
            ">= 0",
        )?;
        req(self.safe_brake > 0.0, "safe_brake", self.safe_brake, "> 0")?;
        req(
            self.lane_change_cooldown >= 0.0,
            "lane_change_cooldown",
            self.lane_change_cooldown,
            ">= 0",
        )?;
        req(
            self.beacon_interval > 0.0,
            "beacon_interval",
            self.beacon_interval,
            "> 0",
        )?;
        req(self.ttl_time > 0.0, "ttl_time", self.ttl_time, "> 0")?;
        req(
            self.ttl_distance > 0.0,
            "ttl_distance",
            self.ttl_distance,
            "> 0",
        )?;
        req(
            self.origin_window > 0.0,
            "origin_window",
            self.origin_window,
            "> 0",
        )?;
        req(
            self.origin_velocity_threshold > 0.0,
            "origin_velocity_threshold",
            self.origin_velocity_threshold,
            "> 0",
        )?;
        req(
            self.origin_time_window > 0.0,
            "origin_time_window",
            self.origin_time_window,
            "> 0",
        )?;
        if self.sample_every == 0 {
            return Err(ConfigError::new("sample_every", 0, ">= 1"));
        }
        self.driver_params().validate().map_err(|e| match e {
            crate::error::TrafficError::InvalidParam {
                name,
                value,
                constraint,
            } => ConfigError::new(name, value, constraint),
            other => ConfigError::new("driver", other, "valid driver parameters"),
        })?;
        self.radio.validate().map_err(|e| match e {
            crate::error::RadioError::InvalidParam {
                name,
                value,
                constraint,
            } => ConfigError::new(name, value, constraint),
            other => ConfigError::new("radio", other, "valid radio parameters"),
        })?;
        self.policy
            .validate()
            .map_err(|_| ConfigError::new("alpha", self.policy.alpha, "> 0"))?;
        Ok(())
    }
}
