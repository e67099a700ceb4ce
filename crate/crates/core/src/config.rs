//! Flat `key = value` scenario documents.
//!
//! One assignment per line, `#` starts a comment. Quantities accept an
//! optional unit suffix (`m`, `km`, `s`, `min`, `h`, `m/s`, `km/h`, `veh/h`)
//! which is normalised to SI on parse. A bare number is taken as SI.
//! Unknown keys are rejected.

use crate::dissemination::PolicyKind;
use crate::engine::{MessageOrigin, SimConfig};
use crate::error::ConfigError;
use crate::traffic::{LaneChangeRule, LaneChangeVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Length,
    Time,
    Velocity,
    Flow,
    Plain,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Real(Unit),
    Int,
    Bool,
    Word,
}

/// Every accepted key, in echo order.
const KEYS: &[(&str, Kind)] = &[
    ("field_length", Kind::Real(Unit::Length)),
    ("obstacle_position", Kind::Real(Unit::Length)),
    ("obstacle_lane", Kind::Int),
    ("traffic_load", Kind::Real(Unit::Flow)),
    ("speed_limit", Kind::Real(Unit::Velocity)),
    ("dt", Kind::Real(Unit::Time)),
    ("duration", Kind::Real(Unit::Time)),
    ("warm_up", Kind::Real(Unit::Time)),
    ("seed", Kind::Int),
    ("vehicle_length", Kind::Real(Unit::Length)),
    ("max_accel", Kind::Real(Unit::Plain)),
    ("comfortable_brake", Kind::Real(Unit::Plain)),
    ("time_headway", Kind::Real(Unit::Time)),
    ("min_gap", Kind::Real(Unit::Length)),
    ("accel_exponent", Kind::Real(Unit::Plain)),
    ("politeness", Kind::Real(Unit::Plain)),
    ("change_threshold", Kind::Real(Unit::Plain)),
    ("lane_bias", Kind::Real(Unit::Plain)),
    ("diff_cap", Kind::Real(Unit::Plain)),
    ("vsl_reduction", Kind::Real(Unit::Velocity)),
    ("tx_power", Kind::Real(Unit::Plain)),
    ("gain_tx", Kind::Real(Unit::Plain)),
    ("gain_rx", Kind::Real(Unit::Plain)),
    ("wavelength", Kind::Real(Unit::Length)),
    ("system_loss", Kind::Real(Unit::Plain)),
    ("tx_range", Kind::Real(Unit::Length)),
    ("interference_range", Kind::Real(Unit::Length)),
    ("reception_prob", Kind::Real(Unit::Plain)),
    ("backoff_min", Kind::Int),
    ("backoff_max", Kind::Int),
    ("max_backoff_stage", Kind::Int),
    ("policy", Kind::Word),
    ("alpha", Kind::Real(Unit::Plain)),
    ("lane_change_variant", Kind::Word),
    ("lane_change_rule", Kind::Word),
    ("brute_force_v", Kind::Real(Unit::Plain)),
    ("safe_brake", Kind::Real(Unit::Plain)),
    ("lane_change_cooldown", Kind::Real(Unit::Time)),
    ("vsl_enabled", Kind::Bool),
    ("communication_enabled", Kind::Bool),
    ("beacon_interval", Kind::Real(Unit::Time)),
    ("message_origin", Kind::Word),
    ("ttl_time", Kind::Real(Unit::Time)),
    ("ttl_distance", Kind::Real(Unit::Length)),
    ("stop_at_origin", Kind::Bool),
    ("origin_window", Kind::Real(Unit::Length)),
    ("origin_velocity_threshold", Kind::Real(Unit::Velocity)),
    ("origin_time_window", Kind::Real(Unit::Time)),
    ("sample_every", Kind::Int),
    ("log_receptions", Kind::Bool),
];

pub fn policy_name(k: PolicyKind) -> &'static str {
    match k {
        PolicyKind::Flooding => "flooding",
        PolicyKind::Edge => "edge",
        PolicyKind::Distance => "distance",
        PolicyKind::Mixed => "mixed",
    }
}

pub fn parse_policy(s: &str) -> Option<PolicyKind> {
    Some(match s {
        "flooding" => PolicyKind::Flooding,
        "edge" => PolicyKind::Edge,
        "distance" => PolicyKind::Distance,
        "mixed" => PolicyKind::Mixed,
        _ => return None,
    })
}

fn variant_name(v: LaneChangeVariant) -> &'static str {
    match v {
        LaneChangeVariant::Base => "base",
        LaneChangeVariant::BruteForce => "brute_force",
        LaneChangeVariant::Proportional => "proportional",
    }
}

fn rule_name(r: LaneChangeRule) -> &'static str {
    match r {
        LaneChangeRule::Multiplicative => "multiplicative",
        LaneChangeRule::MobilAdditive => "additive",
    }
}

fn origin_name(o: MessageOrigin) -> &'static str {
    match o {
        MessageOrigin::Obstacle => "obstacle",
        MessageOrigin::FirstWitness => "first_witness",
    }
}

/// Splits `"120 km/h"` into its number and SI scale factor.
fn parse_quantity(key: &str, raw: &str, unit: Unit) -> Result<f64, ConfigError> {
    let raw = raw.trim();
    let split = raw
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .or_else(|| {
            // `e` is an exponent only when followed by a digit or sign.
            raw.char_indices().find_map(|(i, c)| {
                let next = raw[i + c.len_utf8()..].chars().next();
                ((c == 'e' || c == 'E')
                    && !matches!(next, Some(n) if n.is_ascii_digit() || n == '-' || n == '+'))
                .then_some(i)
            })
        })
        .unwrap_or(raw.len());
    let (num, suffix) = raw.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(key, raw, "a number"))?;
    let suffix = suffix.trim();
    let scale = match (unit, suffix) {
        (_, "") => 1.0,
        (Unit::Length, "m") => 1.0,
        (Unit::Length, "km") => 1000.0,
        (Unit::Time, "s") => 1.0,
        (Unit::Time, "min") => 60.0,
        (Unit::Time, "h") => 3600.0,
        (Unit::Velocity, "m/s") => 1.0,
        (Unit::Velocity, "km/h") => 1.0 / 3.6,
        (Unit::Flow, "veh/h") => 1.0,
        _ => {
            let allowed = match unit {
                Unit::Length => "a length in m or km",
                Unit::Time => "a duration in s, min or h",
                Unit::Velocity => "a velocity in m/s or km/h",
                Unit::Flow => "a flow in veh/h",
                Unit::Plain => "a plain number",
            };
            return Err(ConfigError::new(key, raw, allowed));
        }
    };
    if !value.is_finite() {
        return Err(ConfigError::new(key, raw, "finite"));
    }
    Ok(if scale == 1.0 { value } else { value * scale })
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::new(key, raw, "true or false")),
    }
}

fn parse_int(key: &str, raw: &str) -> Result<u64, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError::new(key, raw, "a non-negative integer"))
}

fn parse_u32(key: &str, raw: &str) -> Result<u32, ConfigError> {
    let v = parse_int(key, raw)?;
    u32::try_from(v).map_err(|_| ConfigError::new(key, raw, "at most 4294967295"))
}

fn assign(cfg: &mut SimConfig, key: &str, kind: Kind, raw: &str) -> Result<(), ConfigError> {
    let real = |unit| parse_quantity(key, raw, unit);
    match (key, kind) {
        ("obstacle_lane", _) => {
            cfg.obstacle_lane = u8::try_from(parse_int(key, raw)?)
                .map_err(|_| ConfigError::new(key, raw, "0 or 1"))?
        }
        ("seed", _) => cfg.seed = parse_int(key, raw)?,
        ("backoff_min", _) => cfg.radio.backoff_min = parse_u32(key, raw)?,
        ("backoff_max", _) => cfg.radio.backoff_max = parse_u32(key, raw)?,
        ("max_backoff_stage", _) => cfg.radio.max_backoff_stage = parse_u32(key, raw)?,
        ("sample_every", _) => cfg.sample_every = parse_u32(key, raw)?,
        ("vsl_enabled", _) => cfg.vsl_enabled = parse_bool(key, raw)?,
        ("communication_enabled", _) => cfg.communication_enabled = parse_bool(key, raw)?,
        ("stop_at_origin", _) => cfg.stop_at_origin = parse_bool(key, raw)?,
        ("log_receptions", _) => cfg.log_receptions = parse_bool(key, raw)?,
        ("policy", _) => {
            cfg.policy.kind = parse_policy(raw)
                .ok_or_else(|| ConfigError::new(key, raw, "flooding, edge, distance or mixed"))?
        }
        ("lane_change_variant", _) => {
            cfg.lane_change_variant = match raw {
                "base" => LaneChangeVariant::Base,
                "brute_force" => LaneChangeVariant::BruteForce,
                "proportional" => LaneChangeVariant::Proportional,
                _ => {
                    return Err(ConfigError::new(
                        key,
                        raw,
                        "base, brute_force or proportional",
                    ))
                }
            }
        }
        ("lane_change_rule", _) => {
            cfg.lane_change_rule = match raw {
                "multiplicative" => LaneChangeRule::Multiplicative,
                "additive" => LaneChangeRule::MobilAdditive,
                _ => return Err(ConfigError::new(key, raw, "multiplicative or additive")),
            }
        }
        ("message_origin", _) => {
            cfg.message_origin = match raw {
                "obstacle" => MessageOrigin::Obstacle,
                "first_witness" => MessageOrigin::FirstWitness,
                _ => return Err(ConfigError::new(key, raw, "obstacle or first_witness")),
            }
        }
        (_, Kind::Real(unit)) => {
            let v = real(unit)?;
            let slot = real_field(cfg, key).expect("every real key has a field");
            *slot = v;
        }
        _ => unreachable!("key table and assign disagree on `{key}`"),
    }
    Ok(())
}

fn real_field<'a>(cfg: &'a mut SimConfig, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "field_length" => &mut cfg.field_length,
        "obstacle_position" => &mut cfg.obstacle_position,
        "traffic_load" => &mut cfg.traffic_load,
        "speed_limit" => &mut cfg.speed_limit,
        "dt" => &mut cfg.dt,
        "duration" => &mut cfg.duration,
        "warm_up" => &mut cfg.warm_up,
        "vehicle_length" => &mut cfg.vehicle_length,
        "max_accel" => &mut cfg.driver.max_accel,
        "comfortable_brake" => &mut cfg.driver.comfortable_brake,
        "time_headway" => &mut cfg.driver.time_headway,
        "min_gap" => &mut cfg.driver.min_gap,
        "accel_exponent" => &mut cfg.driver.accel_exponent,
        "politeness" => &mut cfg.driver.politeness,
        "change_threshold" => &mut cfg.driver.change_threshold,
        "lane_bias" => &mut cfg.driver.lane_bias,
        "diff_cap" => &mut cfg.driver.diff_cap,
        "vsl_reduction" => &mut cfg.driver.vsl_reduction,
        "tx_power" => &mut cfg.radio.tx_power,
        "gain_tx" => &mut cfg.radio.gain_tx,
        "gain_rx" => &mut cfg.radio.gain_rx,
        "wavelength" => &mut cfg.radio.wavelength,
        "system_loss" => &mut cfg.radio.system_loss,
        "tx_range" => &mut cfg.radio.tx_range,
        "interference_range" => &mut cfg.radio.interference_range,
        "reception_prob" => &mut cfg.radio.reception_prob,
        "alpha" => &mut cfg.policy.alpha,
        "brute_force_v" => &mut cfg.brute_force_extra,
        "safe_brake" => &mut cfg.safe_brake,
        "lane_change_cooldown" => &mut cfg.lane_change_cooldown,
        "beacon_interval" => &mut cfg.beacon_interval,
        "ttl_time" => &mut cfg.ttl_time,
        "ttl_distance" => &mut cfg.ttl_distance,
        "origin_window" => &mut cfg.origin_window,
        "origin_velocity_threshold" => &mut cfg.origin_velocity_threshold,
        "origin_time_window" => &mut cfg.origin_time_window,
        _ => return None,
    })
}

/// Applies the assignments in `text` on top of `base`, then validates.
/// A key may appear at most once.
pub fn apply_config(base: SimConfig, text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = base;
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(ConfigError::new(
                format!("line {}", lineno + 1),
                line,
                "of the form `key = value`",
            ));
        };
        let key = key.trim();
        let raw = raw.trim().trim_matches('"');
        let Some(&(_, kind)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(ConfigError::new(key, raw, "a known key"));
        };
        if !seen.insert(key.to_owned()) {
            return Err(ConfigError::new(key, raw, "assigned only once"));
        }
        assign(&mut cfg, key, kind, raw)?;
    }
    cfg.driver.desired_velocity = cfg.speed_limit;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a complete document; keys not mentioned keep their defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    apply_config(SimConfig::default(), text)
}

/// Every key with its SI value, one `key = value` per entry. Feeding the
/// lines back through [`parse_config`] reproduces `cfg` exactly.
pub fn echo(cfg: &SimConfig) -> Vec<String> {
    let mut c = cfg.clone();
    KEYS.iter()
        .map(|&(key, kind)| {
            let value = match (key, kind) {
                ("obstacle_lane", _) => c.obstacle_lane.to_string(),
                ("seed", _) => c.seed.to_string(),
                ("backoff_min", _) => c.radio.backoff_min.to_string(),
                ("backoff_max", _) => c.radio.backoff_max.to_string(),
                ("max_backoff_stage", _) => c.radio.max_backoff_stage.to_string(),
                ("sample_every", _) => c.sample_every.to_string(),
                ("vsl_enabled", _) => c.vsl_enabled.to_string(),
                ("communication_enabled", _) => c.communication_enabled.to_string(),
                ("stop_at_origin", _) => c.stop_at_origin.to_string(),
                ("log_receptions", _) => c.log_receptions.to_string(),
                ("policy", _) => policy_name(c.policy.kind).to_owned(),
                ("lane_change_variant", _) => variant_name(c.lane_change_variant).to_owned(),
                ("lane_change_rule", _) => rule_name(c.lane_change_rule).to_owned(),
                ("message_origin", _) => origin_name(c.message_origin).to_owned(),
                _ => real_field(&mut c, key)
                    .map(|v| format!("{v:?}"))
                    .expect("every real key has a field"),
            };
            format!("{key} = {value}")
        })
        .collect()
}
