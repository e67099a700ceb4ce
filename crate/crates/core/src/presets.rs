//! Named scenarios, each paired with a no-communication control.

use crate::dissemination::PolicyKind;
use crate::engine::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub description: &'static str,
    /// Arm with communication enabled.
    pub config: SimConfig,
}

impl ScenarioPreset {
    /// Same scenario with the radio switched off.
    pub fn control(&self) -> SimConfig {
        SimConfig {
            communication_enabled: false,
            ..self.config.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> (SimConfig, SimConfig) {
        let on = SimConfig {
            seed,
            ..self.config.clone()
        };
        let off = SimConfig {
            seed,
            ..self.control()
        };
        (on, off)
    }
}

/// Motorway scenario: 4400 veh/h at 120 km/h, Rc = 100 m, mixed policy,
/// proportional lane changes, 900 s.
pub fn scenario_b() -> SimConfig {
    SimConfig {
        traffic_load: 4400.0,
        speed_limit: 120.0 / 3.6,
        duration: 900.0,
        policy: crate::dissemination::DisseminationPolicy {
            kind: PolicyKind::Mixed,
            alpha: 1.0,
        },
        ..SimConfig::default()
    }
}

pub const NAMES: [&str; 5] = [
    "velocity_urban",
    "velocity_motorway",
    "lane_change_position",
    "protocol_comparison",
    "velocity_grid",
];

pub fn preset(name: &str) -> Option<ScenarioPreset> {
    let b = scenario_b();
    let p = match name {
        "velocity_urban" => ScenarioPreset {
            name: "velocity_urban",
            description: "scenario B at a 50 km/h speed limit",
            config: SimConfig {
                speed_limit: 50.0 / 3.6,
                ..b
            },
        },
        "velocity_motorway" => ScenarioPreset {
            name: "velocity_motorway",
            description: "scenario B: 4400 veh/h, 120 km/h, 900 s",
            config: b,
        },
        "lane_change_position" => ScenarioPreset {
            name: "lane_change_position",
            description: "scenario B, lane-change locations over 900 s",
            config: b,
        },
        "protocol_comparison" => ScenarioPreset {
            name: "protocol_comparison",
            description: "scenario B stopped once the road origin congests",
            config: SimConfig {
                stop_at_origin: true,
                duration: 1800.0,
                ..b
            },
        },
        "velocity_grid" => ScenarioPreset {
            name: "velocity_grid",
            description: "scenario B for 600 s, sampled for the velocity grid",
            config: SimConfig {
                duration: 600.0,
                ..b
            },
        },
        _ => return None,
    };
    Some(p)
}

pub fn all() -> Vec<ScenarioPreset> {
    NAMES.iter().filter_map(|n| preset(n)).collect()
}
