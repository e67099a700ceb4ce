use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("invalid driver parameter `{name}` = {value}: must be {constraint}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("gap to leader must be positive, got {gap} m")]
    NonPositiveGap { gap: f64 },
    #[error("velocity must be non-negative, got {velocity} m/s")]
    NegativeVelocity { velocity: f64 },
    #[error("position {position} m is not upstream of the obstacle at {obstacle} m")]
    PastObstacle { position: f64, obstacle: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("invalid radio parameter `{name}` = {value}: must be {constraint}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum DisseminationError {
    #[error("sender and receiver share position {0} m; direction is undefined")]
    PositionTie(f64),
    #[error("receiver at {distance} m is beyond the transmission range {range} m")]
    OutOfRange { distance: f64, range: f64 },
    #[error("invalid dissemination parameter `{name}` = {value}: must be {constraint}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

/// Validation failure for a scenario description; always names the key.
#[derive(Debug, Error, PartialEq)]
#[error("invalid config value for `{key}` = {value}: must be {constraint}")]
pub struct ConfigError {
    pub key: String,
    pub value: String,
    pub constraint: String,
}

impl ConfigError {
    pub fn new(
        key: impl Into<String>,
        value: impl ToString,
        constraint: impl Into<String>,
    ) -> Self {
        Self {
            key: key.into(),
            value: value.to_string(),
            constraint: constraint.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("lane ordering violated at t = {time} s in lane {lane}: {detail}")]
    Overlap {
        time: f64,
        lane: usize,
        detail: String,
    },
    #[error("invariant violated at t = {time} s: {detail}")]
    Invariant { time: f64, detail: String },
    #[error("traffic model error: {0}")]
    Traffic(#[from] TrafficError),
    #[error("dissemination error: {0}")]
    Dissemination(#[from] DisseminationError),
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
