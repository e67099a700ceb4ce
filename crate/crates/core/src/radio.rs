//! Physical layer and a simplified 802.11-style broadcast MAC.
//!
//! Range is governed by a fixed transmission range `Rc` (reception possible)
//! and interference range `Ri` (medium sensed busy). The MAC has no
//! inter-frame spacing and never freezes its backoff counter: a pending
//! frame counts down one tick per simulation step regardless of the medium,
//! and only when the counter reaches zero is the medium checked.

use std::f64::consts::PI;

use rand::Rng;

use crate::dissemination::MsgId;
use crate::error::RadioError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    /// Transmit power, W.
    pub tx_power: f64,
    pub gain_tx: f64,
    pub gain_rx: f64,
    /// Carrier wavelength, m.
    pub wavelength: f64,
    /// System loss factor, >= 1.
    pub system_loss: f64,
    /// Transmission range `Rc`, m.
    pub tx_range: f64,
    /// Interference range `Ri`, m.
    pub interference_range: f64,
    /// Probability that an in-range receiver decodes a frame.
    pub reception_prob: f64,
    /// Backoff window lower bound, ticks.
    pub backoff_min: u32,
    /// Backoff window upper bound, ticks.
    pub backoff_max: u32,
    pub max_backoff_stage: u32,
}

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power: 0.1,
            gain_tx: 1.0,
            gain_rx: 1.0,
            // 5.9 GHz
            wavelength: 0.0508,
            system_loss: 1.0,
            tx_range: 100.0,
            interference_range: 200.0,
            reception_prob: 0.95,
            backoff_min: 0,
            backoff_max: 15,
            max_backoff_stage: 5,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        let bad = |name, value: f64, constraint| {
            Err(RadioError::InvalidParam {
                name,
                value,
                constraint,
            })
        };
        if !(self.tx_power > 0.0) {
            return bad("tx_power", self.tx_power, "> 0");
        }
        if !(self.gain_tx > 0.0) {
            return bad("gain_tx", self.gain_tx, "> 0");
        }
        if !(self.gain_rx > 0.0) {
            return bad("gain_rx", self.gain_rx, "> 0");
        }
        if !(self.wavelength > 0.0) {
            return bad("wavelength", self.wavelength, "> 0");
        }
        if !(self.system_loss >= 1.0) {
            return bad("system_loss", self.system_loss, ">= 1");
        }
        if !(self.tx_range > 0.0) || !self.tx_range.is_finite() {
            return bad("tx_range", self.tx_range, "> 0");
        }
        if !(self.interference_range >= self.tx_range) || !self.interference_range.is_finite() {
            return bad("interference_range", self.interference_range, ">= tx_range");
        }
        if !(0.0..=1.0).contains(&self.reception_prob) {
            return bad("reception_prob", self.reception_prob, "in [0, 1]");
        }
        if self.backoff_min > self.backoff_max {
            return bad("backoff_min", self.backoff_min as f64, "<= backoff_max");
        }
        // Keeps 2^stage * backoff_max well inside u64.
        if self.max_backoff_stage > 32 {
            return bad("max_backoff_stage", self.max_backoff_stage as f64, "<= 32");
        }
        Ok(())
    }

    /// Wavelength for a carrier frequency in Hz.
    pub fn wavelength_for(frequency_hz: f64) -> f64 {
        SPEED_OF_LIGHT / frequency_hz
    }

    /// Distance at which the Friis received power falls to the given receiver
    /// sensitivity. Lets a configuration specify power instead of range.
    pub fn range_for_sensitivity(&self, sensitivity_dbm: f64) -> f64 {
        let threshold_w = 10f64.powf(sensitivity_dbm / 10.0) / 1000.0;
        let numerator = self.tx_power * self.gain_tx * self.gain_rx * self.wavelength.powi(2);
        (numerator / ((4.0 * PI).powi(2) * self.system_loss * threshold_w)).sqrt()
    }
}

/// Free-space received power at distance `d`.
pub fn friis_received_power(d: f64, cfg: &RadioConfig) -> Result<f64, RadioError> {
    if !(d > 0.0) {
        return Err(RadioError::NonPositiveDistance(d));
    }
    let num = cfg.tx_power * cfg.gain_tx * cfg.gain_rx * cfg.wavelength * cfg.wavelength;
    Ok(num / ((4.0 * PI).powi(2) * d * d * cfg.system_loss))
}

/// Boundary-inclusive range test.
pub fn in_range(d: f64, range: f64) -> bool {
    d <= range
}

/// Whether any current transmitter lies within the interference range.
pub fn medium_busy(me: f64, transmitting: &[f64], cfg: &RadioConfig) -> bool {
    transmitting
        .iter()
        .any(|&x| in_range((x - me).abs(), cfg.interference_range))
}

/// Uniform integer from `2^k * [Bmin, Bmax]`, `k = min(stage, max_stage)`.
pub fn draw_backoff<R: Rng + ?Sized>(stage: u32, cfg: &RadioConfig, rng: &mut R) -> u64 {
    let k = stage.min(cfg.max_backoff_stage);
    let lo = (cfg.backoff_min as u64) << k;
    let hi = (cfg.backoff_max as u64) << k;
    rng.gen_range(lo..=hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MacState {
    /// Consecutive busy-medium deferrals.
    pub backoff_stage: u32,
    pub backoff_remaining: u64,
    pub pending: Option<MsgId>,
}

impl MacState {
    /// Queues a frame, drawing a fresh stage-0 backoff. Returns `false` and
    /// leaves the state alone if a frame is already pending.
    pub fn enqueue<R: Rng + ?Sized>(&mut self, msg: MsgId, cfg: &RadioConfig, rng: &mut R) -> bool {
        if self.pending.is_some() {
            return false;
        }
        self.pending = Some(msg);
        self.backoff_stage = 0;
        self.backoff_remaining = draw_backoff(0, cfg, rng);
        true
    }
}

/// Advances the MAC by one tick. Returns the new state and whether the
/// pending frame goes on air this tick.
pub fn mac_tick<R: Rng + ?Sized>(
    state: MacState,
    busy: bool,
    cfg: &RadioConfig,
    rng: &mut R,
) -> (MacState, bool) {
    if state.pending.is_none() {
        return (state, false);
    }
    if state.backoff_remaining > 0 {
        return (
            MacState {
                backoff_remaining: state.backoff_remaining - 1,
                ..state
            },
            false,
        );
    }
    if !busy {
        return (
            MacState {
                backoff_stage: 0,
                backoff_remaining: 0,
                pending: None,
            },
            true,
        );
    }
    let stage = (state.backoff_stage + 1).min(cfg.max_backoff_stage);
    (
        MacState {
            backoff_stage: stage,
            backoff_remaining: draw_backoff(stage, cfg, rng),
            pending: state.pending,
        },
        false,
    )
}

/// Bernoulli reception: only within `Rc`, then with `reception_prob`.
pub fn receive_roll<R: Rng + ?Sized>(d: f64, cfg: &RadioConfig, rng: &mut R) -> bool {
    if !in_range(d, cfg.tx_range) {
        return false;
    }
    rng.gen::<f64>() < cfg.reception_prob
}
