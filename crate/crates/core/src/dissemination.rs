//! Epidemic dissemination of the obstacle warning.
//!
//! Every vehicle keeps a [`MessageLedger`] of how often it has heard each
//! message from vehicles ahead and behind. Each reception event triggers one
//! rebroadcast decision under the configured [`PolicyKind`]; a positive
//! decision queues the frame on the vehicle's MAC.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::DisseminationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MsgId(pub u32);

/// Direction along the road in which a message is meant to travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Toward position 0, against the traffic flow.
    Backward,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarningMessage {
    pub id: MsgId,
    /// Obstacle location, m.
    pub origin_position: f64,
    /// Creation time of this copy, s.
    pub created_at: f64,
    pub ttl_time: f64,
    pub ttl_distance: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    /// Receptions from vehicles ahead (higher position).
    pub n_front: u32,
    /// Receptions from vehicles behind.
    pub n_back: u32,
    pub first_received_at: f64,
    pub has_rebroadcast: bool,
    /// Most recent copy heard; relays forward this copy.
    pub latest: WarningMessage,
}

impl LedgerEntry {
    /// `(n_k, n_k_opp)`: receptions from the side the message is heading
    /// toward, and from the opposite side.
    pub fn directional_counts(&self) -> (u32, u32) {
        match self.latest.direction {
            Direction::Backward => (self.n_back, self.n_front),
            Direction::Forward => (self.n_front, self.n_back),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MessageLedger {
    entries: BTreeMap<MsgId, LedgerEntry>,
}

impl MessageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: MsgId) -> Option<&LedgerEntry> {
        self.entries.get(&id)
    }

    pub fn get_mut(&mut self, id: MsgId) -> Option<&mut LedgerEntry> {
        self.entries.get_mut(&id)
    }

    /// A vehicle is infected once it holds any message.
    pub fn is_infected(&self) -> bool {
        !self.entries.is_empty()
    }

    /// Records a message this vehicle created itself, without touching the
    /// reception counts. Returns `true` if it was not yet known.
    pub fn originate(&mut self, msg: &WarningMessage, now: f64) -> bool {
        let mut first = false;
        let entry = self.entries.entry(msg.id).or_insert_with(|| {
            first = true;
            LedgerEntry {
                n_front: 0,
                n_back: 0,
                first_received_at: now,
                has_rebroadcast: false,
                latest: *msg,
            }
        });
        if msg.created_at > entry.latest.created_at {
            entry.latest = *msg;
        }
        first
    }

    /// Counts one reception of `msg` from a sender at `sender_pos`. Returns
    /// `true` when this is the first contact with the message.
    pub fn record_reception(
        &mut self,
        msg: &WarningMessage,
        sender_pos: f64,
        my_pos: f64,
        now: f64,
    ) -> Result<bool, DisseminationError> {
        if sender_pos == my_pos {
            return Err(DisseminationError::PositionTie(my_pos));
        }
        let from_front = sender_pos > my_pos;
        let mut first = false;
        let entry = self.entries.entry(msg.id).or_insert_with(|| {
            first = true;
            LedgerEntry {
                n_front: 0,
                n_back: 0,
                first_received_at: now,
                has_rebroadcast: false,
                latest: *msg,
            }
        });
        if from_front {
            entry.n_front += 1;
        } else {
            entry.n_back += 1;
        }
        if msg.created_at > entry.latest.created_at {
            entry.latest = *msg;
        }
        Ok(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Every vehicle relays each message exactly once.
    Flooding,
    /// Directional edge detection on reception counts.
    Edge,
    /// Relay probability grows with distance from the sender.
    Distance,
    /// The larger of the edge and distance probabilities.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisseminationPolicy {
    pub kind: PolicyKind,
    pub alpha: f64,
}

impl Default for DisseminationPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Mixed,
            alpha: 1.0,
        }
    }
}

impl DisseminationPolicy {
    pub fn validate(&self) -> Result<(), DisseminationError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(DisseminationError::InvalidParam {
                name: "alpha",
                value: self.alpha,
                constraint: "> 0",
            });
        }
        Ok(())
    }
}

/// Bidirectional rebroadcast probability from front/back reception counts.
pub fn rebroadcast_prob_bidirectional(n_f: u32, n_b: u32, alpha: f64) -> f64 {
    if n_f == 0 || n_b == 0 {
        return 1.0;
    }
    let diff = (n_f as f64 - n_b as f64).abs();
    1.0 - (-alpha * diff / (n_f as f64 + n_b as f64)).exp()
}

/// Directional rebroadcast probability. `n_k` counts receptions from the
/// side the message is travelling toward; zero means this vehicle is at the
/// edge of the informed group.
pub fn rebroadcast_prob_directional(n_k: u32, n_k_opp: u32, alpha: f64) -> f64 {
    if n_k == 0 {
        return 1.0;
    }
    1.0 - (-alpha * n_k as f64 / (n_k as f64 + n_k_opp as f64)).exp()
}

/// Distance-weighted persistence `d / Rc`.
pub fn rebroadcast_prob_distance(d: f64, tx_range: f64) -> Result<f64, DisseminationError> {
    if d > tx_range {
        return Err(DisseminationError::OutOfRange {
            distance: d,
            range: tx_range,
        });
    }
    Ok((d / tx_range).clamp(0.0, 1.0))
}

pub fn rebroadcast_prob_mixed(
    n_k: u32,
    n_k_opp: u32,
    alpha: f64,
    d: f64,
    tx_range: f64,
) -> Result<f64, DisseminationError> {
    let edge = rebroadcast_prob_directional(n_k, n_k_opp, alpha);
    let distance = rebroadcast_prob_distance(d, tx_range)?;
    Ok(edge.max(distance))
}

/// Whether the copy `msg` is still worth relaying from `my_pos` at `now`.
pub fn ttl_alive(msg: &WarningMessage, now: f64, my_pos: f64) -> bool {
    now - msg.created_at <= msg.ttl_time && (my_pos - msg.origin_position).abs() <= msg.ttl_distance
}

/// Where and when a reception happened, as seen by the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptionContext {
    pub now: f64,
    pub my_pos: f64,
    pub sender_distance: f64,
    pub tx_range: f64,
}

/// One rebroadcast decision for one reception event. A positive answer marks
/// the ledger entry as rebroadcast; under flooding that makes every later
/// answer negative.
pub fn should_rebroadcast<R: Rng + ?Sized>(
    policy: &DisseminationPolicy,
    entry: &mut LedgerEntry,
    ctx: &ReceptionContext,
    rng: &mut R,
) -> Result<bool, DisseminationError> {
    if !ttl_alive(&entry.latest, ctx.now, ctx.my_pos) {
        return Ok(false);
    }
    let (n_k, n_opp) = entry.directional_counts();
    let p = match policy.kind {
        PolicyKind::Flooding => {
            if entry.has_rebroadcast {
                return Ok(false);
            }
            1.0
        }
        PolicyKind::Edge => rebroadcast_prob_directional(n_k, n_opp, policy.alpha),
        PolicyKind::Distance => rebroadcast_prob_distance(ctx.sender_distance, ctx.tx_range)?,
        PolicyKind::Mixed => {
            rebroadcast_prob_mixed(n_k, n_opp, policy.alpha, ctx.sender_distance, ctx.tx_range)?
        }
    };
    let go = p >= 1.0 || rng.gen::<f64>() < p;
    if go {
        entry.has_rebroadcast = true;
    }
    Ok(go)
}
