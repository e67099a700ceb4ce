use std::fmt;
use std::io::Write;

use crate::dissemination::MsgId;
use crate::traffic::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Injection,
    Exit,
    LaneChange,
    Transmission,
    Reception,
    Infection,
    Gridlock,
    /// Per-tick position/velocity sample of one vehicle.
    Sample,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Injection => "injection",
            EventKind::Exit => "exit",
            EventKind::LaneChange => "lane_change",
            EventKind::Transmission => "transmission",
            EventKind::Reception => "reception",
            EventKind::Infection => "infection",
            EventKind::Gridlock => "gridlock",
            EventKind::Sample => "sample",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aux {
    None,
    Message(MsgId),
    LaneChange { to_lane: u8, infected: bool },
}

impl fmt::Display for Aux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aux::None => Ok(()),
            Aux::Message(m) => write!(f, "msg={}", m.0),
            Aux::LaneChange { to_lane, infected } => {
                write!(f, "to_lane={};infected={}", to_lane, u8::from(*infected))
            }
        }
    }
}

/// One timestamped record. `lane` is the physical lane index; for lane
/// changes it is the lane being left. Obstacle beacons carry no vehicle id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle: Option<VehicleId>,
    pub lane: Option<u8>,
    pub position: f64,
    pub velocity: f64,
    pub aux: Aux,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    /// Config echo lines, `key = value`.
    pub header: Vec<String>,
    pub events: Vec<Event>,
}

pub const EVENT_COLUMNS: &str = "time_s,event_kind,vehicle_id,lane,position_m,velocity_mps,aux";

impl EventLog {
    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    /// Time of the last recorded event, or 0 for an empty log.
    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Writes the log as CSV with `#`-prefixed header lines. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for line in &self.header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{EVENT_COLUMNS}")?;
        for e in &self.events {
            write!(w, "{},{},", e.time, e.kind)?;
            if let Some(v) = e.vehicle {
                write!(w, "{}", v.0)?;
            }
            w.write_all(b",")?;
            if let Some(l) = e.lane {
                write!(w, "{l}")?;
            }
            writeln!(w, ",{},{},{}", e.position, e.velocity, e.aux)?;
        }
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }
}
