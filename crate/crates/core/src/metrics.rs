//! Pure metric extraction from event logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Aux, EventKind, EventLog, OriginMonitor, SimConfig};
use crate::output::Row;

pub const DEFAULT_EXIT_BIN: f64 = 30.0;
pub const DEFAULT_GRID_X_BIN: f64 = 10.0;
pub const DEFAULT_GRID_T_BIN: f64 = 30.0;
/// Cells with a mean below this many m/s count as congested.
pub const SLOW_VELOCITY: f64 = 5.0;

/// Cumulative exits and arrivals at the end of one time bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRow {
    pub t_end_s: f64,
    pub exits: u64,
    pub arrivals: u64,
    /// `exits / arrivals`, 0 before the first arrival.
    pub ratio: f64,
}

impl Row for ExitRow {
    const COLUMNS: &'static [&'static str] = &["t_end_s", "exits", "arrivals", "ratio"];
}

/// Bins run from 0 to the last event; an event at exactly a bin edge falls
/// into the bin that ends there.
pub fn exit_series(log: &EventLog, bin: f64) -> Vec<ExitRow> {
    assert!(bin > 0.0, "bin width must be positive");
    let n_bins = (log.end_time() / bin).ceil() as usize;
    let mut exits = vec![0u64; n_bins];
    let mut arrivals = vec![0u64; n_bins];
    for e in &log.events {
        let slot = match e.kind {
            EventKind::Exit => &mut exits,
            EventKind::Injection => &mut arrivals,
            _ => continue,
        };
        let i = ((e.time / bin).ceil() as usize)
            .saturating_sub(1)
            .min(n_bins - 1);
        slot[i] += 1;
    }
    let (mut ce, mut ca) = (0, 0);
    (0..n_bins)
        .map(|i| {
            ce += exits[i];
            ca += arrivals[i];
            ExitRow {
                t_end_s: (i + 1) as f64 * bin,
                exits: ce,
                arrivals: ca,
                ratio: if ca == 0 { 0.0 } else { ce as f64 / ca as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeRecord {
    pub time_s: f64,
    pub vehicle_id: u32,
    pub position_m: f64,
    pub from_lane: u8,
    pub to_lane: u8,
    pub infected: bool,
}

impl Row for LaneChangeRecord {
    const COLUMNS: &'static [&'static str] = &[
        "time_s",
        "vehicle_id",
        "position_m",
        "from_lane",
        "to_lane",
        "infected",
    ];
}

pub fn lane_change_positions(log: &EventLog) -> Vec<LaneChangeRecord> {
    log.of_kind(EventKind::LaneChange)
        .filter_map(|e| match e.aux {
            Aux::LaneChange { to_lane, infected } => Some(LaneChangeRecord {
                time_s: e.time,
                vehicle_id: e.vehicle?.0,
                position_m: e.position,
                from_lane: e.lane?,
                to_lane,
                infected,
            }),
            _ => None,
        })
        .collect()
}

/// Only changes out of the obstacle lane made before reaching the obstacle.
pub fn upstream_escapes(records: &[LaneChangeRecord], cfg: &SimConfig) -> Vec<LaneChangeRecord> {
    records
        .iter()
        .filter(|r| r.from_lane == cfg.obstacle_lane && r.position_m < cfg.obstacle_position)
        .copied()
        .collect()
}

/// Median distance upstream of the obstacle of the escapes made at or after
/// `from` seconds.
pub fn median_escape_distance(
    records: &[LaneChangeRecord],
    cfg: &SimConfig,
    from: f64,
) -> Option<f64> {
    let d: Vec<f64> = upstream_escapes(records, cfg)
        .iter()
        .filter(|r| r.time_s >= from)
        .map(|r| cfg.obstacle_position - r.position_m)
        .collect();
    median(&d)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cell {
    pub sum: f64,
    pub n: u64,
}

impl Cell {
    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Mean sampled velocity per (time bin, position bin). Cells without samples
/// are absent rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub x_bin: f64,
    pub t_bin: f64,
    pub cells: BTreeMap<(u32, u32), Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub t_bin: u32,
    pub x_bin: u32,
    pub mean_v: f64,
    pub n: u64,
}

impl Row for GridRow {
    const COLUMNS: &'static [&'static str] = &["t_bin", "x_bin", "mean_v", "n"];
}

impl VelocityGrid {
    pub fn get(&self, t_bin: u32, x_bin: u32) -> Option<f64> {
        self.cells.get(&(t_bin, x_bin)).and_then(Cell::mean)
    }

    pub fn rows(&self) -> Vec<GridRow> {
        self.cells
            .iter()
            .filter(|(_, c)| c.n > 0)
            .map(|(&(t_bin, x_bin), c)| GridRow {
                t_bin,
                x_bin,
                mean_v: c.sum / c.n as f64,
                n: c.n,
            })
            .collect()
    }

    /// Number of cells in time bin `t_bin` whose mean is below `threshold`.
    pub fn slow_cells(&self, t_bin: u32, threshold: f64) -> usize {
        self.cells
            .range((t_bin, 0)..=(t_bin, u32::MAX))
            .filter(|(_, c)| c.mean().is_some_and(|m| m < threshold))
            .count()
    }

    /// Lowest position bin (furthest upstream) of a slow cell in `t_bin`.
    pub fn slow_tail(&self, t_bin: u32, threshold: f64) -> Option<u32> {
        self.cells
            .range((t_bin, 0)..=(t_bin, u32::MAX))
            .find(|(_, c)| c.mean().is_some_and(|m| m < threshold))
            .map(|(&(_, x), _)| x)
    }

    /// Length in metres of the run of slow cells that starts in the bin just
    /// upstream of `obstacle` and extends toward the origin. Empty cells end
    /// the run.
    pub fn slow_extent(&self, t_bin: u32, obstacle: f64, threshold: f64) -> f64 {
        let first = (obstacle / self.x_bin).ceil() as u32;
        let mut n = 0;
        for x in (0..first).rev() {
            match self.get(t_bin, x) {
                Some(m) if m < threshold => n += 1,
                _ => break,
            }
        }
        f64::from(n) * self.x_bin
    }

    /// Slow cells summed over the first `t_bins` time bins.
    pub fn slow_area(&self, t_bins: u32, threshold: f64) -> usize {
        (0..t_bins).map(|t| self.slow_cells(t, threshold)).sum()
    }

    /// Start of the first time bin with a slow cell within `reach` metres
    /// upstream of `obstacle`.
    pub fn congestion_start(&self, obstacle: f64, reach: f64, threshold: f64) -> Option<f64> {
        let lo = ((obstacle - reach).max(0.0) / self.x_bin) as u32;
        let hi = (obstacle / self.x_bin).ceil() as u32;
        self.cells
            .iter()
            .find(|(&(_, x), c)| x >= lo && x < hi && c.mean().is_some_and(|m| m < threshold))
            .map(|(&(t, _), _)| f64::from(t) * self.t_bin)
    }

    pub fn time_bins(&self) -> u32 {
        self.cells.keys().map(|&(t, _)| t + 1).max().unwrap_or(0)
    }
}

pub fn velocity_grid(log: &EventLog, x_bin: f64, t_bin: f64) -> VelocityGrid {
    assert!(x_bin > 0.0 && t_bin > 0.0, "bin sizes must be positive");
    let mut cells: BTreeMap<(u32, u32), Cell> = BTreeMap::new();
    for e in log.of_kind(EventKind::Sample) {
        let key = (
            (e.time / t_bin) as u32,
            (e.position.max(0.0) / x_bin) as u32,
        );
        let c = cells.entry(key).or_default();
        c.sum += e.velocity;
        c.n += 1;
    }
    VelocityGrid {
        x_bin,
        t_bin,
        cells,
    }
}

/// Time at which the road origin first congests, recomputed from samples.
pub fn origin_onset(log: &EventLog, cfg: &SimConfig) -> Option<f64> {
    let mut m = OriginMonitor::new(cfg);
    for e in log.of_kind(EventKind::Sample) {
        m.observe(e.time, e.position, e.velocity);
    }
    m.advance(log.end_time());
    m.congested_at()
}

pub fn time_to_gridlock(log: &EventLog) -> Option<f64> {
    log.of_kind(EventKind::Gridlock).next().map(|e| e.time)
}

pub fn total_exits(log: &EventLog) -> usize {
    log.count(EventKind::Exit)
}

/// Median of the values, `None` for an empty slice. NaNs are not allowed.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Event;
    use crate::traffic::VehicleId;

    fn ev(time: f64, kind: EventKind, position: f64, velocity: f64) -> Event {
        Event {
            time,
            kind,
            vehicle: Some(VehicleId(0)),
            lane: Some(0),
            position,
            velocity,
            aux: Aux::None,
        }
    }

    #[test]
    fn exit_series_counts_and_ratio() {
        let mut log = EventLog::default();
        for i in 0..100 {
            log.events
                .push(ev(i as f64 * 0.25, EventKind::Injection, 0.0, 0.0));
        }
        for i in 0..50 {
            log.events
                .push(ev(30.0 + i as f64 * 0.5, EventKind::Exit, 1500.0, 30.0));
        }
        log.events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let s = exit_series(&log, 30.0);
        let last = s.last().unwrap();
        assert_eq!((last.exits, last.arrivals, last.ratio), (50, 100, 0.5));
        assert_eq!(s[0].exits, 1);
        assert!(s.windows(2).all(|w| w[1].exits >= w[0].exits));
    }

    #[test]
    fn no_exits_gives_zero_column() {
        let log = EventLog {
            header: vec![],
            events: vec![
                ev(10.0, EventKind::Injection, 0.0, 0.0),
                ev(95.0, EventKind::Sample, 5.0, 1.0),
            ],
        };
        let s = exit_series(&log, 30.0);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|r| r.exits == 0));
    }

    #[test]
    fn grid_constant_velocity_and_empty_cells() {
        let mut log = EventLog::default();
        for i in 0..40 {
            let t = i as f64 * 0.25;
            log.events.push(ev(t, EventKind::Sample, 20.0 * t, 20.0));
        }
        let g = velocity_grid(&log, 10.0, 30.0);
        assert!(g.rows().iter().all(|r| r.mean_v == 20.0));
        assert_eq!(g.get(0, 50), None);
        assert_eq!(g.rows().len(), g.cells.len());
    }

    #[test]
    fn slow_region_measures() {
        let mut log = EventLog::default();
        // t bin 0: slow at 980..1000 m. t bin 1: slow at 950..1000 m except a
        // fast cell at 960 m, plus an isolated slow cell at 100 m.
        for (t, x, v) in [
            (5.0, 985.0, 1.0),
            (5.0, 995.0, 2.0),
            (5.0, 975.0, 20.0),
            (35.0, 995.0, 0.0),
            (35.0, 985.0, 0.0),
            (35.0, 975.0, 3.0),
            (35.0, 965.0, 30.0),
            (35.0, 955.0, 1.0),
            (35.0, 105.0, 1.0),
            (35.0, 1005.0, 0.0),
        ] {
            log.events.push(ev(t, EventKind::Sample, x, v));
        }
        let g = velocity_grid(&log, 10.0, 30.0);
        assert_eq!(g.slow_extent(0, 1000.0, SLOW_VELOCITY), 20.0);
        assert_eq!(g.slow_extent(1, 1000.0, SLOW_VELOCITY), 30.0);
        assert_eq!(g.slow_area(1, SLOW_VELOCITY), 2);
        assert_eq!(g.slow_area(2, SLOW_VELOCITY), 8);
        assert_eq!(g.congestion_start(1000.0, 100.0, SLOW_VELOCITY), Some(0.0));
        assert_eq!(g.congestion_start(200.0, 100.0, SLOW_VELOCITY), Some(30.0));
        assert_eq!(g.congestion_start(500.0, 100.0, SLOW_VELOCITY), None);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
