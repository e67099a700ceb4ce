//! Multi-seed A/B runs on a private thread pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, SimConfig, Simulation};
use crate::error::SimError;
use crate::metrics::median;
use crate::output::Row;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Comms,
    Control,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Comms => "comms",
            Arm::Control => "control",
        }
    }
}

/// Headline numbers of one finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub total_exits: u64,
    pub total_arrivals: u64,
    pub time_to_gridlock: Option<f64>,
    pub origin_onset: Option<f64>,
    pub end_time: f64,
}

/// Runs one simulation without per-tick samples or reception records.
pub fn summarize(cfg: &SimConfig) -> Result<RunSummary, SimError> {
    let cfg = SimConfig {
        sample_every: u32::MAX,
        log_receptions: false,
        ..cfg.clone()
    };
    let mut sim = Simulation::new(cfg)?;
    sim.run_to_end()?;
    let time_to_gridlock = sim
        .log()
        .of_kind(EventKind::Gridlock)
        .next()
        .map(|e| e.time);
    Ok(RunSummary {
        total_exits: sim.exits(),
        total_arrivals: sim.arrivals(),
        time_to_gridlock,
        origin_onset: sim.origin_congested_at(),
        end_time: sim.now(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// `seed` or `median`.
    pub row: String,
    pub seed: Option<u64>,
    pub arm: String,
    pub total_exits: Option<f64>,
    pub time_to_gridlock_s: Option<f64>,
    pub origin_onset_s: Option<f64>,
    pub end_time_s: Option<f64>,
    pub error: String,
}

impl Row for SummaryRow {
    const COLUMNS: &'static [&'static str] = &[
        "row",
        "seed",
        "arm",
        "total_exits",
        "time_to_gridlock_s",
        "origin_onset_s",
        "end_time_s",
        "error",
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub arm: Arm,
    pub outcome: Result<RunSummary, String>,
}

/// Runs `cfg` with and without communication for every seed using up to
/// `jobs` threads. The result is sorted by (seed, arm) and does not depend
/// on `jobs`.
pub fn run_pairs(cfg: &SimConfig, seeds: &[u64], jobs: usize) -> Vec<SeedResult> {
    let tasks: Vec<(u64, Arm)> = seeds
        .iter()
        .flat_map(|&s| [(s, Arm::Comms), (s, Arm::Control)])
        .collect();
    let run = |&(seed, arm): &(u64, Arm)| {
        let c = SimConfig {
            seed,
            communication_enabled: arm == Arm::Comms && cfg.communication_enabled,
            ..cfg.clone()
        };
        SeedResult {
            seed,
            arm,
            outcome: summarize(&c).map_err(|e| e.to_string()),
        }
    };
    let mut out: Vec<SeedResult> = match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| tasks.par_iter().map(run).collect()),
        Err(_) => tasks.iter().map(run).collect(),
    };
    out.sort_by_key(|r| (r.seed, r.arm));
    out
}

/// Median of optional event times where a missing time means the event did
/// not happen before the run ended. Such runs sort last; if the median falls
/// on them it is reported as missing.
pub fn median_censored(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    median(&v).filter(|m| m.is_finite())
}

/// Per-seed rows followed by one median row per arm. Failed runs are listed
/// with their error and left out of the medians.
pub fn summary_rows(results: &[SeedResult]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = results
        .iter()
        .map(|r| match &r.outcome {
            Ok(s) => SummaryRow {
                row: "seed".into(),
                seed: Some(r.seed),
                arm: r.arm.as_str().into(),
                total_exits: Some(s.total_exits as f64),
                time_to_gridlock_s: s.time_to_gridlock,
                origin_onset_s: s.origin_onset,
                end_time_s: Some(s.end_time),
                error: String::new(),
            },
            Err(e) => SummaryRow {
                row: "seed".into(),
                seed: Some(r.seed),
                arm: r.arm.as_str().into(),
                total_exits: None,
                time_to_gridlock_s: None,
                origin_onset_s: None,
                end_time_s: None,
                error: e.clone(),
            },
        })
        .collect();
    for arm in [Arm::Comms, Arm::Control] {
        let ok: Vec<&RunSummary> = results
            .iter()
            .filter(|r| r.arm == arm)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        let exits: Vec<f64> = ok.iter().map(|s| s.total_exits as f64).collect();
        let gridlock: Vec<Option<f64>> = ok.iter().map(|s| s.time_to_gridlock).collect();
        let onset: Vec<Option<f64>> = ok.iter().map(|s| s.origin_onset).collect();
        let ends: Vec<f64> = ok.iter().map(|s| s.end_time).collect();
        rows.push(SummaryRow {
            row: "median".into(),
            seed: None,
            arm: arm.as_str().into(),
            total_exits: median(&exits),
            time_to_gridlock_s: median_censored(&gridlock),
            origin_onset_s: median_censored(&onset),
            end_time_s: median(&ends),
            error: String::new(),
        });
    }
    rows
}

/// Parses `N..M` (inclusive) or a single seed.
pub fn parse_seed_range(s: &str) -> Option<Vec<u64>> {
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (a <= b).then(|| (a..=b).collect())
        }
        None => Some(vec![s.trim().parse().ok()?]),
    }
}
