//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::io::Write;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roadcast::dissemination::MsgId;
use roadcast::dissemination::{
    rebroadcast_prob_bidirectional, rebroadcast_prob_directional, PolicyKind,
};
use roadcast::engine::{SimConfig, Simulation};
use roadcast::metrics::{
    lane_change_positions, median, median_escape_distance, velocity_grid, DEFAULT_GRID_T_BIN,
    DEFAULT_GRID_X_BIN, SLOW_VELOCITY,
};
use roadcast::presets::{preset, scenario_b};
use roadcast::radio::{draw_backoff, friis_received_power, mac_tick, MacState, RadioConfig};
use roadcast::sweep::{median_censored, run_pairs, summarize, Arm};
use roadcast::traffic::{
    desired_gap, equilibrium_gap, idm_acceleration, integrate_kinematics, DriverParams, Lane,
    VehicleId, VehicleState,
};

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn seeds() -> Vec<u64> {
    SEEDS.collect()
}

fn report(n: u32, name: &str, o: &Outcome, elapsed: Duration) {
    // Written straight to stdout so the lines survive output capture.
    let line = format!(
        "criterion {n:>2} {name:<28} {} ({:.2} s) {}\n",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        o.detail
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

// Criterion 1

fn eq5(nf: f64, nb: f64, alpha: f64) -> f64 {
    if nf == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - (-alpha * (nf - nb).abs() / (nf + nb)).exp()
    }
}

fn eq6(nk: f64, nk_opp: f64, alpha: f64) -> f64 {
    if nk == 0.0 {
        1.0
    } else {
        1.0 - (-alpha * nk / (nk + nk_opp)).exp()
    }
}

fn formula_oracles() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for alpha in [0.5, 1.0, 2.0] {
        for a in 0..=10u32 {
            for b in 0..=10u32 {
                let bi = rebroadcast_prob_bidirectional(a, b, alpha);
                let di = rebroadcast_prob_directional(a, b, alpha);
                worst = worst
                    .max((bi - eq5(a.into(), b.into(), alpha)).abs())
                    .max((di - eq6(a.into(), b.into(), alpha)).abs());
                if (a == 0 || b == 0) && bi != 1.0 {
                    exact = false;
                }
                if a == 0 && di != 1.0 {
                    exact = false;
                }
                if a == b && a > 0 && bi != 0.0 {
                    exact = false;
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-12 && exact && t < Duration::from_secs(1),
        format!("max error {worst:e}, boundaries exact: {exact}"),
    )
}

// Criterion 2

/// Independent IDM evaluation used as the oracle.
fn idm_oracle(v: f64, s: f64, dv: f64, p: &DriverParams) -> f64 {
    let s_star = p.min_gap
        + (v * p.time_headway + v * dv / (2.0 * (p.max_accel * p.comfortable_brake).sqrt()))
            .max(0.0);
    p.max_accel * (1.0 - (v / p.desired_velocity).powf(p.accel_exponent) - (s_star / s).powi(2))
}

fn bisect_equilibrium(v: f64, p: &DriverParams) -> f64 {
    // Acceleration is increasing in the gap; bracket the root and halve.
    let (mut lo, mut hi) = (1e-6, 1.0);
    while idm_oracle(v, hi, 0.0, p) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if idm_oracle(v, mid, 0.0, p) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Platoon behind a leader held at `v_lead`; returns the gaps after `t` s.
fn platoon_gaps(v_lead: f64, n: usize, t: f64, p: &DriverParams) -> Vec<f64> {
    let dt = 0.25;
    let mk = |i: usize, x: f64, v: f64| VehicleState {
        id: VehicleId(i as u32),
        lane: Lane::Opposite,
        position: x,
        velocity: v,
        length: 5.0,
        infected: false,
        passed_obstacle: false,
        params: *p,
    };
    let mut cars: Vec<VehicleState> = (0..=n).map(|i| mk(i, -40.0 * i as f64, v_lead)).collect();
    for _ in 0..(t / dt) as usize {
        let acc: Vec<f64> = (0..cars.len())
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let (me, lead) = (&cars[i], &cars[i - 1]);
                let gap = lead.position - lead.length - me.position;
                idm_acceleration(me.velocity, gap, me.velocity - lead.velocity, p).unwrap()
            })
            .collect();
        cars = cars
            .iter()
            .zip(&acc)
            .map(|(c, &a)| integrate_kinematics(c, a, dt))
            .collect();
    }
    cars.windows(2)
        .map(|w| w[0].position - w[0].length - w[1].position)
        .collect()
}

fn idm_properties() -> Outcome {
    let start = Instant::now();
    let p = DriverParams::default();
    let fixed = idm_acceleration(p.desired_velocity, f64::INFINITY, 0.0, &p).unwrap() == 0.0;

    let mut worst: f64 = 0.0;
    for v in [2.0, 8.0, 15.0, 22.0, 28.0] {
        let oracle = bisect_equilibrium(v, &p);
        worst = worst.max((equilibrium_gap(v, &p) - oracle).abs());
        for g in platoon_gaps(v, 4, 1500.0, &p) {
            worst = worst.max((g - oracle).abs());
        }
    }

    let params = (
        0.1..3.0f64,
        0.1..5.0f64,
        1.0..50.0f64,
        0.0..3.0f64,
        0.0..10.0f64,
        1.0..8.0f64,
    );
    let mut runner = TestRunner::new(PropConfig::with_cases(10_000));
    let mono = runner.run(
        &(
            params,
            0.0..60.0f64,
            0.0..20.0f64,
            -20.0..20.0f64,
            0.0..20.0f64,
        ),
        |((a, b, v0, t, s0, d), v, dv_plus, dv, v_plus)| {
            let p = DriverParams {
                max_accel: a,
                comfortable_brake: b,
                desired_velocity: v0,
                time_headway: t,
                min_gap: s0,
                accel_exponent: d,
                ..DriverParams::default()
            };
            let base = desired_gap(v, dv, &p);
            prop_assert!(base >= s0);
            prop_assert!(desired_gap(v, dv + dv_plus, &p) >= base);
            if dv >= 0.0 {
                prop_assert!(desired_gap(v + v_plus, dv, &p) >= base);
            }
            Ok(())
        },
    );
    let t = start.elapsed();
    outcome(
        fixed && worst <= 1e-6 && mono.is_ok() && t < Duration::from_secs(5),
        format!(
            "fixed point exact: {fixed}, equilibrium gap error {worst:e} m, monotonicity: {}",
            mono.map_or_else(|e| e.to_string(), |_| "ok".into())
        ),
    )
}

// Criterion 3

fn friis() -> Outcome {
    let start = Instant::now();
    let cfg = RadioConfig::default();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let d = 1.0 + i as f64 * 0.999;
        let ratio =
            friis_received_power(2.0 * d, &cfg).unwrap() / friis_received_power(d, &cfg).unwrap();
        worst = worst.max((ratio - 0.25).abs());
    }
    let pts: Vec<(f64, f64)> = (0..=100)
        .map(|k| {
            let d = 10.0 * 100f64.powf(k as f64 / 100.0);
            (d.ln(), friis_received_power(d, &cfg).unwrap().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let t = start.elapsed();
    outcome(
        worst <= 1e-12 && (slope + 2.0).abs() <= 1e-9 && t < Duration::from_secs(1),
        format!("doubling error {worst:e}, log-log slope {slope:.12}"),
    )
}

// Criterion 4

fn mac_backoff() -> Outcome {
    let start = Instant::now();
    let cfg = RadioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut outside = 0;
    for stage in 0..=5u32 {
        let (lo, hi) = (
            (cfg.backoff_min as u64) << stage,
            (cfg.backoff_max as u64) << stage,
        );
        for _ in 0..10_000 {
            let b = draw_backoff(stage, &cfg, &mut rng);
            if b < lo || b > hi {
                outside += 1;
            }
        }
    }

    // Busy medium throughout: the timer must still count down by one per
    // tick, then a busy expiry raises the stage and draws a new backoff.
    let mut s = MacState {
        backoff_stage: 0,
        backoff_remaining: 6,
        pending: Some(MsgId(0)),
    };
    let mut seq = vec![s.backoff_remaining];
    let mut sent = false;
    for _ in 0..6 {
        let (n, tx) = mac_tick(s, true, &cfg, &mut rng);
        sent |= tx;
        s = n;
        seq.push(s.backoff_remaining);
    }
    let counted_down = seq == [6, 5, 4, 3, 2, 1, 0] && s.backoff_stage == 0 && !sent;
    let (after, tx) = mac_tick(s, true, &cfg, &mut rng);
    let deferred = !tx
        && after.backoff_stage == 1
        && after.pending.is_some()
        && after.backoff_remaining <= (cfg.backoff_max as u64) << 1;
    let (idle, tx_idle) = mac_tick(
        MacState {
            backoff_remaining: 0,
            ..after
        },
        false,
        &cfg,
        &mut rng,
    );
    let sends = tx_idle && idle.pending.is_none();
    let t = start.elapsed();
    outcome(
        outside == 0 && counted_down && deferred && sends && t < Duration::from_secs(5),
        format!(
            "draws outside window: {outside}, countdown while busy {seq:?}, deferral ok: {deferred}, idle send ok: {sends}"
        ),
    )
}

// Criterion 5

fn median_exits(cfg: &SimConfig) -> Result<(f64, f64), String> {
    let results = run_pairs(cfg, &seeds(), 4);
    let mut by_arm = (Vec::new(), Vec::new());
    for r in results {
        let s = r.outcome.map_err(|e| format!("seed {}: {e}", r.seed))?;
        match r.arm {
            Arm::Comms => by_arm.0.push(s.total_exits as f64),
            Arm::Control => by_arm.1.push(s.total_exits as f64),
        }
    }
    Ok((median(&by_arm.0).unwrap(), median(&by_arm.1).unwrap()))
}

fn exit_advantage() -> Outcome {
    let motorway = median_exits(&preset("velocity_motorway").unwrap().config);
    let urban = median_exits(&preset("velocity_urban").unwrap().config);
    match (motorway, urban) {
        (Ok((mc, mo)), Ok((uc, uo))) => {
            let rm = (mc - mo) / mo;
            let ru = (uc - uo) / uo;
            outcome(
                mc >= mo && rm > ru,
                format!(
                    "motorway median exits {mc} vs {mo} ({:+.2}%), urban {uc} vs {uo} ({:+.2}%)",
                    100.0 * rm,
                    100.0 * ru
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

// Criterion 6

fn median_onset(cfg: &SimConfig) -> Result<Option<f64>, String> {
    let onsets = seeds()
        .into_iter()
        .map(|seed| {
            summarize(&SimConfig {
                seed,
                ..cfg.clone()
            })
            .map(|s| s.origin_onset)
            .map_err(|e| format!("seed {seed}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(median_censored(&onsets))
}

fn onset_ordering() -> Outcome {
    let base = preset("protocol_comparison").unwrap().config;
    let with = |kind: PolicyKind| {
        let mut c = base.clone();
        c.policy.kind = kind;
        median_onset(&c)
    };
    let arms = [
        ("mixed", with(PolicyKind::Mixed)),
        (
            "none",
            median_onset(&SimConfig {
                communication_enabled: false,
                ..base.clone()
            }),
        ),
        ("flooding", with(PolicyKind::Flooding)),
        ("edge", with(PolicyKind::Edge)),
    ];
    let mut vals = Vec::new();
    for (name, r) in &arms {
        match r {
            Ok(v) => vals.push((*name, v.unwrap_or(f64::INFINITY))),
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    let mixed = vals[0].1;
    let pass = vals[1..].iter().all(|&(_, v)| mixed > v);
    let detail = vals
        .iter()
        .map(|(n, v)| format!("{n} {v} s"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("median onset: {detail}"))
}

// Criteria 7 and 8 share full runs with samples.

struct FullRun {
    escapes_from: Vec<roadcast::metrics::LaneChangeRecord>,
    grid: roadcast::metrics::VelocityGrid,
}

fn full_run(cfg: &SimConfig) -> Result<FullRun, String> {
    let log = roadcast::engine::run(cfg).map_err(|e| format!("seed {}: {e}", cfg.seed))?;
    Ok(FullRun {
        escapes_from: lane_change_positions(&log),
        grid: velocity_grid(&log, DEFAULT_GRID_X_BIN, DEFAULT_GRID_T_BIN),
    })
}

fn lane_change_drift() -> Outcome {
    let p = preset("lane_change_position").unwrap();
    let cfg = &p.config;
    let (mut on_meds, mut off_meds) = (Vec::new(), Vec::new());
    for seed in seeds() {
        let (on, off) = p.with_seed(seed);
        let (on, off) = match (full_run(&on), full_run(&off)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return outcome(false, e),
        };
        // The congested phase starts when the control queue first reaches
        // the 100 m in front of the obstacle; both arms use that time.
        let Some(start) = off
            .grid
            .congestion_start(cfg.obstacle_position, 100.0, SLOW_VELOCITY)
        else {
            continue;
        };
        if let Some(m) = median_escape_distance(&on.escapes_from, cfg, start) {
            on_meds.push(m);
        }
        if let Some(m) = median_escape_distance(&off.escapes_from, cfg, start) {
            off_meds.push(m);
        }
    }
    match (median(&on_meds), median(&off_meds)) {
        (Some(a), Some(b)) => outcome(
            a > b,
            format!(
                "median upstream escape distance {a:.1} m with communication vs {b:.1} m without"
            ),
        ),
        _ => outcome(false, "no escapes in the congested phase".into()),
    }
}

fn velocity_grid_check() -> Outcome {
    let p = preset("velocity_grid").unwrap();
    let obstacle = p.config.obstacle_position;
    let (mut on_area, mut off_area) = (Vec::new(), Vec::new());
    let mut extents: Vec<Vec<f64>> = Vec::new();
    for seed in seeds() {
        let (on, off) = p.with_seed(seed);
        let (on, off) = match (full_run(&on), full_run(&off)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return outcome(false, e),
        };
        // Complete bins only; the closing sample would otherwise open a bin
        // of its own.
        let bins = (p.config.duration / DEFAULT_GRID_T_BIN).floor() as u32;
        on_area.push(on.grid.slow_area(bins, SLOW_VELOCITY) as f64);
        off_area.push(off.grid.slow_area(bins, SLOW_VELOCITY) as f64);
        extents.push(
            (0..bins)
                .map(|t| off.grid.slow_extent(t, obstacle, SLOW_VELOCITY))
                .collect(),
        );
    }
    let bins = extents.iter().map(Vec::len).min().unwrap_or(0);
    let median_extent: Vec<f64> = (0..bins)
        .map(|t| median(&extents.iter().map(|e| e[t]).collect::<Vec<_>>()).unwrap())
        .collect();
    let grows = median_extent.windows(2).all(|w| w[1] >= w[0])
        && median_extent.last().copied().unwrap_or(0.0) > median_extent[0];
    let (a, b) = (median(&on_area).unwrap(), median(&off_area).unwrap());
    outcome(
        grows && a < b,
        format!(
            "control slow region upstream extent by 30 s bin {median_extent:?} m; median sub-5 m/s cells {a} with communication vs {b} without"
        ),
    )
}

// Criterion 9

fn determinism_and_conservation() -> Outcome {
    let cfg = SimConfig {
        seed: 11,
        ..scenario_b()
    };
    let (a, b) = match (roadcast::engine::run(&cfg), roadcast::engine::run(&cfg)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let identical = a.to_csv_bytes() == b.to_csv_bytes();

    let mut sim = Simulation::new(cfg).unwrap();
    let mut ticks = 0u64;
    let mut violation = None;
    while !sim.finished() && violation.is_none() {
        if let Err(e) = sim.step() {
            violation = Some(e.to_string());
            break;
        }
        ticks += 1;
        if sim.generated() != sim.exits() + sim.vehicle_count() as u64 + sim.queued()
            || sim.arrivals() != sim.exits() + sim.vehicle_count() as u64
        {
            violation = Some(format!("conservation broken at t = {}", sim.now()));
        }
        for lane in Lane::ALL {
            for w in sim.vehicles(lane).windows(2) {
                let gap = w[1].state.position - w[1].state.length - w[0].state.position;
                if gap.is_nan() || gap <= 0.0 {
                    violation = Some(format!("overlap at t = {}: gap {gap}", sim.now()));
                }
            }
        }
    }
    outcome(
        identical && violation.is_none() && sim.now() >= 900.0 - 1e-9,
        format!(
            "logs identical: {identical}, {ticks} ticks checked, {}",
            violation.unwrap_or_else(|| "no violations".into())
        ),
    )
}

// Criterion 10

fn performance() -> Outcome {
    let start = Instant::now();
    let single = summarize(&scenario_b());
    let one = start.elapsed();
    let start = Instant::now();
    let sweep = run_pairs(&scenario_b(), &seeds(), 4);
    let all = start.elapsed();
    let failed = sweep.iter().filter(|r| r.outcome.is_err()).count();
    outcome(
        single.is_ok()
            && failed == 0
            && one < Duration::from_secs(60)
            && all < Duration::from_secs(600),
        format!(
            "single run {:.2} s, 10-seed A/B sweep {:.2} s, failed runs {failed}",
            one.as_secs_f64(),
            all.as_secs_f64()
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("formula oracles", formula_oracles),
        ("IDM properties", idm_properties),
        ("Friis path loss", friis),
        ("MAC backoff", mac_backoff),
        ("exit advantage", exit_advantage),
        ("congestion onset ordering", onset_ordering),
        ("lane-change drift", lane_change_drift),
        ("velocity grid", velocity_grid_check),
        ("determinism, conservation", determinism_and_conservation),
        ("performance budget", performance),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        report(i as u32 + 1, name, &o, start.elapsed());
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
