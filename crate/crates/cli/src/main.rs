use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use roadcast::config::{apply_config, echo, parse_policy};
use roadcast::engine::{run, SimConfig};
use roadcast::metrics::{
    exit_series, lane_change_positions, velocity_grid, DEFAULT_EXIT_BIN, DEFAULT_GRID_T_BIN,
    DEFAULT_GRID_X_BIN,
};
use roadcast::output::{write_csv, write_event_log};
use roadcast::presets;
use roadcast::sweep::{parse_seed_range, run_pairs, summary_rows};

#[derive(Parser)]
#[command(
    name = "roadcast",
    version,
    about = "Obstacle-warning traffic and broadcast simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its event log and metric tables.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every seed with and without communication and summarise.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Inclusive seed range, `N..M`, or a single seed.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the built-in scenarios.
    Presets,
}

#[derive(Args)]
struct ScenarioArgs {
    /// `key = value` document applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// flooding, edge, distance or mixed.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    no_comms: bool,
    #[arg(long)]
    stop_at_origin: bool,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = match &self.preset {
            Some(name) => match presets::preset(name) {
                Some(p) => p.config,
                None => bail!(
                    "unknown preset `{name}`; expected one of {}",
                    presets::NAMES.join(", ")
                ),
            },
            None => SimConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            cfg = apply_config(cfg, &text)
                .with_context(|| format!("invalid config {}", path.display()))?;
        }
        if let Some(p) = &self.policy {
            cfg.policy.kind = parse_policy(p).with_context(|| {
                format!("unknown policy `{p}`; expected flooding, edge, distance or mixed")
            })?;
        }
        if self.no_comms {
            cfg.communication_enabled = false;
        }
        if self.stop_at_origin {
            cfg.stop_at_origin = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir.join(name))
}

fn run_one(scenario: &ScenarioArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = scenario.resolve()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let log = run(&cfg)?;
    let header = echo(&cfg);
    let dir = &scenario.out_dir;
    write_event_log(&out_path(dir, "events.csv")?, &log)?;
    write_csv(
        &out_path(dir, "exits.csv")?,
        &header,
        &exit_series(&log, DEFAULT_EXIT_BIN),
    )?;
    write_csv(
        &out_path(dir, "lane_changes.csv")?,
        &header,
        &lane_change_positions(&log),
    )?;
    let grid = velocity_grid(&log, DEFAULT_GRID_X_BIN, DEFAULT_GRID_T_BIN);
    write_csv(&out_path(dir, "velocity_grid.csv")?, &header, &grid.rows())?;
    let exits = exit_series(&log, DEFAULT_EXIT_BIN);
    let last = exits.last().map_or((0, 0), |r| (r.exits, r.arrivals));
    println!(
        "seed {}: {} exits, {} arrivals, ended at {} s; wrote {}",
        cfg.seed,
        last.0,
        last.1,
        log.end_time(),
        dir.display()
    );
    Ok(())
}

fn run_sweep(scenario: &ScenarioArgs, seeds: &str, jobs: usize) -> Result<()> {
    let cfg = scenario.resolve()?;
    let Some(seeds_list) = parse_seed_range(seeds) else {
        bail!("invalid --seeds `{seeds}`; expected N..M with N <= M");
    };
    let results = run_pairs(&cfg, &seeds_list, jobs);
    let rows = summary_rows(&results);
    let mut header = echo(&cfg);
    header.push(format!("seeds = {seeds}"));
    let path = out_path(&scenario.out_dir, "sweep_summary.csv")?;
    write_csv(&path, &header, &rows)?;
    for r in rows.iter().filter(|r| r.row == "median") {
        println!(
            "{:8} median exits {:?}, gridlock {:?} s, origin onset {:?} s",
            r.arm, r.total_exits, r.time_to_gridlock_s, r.origin_onset_s
        );
    }
    let failed = results.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        eprintln!(
            "{failed} run(s) failed; see the error column in {}",
            path.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed } => run_one(scenario, *seed),
        Command::Sweep {
            scenario,
            seeds,
            jobs,
        } => run_sweep(scenario, seeds, *jobs),
        Command::Presets => {
            for p in presets::all() {
                println!("{:22} {}", p.name, p.description);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
