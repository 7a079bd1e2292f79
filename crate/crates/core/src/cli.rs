//! `hrz` command-line interface.
//!
//! Exit codes:
//!
//! | code | meaning                                           |
//! |------|---------------------------------------------------|
//! | 0    | success (including plan/trial failures as results) |
//! | 1    | file could not be read or written                 |
//! | 2    | malformed input or invalid arguments              |
//! | 3    | maps are incompatible (dimensions/resolution/origin) |
//! | 4    | service failed to start or stopped with an error  |

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::geometry::rasterize;
use crate::grid::{read_map_files, write_map_files, GridIndex, MapIoError, OccupancyGrid, Point};
use crate::metrics::{classify_cells, compute_metrics, wall_mask_from_base, CellMask, MetricsError};
use crate::navsim::{fixture, load_scenario, run_trial, write_scenario, ScenarioError};
use crate::planner::{path_length, plan, Path as PlanPath, PlanConfig};
use crate::registry::{write_atomic, ZoneRegistry, StoreError};
use crate::service::{self, ServiceConfig, ServiceError, DEFAULT_SPEED, DEFAULT_TICK_HZ};

pub const JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hrz", version, about = "Keep-out zone editing for occupancy-grid maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize a zone document onto a map and write the composite map.
    Apply {
        /// Base map metadata file
        #[arg(long)]
        map: PathBuf,
        /// Zone store document (JSON)
        #[arg(long)]
        zones: PathBuf,
        /// Output metadata path; the image is written next to it as .pgm
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a drawn map against ground truth.
    Metrics {
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        drawn: PathBuf,
        /// Empty-room map whose occupied cells are excluded as walls
        #[arg(long)]
        walls: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Plan a global path between two world points.
    Plan {
        #[arg(long)]
        map: PathBuf,
        /// Start as `x,y` in meters
        #[arg(long, value_parser = parse_point)]
        start: Point,
        /// Goal as `x,y` in meters
        #[arg(long, value_parser = parse_point)]
        goal: Point,
        #[command(flatten)]
        planning: PlanningArgs,
        #[arg(long)]
        dump_path: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a navigation trial: plan on base + zones, check against ground truth.
    Trial {
        /// Built-in fixture name (stage1, stage2) or scenario manifest path
        #[arg(long)]
        scenario: String,
        /// Zone store document; omitted means no zones
        #[arg(long)]
        zones: Option<PathBuf>,
        #[command(flatten)]
        planning: PlanningArgs,
        #[arg(long)]
        dump_path: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write a built-in scenario and its zone documents to a directory.
    ExportFixture {
        #[arg(long)]
        name: String,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Run the live editing service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PlanningArgs {
    /// Treat unknown cells as traversable
    #[arg(long)]
    allow_unknown: bool,
    /// Disable diagonal moves
    #[arg(long)]
    four_connected: bool,
}

impl PlanningArgs {
    fn config(&self) -> PlanConfig {
        PlanConfig {
            unknown_is_blocked: !self.allow_unknown,
            allow_diagonal: !self.four_connected,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// HTTP listener for `/ws` and `/healthz`
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Optional newline-delimited JSON listener
    #[arg(long)]
    line_listen: Option<SocketAddr>,
    #[arg(long, default_value = "zones.json")]
    store: PathBuf,
    #[arg(long, default_value = "stage1")]
    scenario: String,
    #[arg(long, default_value_t = DEFAULT_SPEED)]
    speed: f64,
    #[arg(long, default_value_t = DEFAULT_TICK_HZ)]
    tick_hz: f64,
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected `x,y`")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x in `{s}`"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y in `{s}`"))?;
    Ok(Point::new(x, y))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Incompatible(String),
    #[error("{0}")]
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::Incompatible(_) => 3,
            CliError::Service(_) => 4,
        }
    }
}

impl From<MapIoError> for CliError {
    fn from(e: MapIoError) -> Self {
        match e {
            MapIoError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Incompatible(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            ScenarioError::Map(m) => m.into(),
            ScenarioError::GeometryMismatch => CliError::Incompatible(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        CliError::Service(e.to_string())
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_zones(path: &Path, base: OccupancyGrid) -> Result<ZoneRegistry, CliError> {
    Ok(ZoneRegistry::load_store(&read_text(path)?, base)?)
}

fn dump_cells(path: &Path, cells: &[GridIndex]) -> Result<(), CliError> {
    let mut text = String::new();
    for c in cells {
        let _ = writeln!(text, "{} {}", c.col, c.row);
    }
    write_text(path, &text)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Runs a non-serve command, returning its stdout text.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Apply { map, zones, out } => cmd_apply(map, zones, out),
        Command::Metrics {
            ground_truth,
            drawn,
            walls,
            json,
        } => cmd_metrics(ground_truth, drawn, walls.as_deref(), *json),
        Command::Plan {
            map,
            start,
            goal,
            planning,
            dump_path,
            json,
        } => cmd_plan(map, *start, *goal, &planning.config(), dump_path.as_deref(), *json),
        Command::Trial {
            scenario,
            zones,
            planning,
            dump_path,
            json,
        } => cmd_trial(scenario, zones.as_deref(), &planning.config(), dump_path.as_deref(), *json),
        Command::ExportFixture { name, dir } => cmd_export(name, dir),
        Command::Serve(_) => Err(CliError::Input("serve is not a batch command".into())),
    }
}

pub fn cmd_apply(map: &Path, zones: &Path, out: &Path) -> Result<String, CliError> {
    let base = read_map_files(map)?;
    let reg = load_zones(zones, base)?;
    let mut text = String::new();
    for zone in reg.zones() {
        let r = rasterize(reg.base(), &zone.polygon);
        let _ = write!(text, "zone {}: {} cells", zone.id, r.cells.len());
        if r.clipped > 0 {
            let _ = write!(text, " (clipped)");
        }
        text.push('\n');
    }
    write_map_files(out, reg.composite())?;
    let _ = writeln!(text, "wrote {}", out.display());
    Ok(text)
}

pub fn cmd_metrics(gt: &Path, drawn: &Path, walls: Option<&Path>, as_json: bool) -> Result<String, CliError> {
    let gt = read_map_files(gt)?;
    let drawn = read_map_files(drawn)?;
    let mask = match walls {
        Some(p) => {
            let base = read_map_files(p)?;
            if !base.same_geometry(&gt) {
                return Err(MetricsError::GeometryMismatch.into());
            }
            wall_mask_from_base(&base)
        }
        None => CellMask::empty(gt.width(), gt.height()),
    };
    let counts = classify_cells(&gt, &drawn, &mask)?;
    let report = compute_metrics(&counts);
    if as_json {
        return Ok(pretty(&json!({
            "schema": JSON_SCHEMA_VERSION,
            "counts": counts,
            "metrics": report,
        })));
    }
    Ok(format!(
        "tp: {}\nfp: {}\nfn: {}\ntn: {}\nexcluded_wall_cells: {}\n{report}",
        counts.tp, counts.fp, counts.fn_, counts.tn, counts.excluded_wall_cells
    ))
}

fn path_json(path: &PlanPath, grid: &OccupancyGrid) -> serde_json::Value {
    json!({
        "cells": path.cells.iter().map(|c| [c.col, c.row]).collect::<Vec<_>>(),
        "length_m": path_length(path, grid.resolution()),
        "cost": path.cost,
    })
}

pub fn cmd_plan(
    map: &Path,
    start: Point,
    goal: Point,
    cfg: &PlanConfig,
    dump: Option<&Path>,
    as_json: bool,
) -> Result<String, CliError> {
    let grid = read_map_files(map)?;
    let to_cell = |p: Point, which: &str| {
        grid.world_to_grid(p)
            .map_err(|_| CliError::Input(format!("{which} ({}, {}) is outside the map", p.x, p.y)))
    };
    let (s, g) = (to_cell(start, "start")?, to_cell(goal, "goal")?);
    match plan(&grid, s, g, cfg) {
        Ok(path) => {
            if let Some(d) = dump {
                dump_cells(d, &path.cells)?;
            }
            if as_json {
                return Ok(pretty(&json!({
                    "schema": JSON_SCHEMA_VERSION,
                    "result": "ok",
                    "path": path_json(&path, &grid),
                })));
            }
            Ok(format!(
                "result: ok\nlength_m: {:.6}\ncells: {}\n",
                path_length(&path, grid.resolution()),
                path.cells.len()
            ))
        }
        Err(e) => {
            if as_json {
                return Ok(pretty(&json!({
                    "schema": JSON_SCHEMA_VERSION,
                    "result": e.code(),
                    "message": e.to_string(),
                })));
            }
            Ok(format!("result: {}\nmessage: {e}\n", e.code()))
        }
    }
}

pub fn cmd_trial(
    scenario: &str,
    zones: Option<&Path>,
    cfg: &PlanConfig,
    dump: Option<&Path>,
    as_json: bool,
) -> Result<String, CliError> {
    let scenario = load_scenario(scenario)?;
    let reg = match zones {
        Some(p) => load_zones(p, scenario.base.clone())?,
        None => ZoneRegistry::new(scenario.base.clone()),
    };
    let outcome = run_trial(&scenario, reg.composite(), cfg)?;
    if let (Some(d), Some(path)) = (dump, &outcome.path) {
        dump_cells(d, &path.cells)?;
    }
    let result = serde_json::to_value(outcome.result).expect("enum serializes");
    let result = result.as_str().unwrap_or_default().to_string();
    if as_json {
        return Ok(pretty(&json!({
            "schema": JSON_SCHEMA_VERSION,
            "scenario": scenario.name,
            "result": result,
            "length_m": outcome.length,
            "collisions": outcome.collisions.iter().map(|c| [c.col, c.row]).collect::<Vec<_>>(),
            "plan_error": outcome.plan_error.map(|e| e.code()),
            "path": outcome.path.as_ref().map(|p| path_json(p, reg.composite())),
        })));
    }
    let mut text = format!(
        "scenario: {}\nresult: {result}\nlength_m: {:.6}\ncollisions: {}\n",
        scenario.name,
        outcome.length,
        outcome.collisions.len()
    );
    if let Some(e) = outcome.plan_error {
        let _ = writeln!(text, "plan_error: {}", e.code());
    }
    Ok(text)
}

pub fn cmd_export(name: &str, dir: &Path) -> Result<String, CliError> {
    let f = fixture(name)?;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let manifest = write_scenario(dir, &f.scenario)?;
    let mut text = format!("wrote {}\n", manifest.display());
    for (suffix, zones) in [("reference", &f.reference_zones), ("oversized", &f.oversized_zones)] {
        let mut reg = ZoneRegistry::new(f.scenario.base.clone());
        for z in zones {
            reg.insert(z.clone()).map_err(|e| CliError::Input(e.to_string()))?;
        }
        let path = dir.join(format!("{name}_{suffix}_zones.json"));
        write_atomic(&path, reg.save_store().as_bytes())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(text)
}

async fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let config = ServiceConfig {
        listen: args.listen,
        line_listen: args.line_listen,
        store: args.store.clone(),
        scenario,
        speed: args.speed,
        tick_hz: args.tick_hz,
        plan: PlanConfig::default(),
    };
    service::serve(config).await?;
    Ok(())
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    init_tracing();
    let result = match &cli.command {
        Command::Serve(args) => tokio::runtime::Runtime::new()
            .map_err(|e| CliError::Service(e.to_string()))
            .and_then(|rt| rt.block_on(cmd_serve(args))),
        other => execute(other).map(|out| print!("{out}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
