//! Navigation trials and the simulated robot marker.
//!
//! A trial plans on the drawn map and checks the plan against the ground
//! truth: a path through any truly occupied cell counts as a collision.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{rasterize, Polygon};
use crate::grid::{
    normalize_angle, read_map_files, write_map_files, CellState, GridIndex, MapIoError, OccupancyGrid,
    Point, Pose2D,
};
use crate::planner::{path_length, plan, Cost, Path, PlanConfig, PlanError};
use crate::registry::{recompose, Zone, ZoneId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario maps do not share dimensions, resolution and origin")]
    GeometryMismatch,
    #[error("{which} pose ({x}, {y}) is outside the map")]
    PoseOutside { which: &'static str, x: f64, y: f64 },
    #[error("{which} pose is not traversable in the ground truth")]
    PoseBlocked { which: &'static str },
    #[error("malformed scenario manifest: {0}")]
    Manifest(String),
    #[error("unknown built-in scenario `{0}`")]
    UnknownFixture(String),
    #[error(transparent)]
    Map(#[from] MapIoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub base: OccupancyGrid,
    pub ground_truth: OccupancyGrid,
    pub start: Pose2D,
    pub goal: Pose2D,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        base: OccupancyGrid,
        ground_truth: OccupancyGrid,
        start: Pose2D,
        goal: Pose2D,
    ) -> Result<Self, ScenarioError> {
        if !base.same_geometry(&ground_truth) {
            return Err(ScenarioError::GeometryMismatch);
        }
        let s = Self {
            name: name.into(),
            base,
            ground_truth,
            start,
            goal,
        };
        for (which, pose) in [("start", start), ("goal", goal)] {
            let idx = s.cell_of(which, pose)?;
            if s.ground_truth.get(idx) != Some(CellState::Free) {
                return Err(ScenarioError::PoseBlocked { which });
            }
        }
        Ok(s)
    }

    fn cell_of(&self, which: &'static str, pose: Pose2D) -> Result<GridIndex, ScenarioError> {
        self.base
            .world_to_grid(pose.position())
            .map_err(|_| ScenarioError::PoseOutside {
                which,
                x: pose.x,
                y: pose.y,
            })
    }

    pub fn start_cell(&self) -> GridIndex {
        self.cell_of("start", self.start).expect("validated at construction")
    }

    pub fn goal_cell(&self) -> GridIndex {
        self.cell_of("goal", self.goal).expect("validated at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialResult {
    Success,
    CollisionFailure,
    NoPathFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub path: Option<Path>,
    /// Planned length in meters; 0 when there is no path.
    pub length: f64,
    pub collisions: Vec<GridIndex>,
    /// Why planning failed, for `NoPathFailure`.
    pub plan_error: Option<PlanError>,
}

impl TrialOutcome {
    pub fn cost(&self) -> Option<Cost> {
        self.path.as_ref().map(|p| p.cost)
    }
}

/// Plans from start to goal on `drawn` and checks the path against ground truth.
pub fn run_trial(
    scenario: &Scenario,
    drawn: &OccupancyGrid,
    cfg: &PlanConfig,
) -> Result<TrialOutcome, ScenarioError> {
    if !drawn.same_geometry(&scenario.ground_truth) {
        return Err(ScenarioError::GeometryMismatch);
    }
    let path = match plan(drawn, scenario.start_cell(), scenario.goal_cell(), cfg) {
        Ok(p) => p,
        Err(e) => {
            return Ok(TrialOutcome {
                result: TrialResult::NoPathFailure,
                path: None,
                length: 0.0,
                collisions: Vec::new(),
                plan_error: Some(e),
            })
        }
    };
    let collisions: Vec<GridIndex> = path
        .cells
        .iter()
        .copied()
        .filter(|&c| scenario.ground_truth.get(c) == Some(CellState::Occupied))
        .collect();
    let result = if collisions.is_empty() {
        TrialResult::Success
    } else {
        TrialResult::CollisionFailure
    };
    Ok(TrialOutcome {
        result,
        length: path_length(&path, drawn.resolution()),
        path: Some(path),
        collisions,
        plan_error: None,
    })
}

/// Robot progress along a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotMotion {
    pub pose: Pose2D,
    /// Distance covered along the current path, meters.
    pub travelled: f64,
}

impl RobotMotion {
    pub fn at(pose: Pose2D) -> Self {
        Self { pose, travelled: 0.0 }
    }
}

pub fn polyline_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Pose at arc length `dist` along `path`, heading along the current segment.
pub fn pose_along(path: &[Point], dist: f64, fallback_heading: f64) -> Pose2D {
    let Some(first) = path.first() else {
        return Pose2D::new(0.0, 0.0, fallback_heading);
    };
    let mut heading = fallback_heading;
    let mut remaining = dist.max(0.0);
    for w in path.windows(2) {
        let seg = w[0].distance(&w[1]);
        if seg == 0.0 {
            continue;
        }
        heading = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
        if remaining <= seg {
            let t = remaining / seg;
            return Pose2D::new(
                w[0].x + t * (w[1].x - w[0].x),
                w[0].y + t * (w[1].y - w[0].y),
                heading,
            );
        }
        remaining -= seg;
    }
    let last = path.last().unwrap_or(first);
    Pose2D::new(last.x, last.y, normalize_angle(heading))
}

/// Advances `speed * dt` meters along `path`, clamped at its end.
pub fn step_robot(state: RobotMotion, path: &[Point], speed: f64, dt: f64) -> RobotMotion {
    let total = polyline_length(path);
    if path.len() < 2 || state.travelled >= total {
        return state;
    }
    let travelled = (state.travelled + speed * dt).min(total);
    RobotMotion {
        pose: pose_along(path, travelled, state.pose.theta),
        travelled,
    }
}

pub fn at_goal(state: &RobotMotion, path: &[Point]) -> bool {
    state.travelled >= polyline_length(path)
}

/// Built-in scenario plus the zone sets used by trend checks.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub scenario: Scenario,
    /// Zones tracing exactly the true obstacles.
    pub reference_zones: Vec<Zone>,
    /// The same zones grown by a safety margin on every side.
    pub oversized_zones: Vec<Zone>,
}

pub const FIXTURE_NAMES: [&str; 2] = ["stage1", "stage2"];
const FIXTURE_RESOLUTION: f64 = 0.05;
const OVERSIZE_MARGIN: f64 = 0.2;

/// Axis-aligned obstacle footprint `[x0, y0, x1, y1]` in meters.
type Rect = [f64; 4];

fn rect_polygon([x0, y0, x1, y1]: Rect) -> Polygon {
    Polygon::from_pairs(&[[x0, y0], [x1, y0], [x1, y1], [x0, y1]]).expect("rectangle is valid")
}

fn walled_room(width: usize, height: usize) -> OccupancyGrid {
    let mut g = OccupancyGrid::filled(width, height, FIXTURE_RESOLUTION, Pose2D::default(), CellState::Free)
        .expect("fixture grid");
    for col in 0..width {
        g.set(GridIndex::new(col, 0), CellState::Occupied);
        g.set(GridIndex::new(col, height - 1), CellState::Occupied);
    }
    for row in 0..height {
        g.set(GridIndex::new(0, row), CellState::Occupied);
        g.set(GridIndex::new(width - 1, row), CellState::Occupied);
    }
    g
}

fn zones_from(rects: &[Rect], margin: f64) -> Vec<Zone> {
    rects
        .iter()
        .enumerate()
        .map(|(i, &[x0, y0, x1, y1])| {
            let poly = rect_polygon([x0 - margin, y0 - margin, x1 + margin, y1 + margin]);
            Zone::new(i as ZoneId + 1, poly)
        })
        .collect()
}

/// Synthetic layouts: `stage1` has one thin board across the direct route;
/// `stage2` has two thin boards from opposite walls and a box near the goal.
pub fn fixture(name: &str) -> Result<Fixture, ScenarioError> {
    let (w, h, obstacles, start, goal): (usize, usize, Vec<Rect>, Pose2D, Pose2D) = match name {
        "stage1" => (
            80,
            50,
            vec![[1.95, 0.5, 2.05, 2.0]],
            Pose2D::new(0.5, 1.25, 0.0),
            Pose2D::new(3.5, 1.25, 0.0),
        ),
        "stage2" => (
            100,
            60,
            vec![
                [1.45, 0.05, 1.55, 1.9],
                [2.95, 1.1, 3.05, 2.9],
                [3.8, 1.3, 4.2, 1.7],
            ],
            Pose2D::new(0.5, 1.5, 0.0),
            Pose2D::new(4.6, 1.5, 0.0),
        ),
        other => return Err(ScenarioError::UnknownFixture(other.to_string())),
    };
    let base = walled_room(w, h);
    let mut ground_truth = base.clone();
    for &r in &obstacles {
        for idx in rasterize(&ground_truth, &rect_polygon(r)).cells {
            ground_truth.set(idx, CellState::Occupied);
        }
    }
    let scenario = Scenario::new(name, base, ground_truth, start, goal)?;
    Ok(Fixture {
        scenario,
        reference_zones: zones_from(&obstacles, 0.0),
        oversized_zones: zones_from(&obstacles, OVERSIZE_MARGIN),
    })
}

impl Fixture {
    pub fn drawn(&self, zones: &[Zone]) -> OccupancyGrid {
        recompose(&self.scenario.base, zones)
    }
}

/// Manifest lines: `name`, `base`, `ground_truth` (map metadata paths relative
/// to the manifest), `start` and `goal` as `[x, y, theta]`.
pub fn read_scenario(manifest: &FsPath) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(manifest).map_err(|source| ScenarioError::Io {
        path: manifest.to_path_buf(),
        source,
    })?;
    let dir = manifest.parent().unwrap_or_else(|| FsPath::new("."));
    let mut name = None;
    let mut base = None;
    let mut gt = None;
    let mut start = None;
    let mut goal = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| ScenarioError::Manifest(format!("expected `key: value`, got `{line}`")))?;
        let v = v.trim();
        match k.trim() {
            "name" => name = Some(v.to_string()),
            "base" => base = Some(dir.join(v)),
            "ground_truth" => gt = Some(dir.join(v)),
            "start" => start = Some(parse_pose(v)?),
            "goal" => goal = Some(parse_pose(v)?),
            _ => {}
        }
    }
    let missing = |k: &str| ScenarioError::Manifest(format!("missing key `{k}`"));
    let base = read_map_files(&base.ok_or_else(|| missing("base"))?)?;
    let gt = read_map_files(&gt.ok_or_else(|| missing("ground_truth"))?)?;
    Scenario::new(
        name.unwrap_or_else(|| "scenario".into()),
        base,
        gt,
        start.ok_or_else(|| missing("start"))?,
        goal.ok_or_else(|| missing("goal"))?,
    )
}

fn parse_pose(v: &str) -> Result<Pose2D, ScenarioError> {
    let bad = || ScenarioError::Manifest(format!("pose must be `[x, y, theta]`, got `{v}`"));
    let inner = v.strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or_else(bad)?;
    let nums: Vec<f64> = inner
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match nums.as_slice() {
        [x, y] => Ok(Pose2D::new(*x, *y, 0.0)),
        [x, y, t] => Ok(Pose2D::new(*x, *y, *t)),
        _ => Err(bad()),
    }
}

/// Writes `<name>.scenario` plus its two map file pairs into `dir`.
pub fn write_scenario(dir: &FsPath, scenario: &Scenario) -> Result<PathBuf, ScenarioError> {
    let base_meta = format!("{}_base.meta", scenario.name);
    let gt_meta = format!("{}_ground_truth.meta", scenario.name);
    write_map_files(&dir.join(&base_meta), &scenario.base)?;
    write_map_files(&dir.join(&gt_meta), &scenario.ground_truth)?;
    let pose = |p: Pose2D| format!("[{}, {}, {}]", p.x, p.y, p.theta);
    let manifest = format!(
        "name: {}\nbase: {base_meta}\nground_truth: {gt_meta}\nstart: {}\ngoal: {}\n",
        scenario.name,
        pose(scenario.start),
        pose(scenario.goal),
    );
    let path = dir.join(format!("{}.scenario", scenario.name));
    fs::write(&path, manifest).map_err(|source| ScenarioError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Built-in fixture name or a manifest path.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if FIXTURE_NAMES.contains(&name_or_path) {
        Ok(fixture(name_or_path)?.scenario)
    } else {
        read_scenario(FsPath::new(name_or_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> Scenario {
        // 9x5 block with a single free corridor along row 2
        let mut base =
            OccupancyGrid::filled(9, 5, 0.1, Pose2D::default(), CellState::Occupied).unwrap();
        for c in 0..9 {
            base.set(GridIndex::new(c, 2), CellState::Free);
        }
        let mut gt = base.clone();
        gt.set(GridIndex::new(4, 2), CellState::Occupied);
        Scenario::new(
            "corridor",
            base,
            gt,
            Pose2D::new(0.0, 0.2, 0.0),
            Pose2D::new(0.8, 0.2, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn ground_truth_as_drawn_succeeds() {
        for name in FIXTURE_NAMES {
            let f = fixture(name).unwrap();
            let out = run_trial(&f.scenario, &f.scenario.ground_truth, &PlanConfig::default()).unwrap();
            assert_eq!(out.result, TrialResult::Success, "{name}");
        }
    }

    #[test]
    fn unmapped_obstacle_collides() {
        let s = corridor();
        let out = run_trial(&s, &s.base, &PlanConfig::default()).unwrap();
        assert_eq!(out.result, TrialResult::CollisionFailure);
        assert_eq!(out.collisions, vec![GridIndex::new(4, 2)]);
    }

    #[test]
    fn sealed_corridor_has_no_path() {
        let s = corridor();
        let out = run_trial(&s, &s.ground_truth, &PlanConfig::default()).unwrap();
        assert_eq!(out.result, TrialResult::NoPathFailure);
        assert_eq!(out.plan_error, Some(PlanError::NoPath));
        assert!(out.collisions.is_empty());
    }

    #[test]
    fn trial_rejects_mismatched_map() {
        let s = corridor();
        let other = OccupancyGrid::filled(3, 3, 0.1, Pose2D::default(), CellState::Free).unwrap();
        assert!(matches!(
            run_trial(&s, &other, &PlanConfig::default()),
            Err(ScenarioError::GeometryMismatch)
        ));
    }

    #[test]
    fn scenario_validation() {
        let s = corridor();
        assert!(matches!(
            Scenario::new("x", s.base.clone(), s.ground_truth.clone(), Pose2D::new(5.0, 5.0, 0.0), s.goal),
            Err(ScenarioError::PoseOutside { which: "start", .. })
        ));
        assert!(matches!(
            Scenario::new("x", s.base.clone(), s.ground_truth.clone(), s.start, Pose2D::new(0.4, 0.2, 0.0)),
            Err(ScenarioError::PoseBlocked { which: "goal" })
        ));
        assert!(matches!(fixture("stage9"), Err(ScenarioError::UnknownFixture(_))));
    }

    #[test]
    fn step_examples() {
        let path = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        let s = step_robot(RobotMotion::at(Pose2D::default()), &path, 0.5, 1.0);
        assert!((s.pose.x - 0.5).abs() < 1e-12 && s.pose.y == 0.0);
        let end = step_robot(step_robot(s, &path, 0.5, 1.0), &path, 0.5, 1.0);
        assert_eq!(end.pose.x, 1.0);
        assert_eq!(step_robot(end, &path, 0.5, 1.0), end);
    }

    #[test]
    fn heading_follows_segment() {
        let path = [Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0)];
        let s = step_robot(RobotMotion::at(Pose2D::default()), &path, 1.0, 0.5);
        assert!((s.pose.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let s = step_robot(s, &path, 1.0, 1.0);
        assert!(s.pose.theta.abs() < 1e-12);
        assert!((s.pose.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn traversal_time_matches_length() {
        let path = [Point::new(0.0, 0.0), Point::new(0.3, 0.4), Point::new(1.3, 0.4), Point::new(1.3, 2.0)];
        let (speed, dt) = (0.35, 0.05);
        let mut s = RobotMotion::at(Pose2D::default());
        let mut t = 0.0;
        while !at_goal(&s, &path) {
            s = step_robot(s, &path, speed, dt);
            t += dt;
        }
        let expected = polyline_length(&path) / speed;
        assert!((t - expected).abs() <= dt + 1e-9, "t={t} expected={expected}");
        assert_eq!(s.pose.position(), Point::new(1.3, 2.0));
    }

    #[test]
    fn scenario_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = fixture("stage1").unwrap();
        let manifest = write_scenario(dir.path(), &f.scenario).unwrap();
        let back = read_scenario(&manifest).unwrap();
        assert_eq!(back, f.scenario);
        assert_eq!(load_scenario(manifest.to_str().unwrap()).unwrap(), f.scenario);
    }
}
