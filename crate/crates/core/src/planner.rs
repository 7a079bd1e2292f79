//! Global path planning: 8-connected A* with an octile heuristic.
//!
//! Path costs are kept exactly as `straight + diagonal * √2` so plans can be
//! compared for equality without floating-point drift.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::Add;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{CellState, GridIndex, OccupancyGrid, Point};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PlanError {
    #[error("start cell {0} is blocked")]
    StartBlocked(GridIndex),
    #[error("goal cell {0} is blocked")]
    GoalBlocked(GridIndex),
    #[error("no path to the goal")]
    NoPath,
    #[error("cell {0} is outside the map")]
    OutOfBounds(GridIndex),
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::StartBlocked(_) => "start_blocked",
            PlanError::GoalBlocked(_) => "goal_blocked",
            PlanError::NoPath => "no_path",
            PlanError::OutOfBounds(_) => "out_of_bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanConfig {
    pub unknown_is_blocked: bool,
    pub allow_diagonal: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            unknown_is_blocked: true,
            allow_diagonal: true,
        }
    }
}

impl PlanConfig {
    pub fn is_traversable(&self, state: CellState) -> bool {
        match state {
            CellState::Free => true,
            CellState::Occupied => false,
            CellState::Unknown => !self.unknown_is_blocked,
        }
    }
}

/// Path cost `straight + diagonal·√2` in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Cost {
    pub straight: u64,
    pub diagonal: u64,
}

impl Cost {
    pub const ZERO: Cost = Cost {
        straight: 0,
        diagonal: 0,
    };
    pub const STRAIGHT: Cost = Cost {
        straight: 1,
        diagonal: 0,
    };
    pub const DIAGONAL: Cost = Cost {
        straight: 0,
        diagonal: 1,
    };

    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }

    /// Octile distance between two cells.
    pub fn octile(a: GridIndex, b: GridIndex) -> Cost {
        let dx = a.col.abs_diff(b.col) as u64;
        let dy = a.row.abs_diff(b.row) as u64;
        Cost {
            straight: dx.max(dy) - dx.min(dy),
            diagonal: dx.min(dy),
        }
    }

    /// Manhattan distance, admissible when diagonal moves are disabled.
    pub fn manhattan(a: GridIndex, b: GridIndex) -> Cost {
        Cost {
            straight: (a.col.abs_diff(b.col) + a.row.abs_diff(b.row)) as u64,
            diagonal: 0,
        }
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost {
            straight: self.straight + rhs.straight,
            diagonal: self.diagonal + rhs.diagonal,
        }
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of ds + dd·√2
        let ds = self.straight as i128 - other.straight as i128;
        let dd = self.diagonal as i128 - other.diagonal as i128;
        match (ds.signum(), dd.signum()) {
            (0, 0) => Ordering::Equal,
            (s, d) if s >= 0 && d >= 0 => Ordering::Greater,
            (s, d) if s <= 0 && d <= 0 => Ordering::Less,
            // opposite signs: compare ds² with 2·dd²
            (s, _) => {
                let lhs = ds * ds;
                let rhs = 2 * dd * dd;
                if s > 0 {
                    lhs.cmp(&rhs)
                } else {
                    rhs.cmp(&lhs)
                }
            }
        }
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}√2", self.straight, self.diagonal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub cells: Vec<GridIndex>,
    pub cost: Cost,
}

impl Path {
    pub fn start(&self) -> GridIndex {
        self.cells[0]
    }

    pub fn goal(&self) -> GridIndex {
        *self.cells.last().expect("path is never empty")
    }

    pub fn world_points(&self, grid: &OccupancyGrid) -> Vec<Point> {
        self.cells
            .iter()
            .map(|&c| grid.cell_center(c.col as f64, c.row as f64))
            .collect()
    }
}

/// Sum of Euclidean distances between consecutive cell centers, in meters.
pub fn path_length(path: &Path, resolution: f64) -> f64 {
    path.cells
        .windows(2)
        .map(|w| {
            let dx = w[0].col.abs_diff(w[1].col) as f64;
            let dy = w[0].row.abs_diff(w[1].row) as f64;
            dx.hypot(dy)
        })
        .sum::<f64>()
        * resolution
}

const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Open-list entry. Pops lowest f, then highest g, then lowest row-major index.
#[derive(Debug, PartialEq, Eq)]
struct Open {
    f: Cost,
    g: Cost,
    index: usize,
}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .cmp(&self.f)
            .then_with(|| self.g.cmp(&other.g))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Neighbors reachable in one step under `cfg`, with their step cost.
/// Diagonal moves require both orthogonally adjacent cells to be traversable.
pub fn successors<'a>(
    grid: &'a OccupancyGrid,
    cfg: &PlanConfig,
    cell: GridIndex,
) -> impl Iterator<Item = (GridIndex, Cost)> + 'a {
    let cfg = *cfg;
    let passable = move |c: i64, r: i64| {
        grid.contains(c, r)
            && cfg.is_traversable(grid.cells()[r as usize * grid.width() + c as usize])
    };
    let (c0, r0) = (cell.col as i64, cell.row as i64);
    NEIGHBORS.iter().filter_map(move |&(dc, dr)| {
        let diagonal = dc != 0 && dr != 0;
        if diagonal && !cfg.allow_diagonal {
            return None;
        }
        let (c, r) = (c0 + dc, r0 + dr);
        if !passable(c, r) {
            return None;
        }
        if diagonal && !(passable(c0 + dc, r0) && passable(c0, r0 + dr)) {
            return None;
        }
        let step = if diagonal { Cost::DIAGONAL } else { Cost::STRAIGHT };
        Some((GridIndex::new(c as usize, r as usize), step))
    })
}

pub fn plan(
    grid: &OccupancyGrid,
    start: GridIndex,
    goal: GridIndex,
    cfg: &PlanConfig,
) -> Result<Path, PlanError> {
    let start_state = grid.get(start).ok_or(PlanError::OutOfBounds(start))?;
    let goal_state = grid.get(goal).ok_or(PlanError::OutOfBounds(goal))?;
    if !cfg.is_traversable(start_state) {
        return Err(PlanError::StartBlocked(start));
    }
    if !cfg.is_traversable(goal_state) {
        return Err(PlanError::GoalBlocked(goal));
    }
    let heuristic = |c: GridIndex| {
        if cfg.allow_diagonal {
            Cost::octile(c, goal)
        } else {
            Cost::manhattan(c, goal)
        }
    };

    let n = grid.len();
    let mut g_score: Vec<Option<Cost>> = vec![None; n];
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let s = grid.linear_index(start);
    let goal_i = grid.linear_index(goal);
    g_score[s] = Some(Cost::ZERO);
    open.push(Open {
        f: heuristic(start),
        g: Cost::ZERO,
        index: s,
    });

    while let Some(Open { g, index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == goal_i {
            let mut cells = vec![grid.index_of(index)];
            let mut cur = index;
            while cur != s {
                cur = parent[cur];
                cells.push(grid.index_of(cur));
            }
            cells.reverse();
            return Ok(Path { cells, cost: g });
        }
        let here = grid.index_of(index);
        for (next, step) in successors(grid, cfg, here) {
            let ni = grid.linear_index(next);
            if closed[ni] {
                continue;
            }
            let tentative = g + step;
            if g_score[ni].is_none_or(|old| tentative < old) {
                g_score[ni] = Some(tentative);
                parent[ni] = index;
                open.push(Open {
                    f: tentative + heuristic(next),
                    g: tentative,
                    index: ni,
                });
            }
        }
    }
    Err(PlanError::NoPath)
}
