//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls the library's rasterizer or planner.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hrz_core::grid::{CellState, GridIndex, OccupancyGrid, Pose2D};
use rand::rngs::StdRng;
use rand::Rng;

pub type Cell = (i64, i64);

/// Line cells by direct evaluation of the rounded offset at every major step.
pub fn line_oracle(a: Cell, b: Cell) -> BTreeSet<Cell> {
    let (s, e) = if a <= b { (a, b) } else { (b, a) };
    let (dx, dy) = (e.0 - s.0, e.1 - s.1);
    let n = dx.abs().max(dy.abs());
    let mut out = BTreeSet::new();
    if n == 0 {
        out.insert(s);
        return out;
    }
    for i in 0..=n {
        // round-half-up of i*d/n along each axis
        let off = |d: i64| (2 * i * d + n).div_euclid(2 * n);
        out.insert((s.0 + off(dx), s.1 + off(dy)));
    }
    out
}

pub fn edges_oracle(vertices: &[Cell]) -> BTreeSet<Cell> {
    let n = vertices.len();
    (0..n)
        .flat_map(|i| line_oracle(vertices[i], vertices[(i + 1) % n]))
        .collect()
}

fn on_boundary(p: Cell, vertices: &[Cell]) -> bool {
    let n = vertices.len();
    (0..n).any(|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let cross = (b.0 - a.0) as i128 * (p.1 - a.1) as i128 - (b.1 - a.1) as i128 * (p.0 - a.0) as i128;
        cross == 0
            && p.0 >= a.0.min(b.0)
            && p.0 <= a.0.max(b.0)
            && p.1 >= a.1.min(b.1)
            && p.1 <= a.1.max(b.1)
    })
}

/// Strict even-odd membership of a lattice point, by ray casting toward +x.
pub fn strictly_inside(p: Cell, vertices: &[Cell]) -> bool {
    if on_boundary(p, vertices) {
        return false;
    }
    let n = vertices.len();
    let mut crossings = 0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a.1 > p.1) == (b.1 > p.1) {
            continue;
        }
        // crossing x > p.x  <=>  (a.x - p.x)(b.y - a.y) + (p.y - a.y)(b.x - a.x) has the sign of (b.y - a.y)
        let dy = (b.1 - a.1) as i128;
        let lhs = (a.0 - p.0) as i128 * dy + (p.1 - a.1) as i128 * (b.0 - a.0) as i128;
        if (lhs > 0 && dy > 0) || (lhs < 0 && dy < 0) {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

/// Brute force over every cell center of a `w x h` grid.
pub fn interior_oracle(vertices: &[Cell], w: i64, h: i64) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    for r in 0..h {
        for c in 0..w {
            if strictly_inside((c, r), vertices) {
                out.insert((c, r));
            }
        }
    }
    out
}

pub fn random_polygon(rng: &mut StdRng, w: i64, h: i64, min_v: usize, max_v: usize) -> Vec<Cell> {
    let n = rng.gen_range(min_v..=max_v);
    (0..n)
        .map(|_| (rng.gen_range(0..w), rng.gen_range(0..h)))
        .collect()
}

/// Exact `straight + diagonal*sqrt2` comparison, written independently of the planner.
pub fn cost_less(a: (u64, u64), b: (u64, u64)) -> bool {
    let ds = a.0 as i128 - b.0 as i128;
    let dd = a.1 as i128 - b.1 as i128;
    // a < b  <=>  ds + dd*sqrt2 < 0
    if ds <= 0 && dd <= 0 {
        return ds < 0 || dd < 0;
    }
    if ds >= 0 && dd >= 0 {
        return false;
    }
    if ds < 0 {
        // dd > 0: need ds^2 > 2 dd^2
        ds * ds > 2 * dd * dd
    } else {
        // ds > 0, dd < 0: need 2 dd^2 > ds^2
        2 * dd * dd > ds * ds
    }
}

/// Single-source shortest path costs by repeated relaxation (no heap, no heuristic).
pub fn shortest_cost_oracle(
    grid: &OccupancyGrid,
    start: GridIndex,
    goal: GridIndex,
    unknown_blocked: bool,
) -> Option<(u64, u64)> {
    let w = grid.width() as i64;
    let h = grid.height() as i64;
    let free = |c: i64, r: i64| {
        if c < 0 || r < 0 || c >= w || r >= h {
            return false;
        }
        match grid.get(GridIndex::new(c as usize, r as usize)).unwrap() {
            CellState::Free => true,
            CellState::Unknown => !unknown_blocked,
            CellState::Occupied => false,
        }
    };
    if !free(start.col as i64, start.row as i64) || !free(goal.col as i64, goal.row as i64) {
        return None;
    }
    let idx = |c: i64, r: i64| (r * w + c) as usize;
    let mut dist: Vec<Option<(u64, u64)>> = vec![None; (w * h) as usize];
    dist[idx(start.col as i64, start.row as i64)] = Some((0, 0));
    let mut changed = true;
    while changed {
        changed = false;
        for r in 0..h {
            for c in 0..w {
                let Some(d) = dist[idx(c, r)] else { continue };
                for dc in -1..=1i64 {
                    for dr in -1..=1i64 {
                        if dc == 0 && dr == 0 {
                            continue;
                        }
                        let (nc, nr) = (c + dc, r + dr);
                        if !free(nc, nr) {
                            continue;
                        }
                        let diag = dc != 0 && dr != 0;
                        if diag && !(free(c + dc, r) && free(c, r + dr)) {
                            continue;
                        }
                        let nd = if diag { (d.0, d.1 + 1) } else { (d.0 + 1, d.1) };
                        let slot = &mut dist[idx(nc, nr)];
                        if slot.is_none_or(|old| cost_less(nd, old)) {
                            *slot = Some(nd);
                            changed = true;
                        }
                    }
                }
            }
        }
    }
    dist[idx(goal.col as i64, goal.row as i64)]
}

pub fn free_grid(w: usize, h: usize, res: f64) -> OccupancyGrid {
    OccupancyGrid::filled(w, h, res, Pose2D::default(), CellState::Free).unwrap()
}

/// Random map: free background with rectangular blocks and scattered cells.
pub fn random_map(rng: &mut StdRng, w: usize, h: usize) -> OccupancyGrid {
    let mut g = free_grid(w, h, 0.05);
    for _ in 0..rng.gen_range(2..8) {
        let c0 = rng.gen_range(0..w);
        let r0 = rng.gen_range(0..h);
        let cw = rng.gen_range(1..=w / 3);
        let rh = rng.gen_range(1..=h / 3);
        for r in r0..(r0 + rh).min(h) {
            for c in c0..(c0 + cw).min(w) {
                g.set(GridIndex::new(c, r), CellState::Occupied);
            }
        }
    }
    for _ in 0..(w * h / 12) {
        let idx = GridIndex::new(rng.gen_range(0..w), rng.gen_range(0..h));
        g.set(idx, CellState::Occupied);
    }
    g
}

/// Random traversable cell of `g`, if any.
pub fn random_free_cell(rng: &mut StdRng, g: &OccupancyGrid) -> Option<GridIndex> {
    let free: Vec<GridIndex> = g
        .iter()
        .filter(|(_, s)| *s == CellState::Free)
        .map(|(i, _)| i)
        .collect();
    (!free.is_empty()).then(|| free[rng.gen_range(0..free.len())])
}

/// Footprint of a cell-vertex polygon clipped to `w x h`: traced edges plus strict interior.
pub fn footprint_oracle(vertices: &[Cell], w: i64, h: i64) -> BTreeSet<Cell> {
    let mut out: BTreeSet<Cell> = edges_oracle(vertices)
        .into_iter()
        .filter(|&(c, r)| c >= 0 && r >= 0 && c < w && r < h)
        .collect();
    out.extend(interior_oracle(vertices, w, h));
    out
}

/// Base with every polygon's oracle footprint painted Occupied.
pub fn composite_oracle<'a>(base: &OccupancyGrid, polygons: impl IntoIterator<Item = &'a Vec<Cell>>) -> OccupancyGrid {
    let mut g = base.clone();
    let (w, h) = (g.width() as i64, g.height() as i64);
    for poly in polygons {
        for (c, r) in footprint_oracle(poly, w, h) {
            g.set(GridIndex::new(c as usize, r as usize), CellState::Occupied);
        }
    }
    g
}

/// World vertices near the given cell centers (grid with identity origin at
/// `res`); jitter stays well inside the cell so the nearest center is unambiguous.
pub fn jittered_world(rng: &mut StdRng, cells: &[Cell], res: f64) -> Vec<[f64; 2]> {
    cells
        .iter()
        .map(|&(c, r)| {
            let jx: f64 = rng.gen_range(-0.3..0.3);
            let jy: f64 = rng.gen_range(-0.3..0.3);
            [(c as f64 + jx) * res, (r as f64 + jy) * res]
        })
        .collect()
}

/// Base map with a random mix of all three cell states.
pub fn random_base(rng: &mut StdRng, w: usize, h: usize, res: f64) -> OccupancyGrid {
    let mut g = free_grid(w, h, res);
    for r in 0..h {
        for c in 0..w {
            let state = match rng.gen_range(0..10) {
                0 => CellState::Occupied,
                1 => CellState::Unknown,
                _ => CellState::Free,
            };
            g.set(GridIndex::new(c, r), state);
        }
    }
    g
}
