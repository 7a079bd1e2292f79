//! Polygon rasterization and drawing-frame alignment.
//!
//! Rasterization works on polygons whose vertices have already been
//! quantized to integer cell coordinates, so every test below is exact
//! integer arithmetic. A zone's footprint is the union of its traced edges
//! and the cells whose centers lie strictly inside it (even-odd rule).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{normalize_angle, GridIndex, OccupancyGrid, Point};

/// Signed cell coordinate `(col, row)`; may lie outside a grid before clipping.
pub type Cell = (i64, i64);

#[derive(Debug, Error, PartialEq)]
pub enum PolygonError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} repeats its predecessor")]
    DuplicateVertex(usize),
    #[error("vertex {0} is not finite")]
    NonFinite(usize),
}

/// Closed polygon in world coordinates; the last vertex connects to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, PolygonError> {
        if vertices.len() < 3 {
            return Err(PolygonError::TooFewVertices(vertices.len()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite()) {
                return Err(PolygonError::NonFinite(i));
            }
            let prev = vertices[(i + vertices.len() - 1) % vertices.len()];
            if prev == *v {
                return Err(PolygonError::DuplicateVertex(i));
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self, PolygonError> {
        Self::new(pairs.iter().copied().map(Point::from).collect())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().copied().map(Into::into).collect()
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

/// Rigid transform taking drawing-frame points into the map frame: rotate by
/// `theta`, then translate by `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorTransform {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for AnchorTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AnchorTransform {
    pub const IDENTITY: AnchorTransform = AnchorTransform {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(c * p.x - s * p.y + self.x, s * p.x + c * p.y + self.y)
    }

    pub fn inverse(&self) -> AnchorTransform {
        let (s, c) = self.theta.sin_cos();
        // R^T * (-t)
        AnchorTransform::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    pub fn apply_polygon(&self, poly: &Polygon) -> Polygon {
        Polygon {
            vertices: poly.vertices.iter().map(|&p| self.apply(p)).collect(),
        }
    }
}

pub fn apply_anchor(t: &AnchorTransform, p: Point) -> Point {
    t.apply(p)
}

/// Even-odd membership test. Points on an edge count as inside.
pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    cross == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Cells of the 8-connected line between two cells, both endpoints included.
///
/// Along the major axis every cell is visited once; the minor coordinate is
/// the exact offset rounded half-up. The segment is always walked from its
/// lexicographically smaller endpoint so `line(a, b) == line(b, a)`.
pub fn trace_line(a: Cell, b: Cell) -> Vec<Cell> {
    let (start, end) = if a <= b { (a, b) } else { (b, a) };
    let dx = end.0 - start.0;
    let dy = end.1 - start.1;
    let x_major = dx.abs() >= dy.abs();
    let (n, d_minor) = if x_major { (dx.abs(), dy) } else { (dy.abs(), dx) };
    let major_step = if x_major { dx.signum() } else { dy.signum() };
    if n == 0 {
        return vec![start];
    }

    // offset = floor((2*i*d_minor + n) / 2n), tracked incrementally as
    // quotient `minor` and remainder `rem` in [0, 2n).
    let two_n = 2 * n;
    let mut minor = 0i64;
    let mut rem = n;
    let mut cells = Vec::with_capacity(n as usize + 1);
    for i in 0..=n {
        let major = i * major_step;
        cells.push(if x_major {
            (start.0 + major, start.1 + minor)
        } else {
            (start.0 + minor, start.1 + major)
        });
        rem += 2 * d_minor;
        if rem >= two_n {
            rem -= two_n;
            minor += 1;
        } else if rem < 0 {
            rem += two_n;
            minor -= 1;
        }
    }
    cells
}

/// Union of the traced lines between consecutive vertices (closed ring).
pub fn trace_edges(vertices: &[Cell]) -> BTreeSet<Cell> {
    let n = vertices.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        out.extend(trace_line(vertices[i], vertices[(i + 1) % n]));
    }
    out
}

/// `trace_line` restricted to columns `[0, width)` and rows `[0, height)`,
/// visiting only major-axis steps that land inside the grid.
///
/// Returns the in-grid cells of the closed segment, plus the number of cells
/// of the half-open segment `[a, b)` that fall outside (a zero-length segment
/// counts its single cell).
pub fn trace_line_clipped(a: Cell, b: Cell, width: usize, height: usize) -> (Vec<Cell>, usize) {
    let swapped = a > b;
    let (start, end) = if swapped { (b, a) } else { (a, b) };
    let (w, h) = (width as i64, height as i64);
    let inside = |c: Cell| c.0 >= 0 && c.1 >= 0 && c.0 < w && c.1 < h;
    let dx = end.0 - start.0;
    let dy = end.1 - start.1;
    let x_major = dx.abs() >= dy.abs();
    let (n, d_minor) = if x_major { (dx.abs(), dy) } else { (dy.abs(), dx) };
    if n == 0 {
        return if inside(start) { (vec![start], 0) } else { (vec![], 1) };
    }
    let (s_major, s_minor, major_len) = if x_major { (start.0, start.1, w) } else { (start.1, start.0, h) };
    let step = if x_major { dx.signum() } else { dy.signum() };
    // steps i in [0, n] whose major coordinate s_major + i*step is in [0, major_len)
    let (lo, hi) = if step > 0 {
        (-s_major, major_len - 1 - s_major)
    } else {
        (s_major - (major_len - 1), s_major)
    };
    let (lo, hi) = (lo.max(0), hi.min(n));
    let excluded = if swapped { 0 } else { n };
    let (n2, d2) = (2 * n as i128, 2 * d_minor as i128);
    let mut cells = Vec::new();
    let mut kept = 0usize;
    for i in lo..=hi {
        let minor = s_minor + (i as i128 * d2 + n as i128).div_euclid(n2) as i64;
        let major = s_major + i * step;
        let cell = if x_major { (major, minor) } else { (minor, major) };
        if inside(cell) {
            cells.push(cell);
            if i != excluded {
                kept += 1;
            }
        }
    }
    (cells, n as usize - kept)
}

/// Cells whose centers lie strictly inside the polygon under the even-odd
/// rule, restricted to columns `[0, width)` and rows `[0, height)` when
/// `bounds` is given.
///
/// Scanline fill: for each row the half-open edge crossings are computed as
/// exact rationals, paired after sorting, and the integer columns strictly
/// between each pair are taken, minus lattice points on the boundary.
pub fn fill_interior_bounded(vertices: &[Cell], bounds: Option<(usize, usize)>) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    if vertices.len() < 3 {
        return out;
    }
    let n = vertices.len();
    let (mut row_lo, mut row_hi) = vertices
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v.1), hi.max(v.1)));
    let (mut col_lo, mut col_hi) = (i64::MIN, i64::MAX);
    if let Some((w, h)) = bounds {
        row_lo = row_lo.max(0);
        row_hi = row_hi.min(h as i64 - 1);
        col_lo = 0;
        col_hi = w as i64 - 1;
    }

    // crossings as (numerator, denominator > 0)
    let mut crossings: Vec<(i128, i128)> = Vec::new();
    // closed column ranges of boundary lattice points on the current row
    let mut on_edge: Vec<(i64, i64)> = Vec::new();
    for row in row_lo..=row_hi {
        crossings.clear();
        on_edge.clear();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let dy = (b.1 - a.1) as i128;
            let dx = (b.0 - a.0) as i128;
            if dy == 0 {
                if a.1 == row {
                    on_edge.push((a.0.min(b.0), a.0.max(b.0)));
                }
                continue;
            }
            let mut num = a.0 as i128 * dy + (row - a.1) as i128 * dx;
            let mut den = dy;
            if den < 0 {
                num = -num;
                den = -den;
            }
            if row >= a.1.min(b.1) && row <= a.1.max(b.1) && num % den == 0 {
                let x = (num / den) as i64;
                on_edge.push((x, x));
            }
            if (a.1 > row) != (b.1 > row) {
                crossings.push((num, den));
            }
        }
        crossings.sort_by(|&(n1, d1), &(n2, d2)| (n1 * d2).cmp(&(n2 * d1)));
        for pair in crossings.chunks_exact(2) {
            let (n0, d0) = pair[0];
            let (n1, d1) = pair[1];
            let first = (n0.div_euclid(d0) + 1).max(col_lo as i128) as i64;
            let last = (-((-n1).div_euclid(d1)) - 1).min(col_hi as i128) as i64;
            for col in first..=last {
                if !on_edge.iter().any(|&(lo, hi)| lo <= col && col <= hi) {
                    out.insert((col, row));
                }
            }
        }
    }
    out
}

pub fn fill_interior(vertices: &[Cell]) -> BTreeSet<Cell> {
    fill_interior_bounded(vertices, None)
}

/// Edges plus strict interior.
pub fn footprint(vertices: &[Cell]) -> BTreeSet<Cell> {
    let mut cells = trace_edges(vertices);
    cells.extend(fill_interior(vertices));
    cells
}

/// Rasterized polygon on a concrete grid. `clipped` counts traced edge cells
/// outside the grid, per half-open edge (a self-crossing outline may count a
/// cell twice); any nonzero value means the zone was clipped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Rasterized {
    pub cells: Vec<GridIndex>,
    pub clipped: usize,
}

/// Quantized vertices are clamped to this many cells either side of the
/// origin so the integer arithmetic cannot overflow.
pub const COORD_LIMIT: i64 = 1 << 40;

/// Quantizes world vertices to their nearest cell centers.
pub fn quantize(grid: &OccupancyGrid, poly: &Polygon) -> Vec<Cell> {
    poly.vertices()
        .iter()
        .map(|&p| {
            let (c, r) = grid.world_to_cell(p);
            (c.clamp(-COORD_LIMIT, COORD_LIMIT), r.clamp(-COORD_LIMIT, COORD_LIMIT))
        })
        .collect()
}

/// Footprint of a world-frame polygon on `grid`, clipped to the grid bounds.
pub fn rasterize(grid: &OccupancyGrid, poly: &Polygon) -> Rasterized {
    let cells = quantize(grid, poly);
    let (w, h) = (grid.width(), grid.height());
    let mut clipped = 0usize;
    let mut set: BTreeSet<GridIndex> = BTreeSet::new();
    for i in 0..cells.len() {
        let (inside, outside) = trace_line_clipped(cells[i], cells[(i + 1) % cells.len()], w, h);
        clipped = clipped.saturating_add(outside);
        set.extend(inside.into_iter().map(|(c, r)| GridIndex::new(c as usize, r as usize)));
    }
    let interior = fill_interior_bounded(&cells, Some((grid.width(), grid.height())));
    set.extend(
        interior
            .into_iter()
            .map(|(c, r)| GridIndex::new(c as usize, r as usize)),
    );
    Rasterized {
        cells: set.into_iter().collect(),
        clipped,
    }
}
