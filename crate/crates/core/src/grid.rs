//! Occupancy grid model, world/grid coordinate mapping and map file I/O.
//!
//! ## Conventions
//!
//! - `origin` is the world pose of the **center** of cell (0, 0); the grid's
//!   +col axis points along the origin heading.
//! - Cells are stored row-major, row 0 first. Row 0 is the bottom of the map.
//! - Map images are binary graymaps (`P5`) whose first image row is the top
//!   of the map, accompanied by a `key: value` metadata file.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_OCCUPIED_THRESH: f64 = 0.65;
pub const DEFAULT_FREE_THRESH: f64 = 0.196;

/// Pixel values written by [`save_map`].
pub const PIXEL_OCCUPIED: u8 = 0;
pub const PIXEL_FREE: u8 = 254;
pub const PIXEL_UNKNOWN: u8 = 205;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid must be at least 1x1 (got {width}x{height})")]
    EmptyGrid { width: usize, height: usize },
    #[error("resolution must be finite and positive (got {0})")]
    BadResolution(f64),
    #[error("cell count {actual} does not match {width}x{height}")]
    CellCountMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("cell ({col}, {row}) lies outside the grid")]
    OutOfBounds { col: i64, row: i64 },
}

#[derive(Debug, Error)]
pub enum MapIoError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),
    #[error("missing metadata key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid thresholds: free {free}, occupied {occupied}")]
    BadThresholds { free: f64, occupied: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

impl CellState {
    pub fn is_occupied(self) -> bool {
        self == CellState::Occupied
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// A world-frame point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub col: usize,
    pub row: usize,
}

impl GridIndex {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

impl fmt::Display for GridIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2D,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        cells: Vec<CellState>,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::BadResolution(resolution));
        }
        if cells.len() != width * height {
            return Err(GridError::CellCountMismatch {
                width,
                height,
                actual: cells.len(),
            });
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin: Pose2D::new(origin.x, origin.y, origin.theta),
            cells,
        })
    }

    /// Grid with every cell set to `fill`.
    pub fn filled(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        fill: CellState,
    ) -> Result<Self, GridError> {
        Self::new(width, height, resolution, origin, vec![fill; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn linear_index(&self, idx: GridIndex) -> usize {
        idx.row * self.width + idx.col
    }

    pub fn index_of(&self, linear: usize) -> GridIndex {
        GridIndex::new(linear % self.width, linear / self.width)
    }

    pub fn get(&self, idx: GridIndex) -> Option<CellState> {
        (idx.col < self.width && idx.row < self.height).then(|| self.cells[self.linear_index(idx)])
    }

    /// Panics if `idx` is out of bounds.
    pub fn set(&mut self, idx: GridIndex, state: CellState) {
        assert!(idx.col < self.width && idx.row < self.height, "{idx} out of bounds");
        let i = self.linear_index(idx);
        self.cells[i] = state;
    }

    pub fn iter(&self) -> impl Iterator<Item = (GridIndex, CellState)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, &s)| (self.index_of(i), s))
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    /// True when both grids describe the same lattice (dims, resolution, origin).
    pub fn same_geometry(&self, other: &OccupancyGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }

    /// Continuous grid coordinates (in cells) of a world point. Cell centers
    /// sit on integer coordinates.
    pub fn world_to_continuous(&self, p: Point) -> (f64, f64) {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        let (s, c) = self.origin.theta.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.resolution, v / self.resolution)
    }

    /// Nearest cell center as signed indices, without bounds checking.
    pub fn world_to_cell(&self, p: Point) -> (i64, i64) {
        let (u, v) = self.world_to_continuous(p);
        (round_to_i64(u), round_to_i64(v))
    }

    pub fn world_to_grid(&self, p: Point) -> Result<GridIndex, GridError> {
        let (col, row) = self.world_to_cell(p);
        if self.contains(col, row) {
            Ok(GridIndex::new(col as usize, row as usize))
        } else {
            Err(GridError::OutOfBounds { col, row })
        }
    }

    pub fn grid_to_world(&self, idx: GridIndex) -> Result<Point, GridError> {
        if idx.col >= self.width || idx.row >= self.height {
            return Err(GridError::OutOfBounds {
                col: idx.col as i64,
                row: idx.row as i64,
            });
        }
        Ok(self.cell_center(idx.col as f64, idx.row as f64))
    }

    /// World position of continuous grid coordinates.
    pub fn cell_center(&self, col: f64, row: f64) -> Point {
        let u = col * self.resolution;
        let v = row * self.resolution;
        let (s, c) = self.origin.theta.sin_cos();
        Point::new(self.origin.x + c * u - s * v, self.origin.y + s * u + c * v)
    }
}

fn round_to_i64(v: f64) -> i64 {
    // Saturating cast keeps absurd coordinates out of bounds instead of wrapping.
    v.round() as i64
}

/// Parsed contents of a map metadata file.
#[derive(Debug, Clone, PartialEq)]
pub struct MapMetadata {
    pub image: Option<String>,
    pub resolution: f64,
    pub origin: Pose2D,
    pub negate: bool,
    pub occupied_thresh: f64,
    pub free_thresh: f64,
}

impl MapMetadata {
    pub fn parse(text: &str) -> Result<Self, MapIoError> {
        let mut image = None;
        let mut resolution = None;
        let mut origin = None;
        let mut negate = false;
        let mut occupied_thresh = DEFAULT_OCCUPIED_THRESH;
        let mut free_thresh = DEFAULT_FREE_THRESH;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| {
                MapIoError::MalformedMetadata(format!("line {}: expected `key: value`", lineno + 1))
            })?;
            let value = value.trim();
            match key.trim() {
                "image" => image = Some(value.to_string()),
                "resolution" => resolution = Some(parse_f64("resolution", value)?),
                "origin" => origin = Some(parse_origin(value)?),
                "negate" => {
                    negate = match value {
                        "0" | "false" => false,
                        "1" | "true" => true,
                        other => {
                            return Err(MapIoError::MalformedMetadata(format!(
                                "negate must be 0 or 1, got `{other}`"
                            )))
                        }
                    }
                }
                "occupied_thresh" => occupied_thresh = parse_f64("occupied_thresh", value)?,
                "free_thresh" => free_thresh = parse_f64("free_thresh", value)?,
                _ => {}
            }
        }

        let resolution = resolution.ok_or(MapIoError::MissingKey("resolution"))?;
        let origin = origin.ok_or(MapIoError::MissingKey("origin"))?;
        let thresh_ok = (0.0..=1.0).contains(&free_thresh)
            && (0.0..=1.0).contains(&occupied_thresh)
            && free_thresh < occupied_thresh;
        if !thresh_ok {
            return Err(MapIoError::BadThresholds {
                free: free_thresh,
                occupied: occupied_thresh,
            });
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::BadResolution(resolution).into());
        }
        Ok(Self {
            image,
            resolution,
            origin,
            negate,
            occupied_thresh,
            free_thresh,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "image: {}\nresolution: {}\norigin: [{}, {}, {}]\nnegate: {}\noccupied_thresh: {}\nfree_thresh: {}\n",
            self.image.as_deref().unwrap_or(""),
            self.resolution,
            self.origin.x,
            self.origin.y,
            self.origin.theta,
            u8::from(self.negate),
            self.occupied_thresh,
            self.free_thresh,
        )
    }

    pub fn classify(&self, pixel: u8) -> CellState {
        let occ = if self.negate {
            f64::from(pixel) / 255.0
        } else {
            f64::from(255 - pixel) / 255.0
        };
        if occ > self.occupied_thresh {
            CellState::Occupied
        } else if occ < self.free_thresh {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, MapIoError> {
    value
        .parse::<f64>()
        .map_err(|_| MapIoError::MalformedMetadata(format!("{key}: `{value}` is not a number")))
}

fn parse_origin(value: &str) -> Result<Pose2D, MapIoError> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| MapIoError::MalformedMetadata("origin must be `[x, y, theta]`".into()))?;
    let parts = inner
        .split(',')
        .map(|p| parse_f64("origin", p.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    match parts.as_slice() {
        [x, y, theta] => Ok(Pose2D::new(*x, *y, *theta)),
        _ => Err(MapIoError::MalformedMetadata(
            "origin must have three components".into(),
        )),
    }
}

/// Raw decoded `P5` image.
struct Graymap<'a> {
    width: usize,
    height: usize,
    pixels: &'a [u8],
}

fn parse_pgm(bytes: &[u8]) -> Result<Graymap<'_>, MapIoError> {
    let bad = |m: &str| MapIoError::MalformedImage(m.to_string());
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit graymaps are supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after header"));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| bad("image dimensions overflow"))?;
    let pixels = bytes
        .get(pos..pos + expected)
        .ok_or_else(|| bad("pixel data shorter than width*height"))?;
    Ok(Graymap {
        width,
        height,
        pixels,
    })
}

/// Decodes a `P5` image plus metadata text into a grid.
pub fn load_map(image: &[u8], metadata: &str) -> Result<OccupancyGrid, MapIoError> {
    let meta = MapMetadata::parse(metadata)?;
    grid_from_image(image, &meta)
}

pub fn grid_from_image(image: &[u8], meta: &MapMetadata) -> Result<OccupancyGrid, MapIoError> {
    let pgm = parse_pgm(image)?;
    let mut cells = Vec::with_capacity(pgm.width * pgm.height);
    for row in 0..pgm.height {
        let image_row = pgm.height - 1 - row;
        let line = &pgm.pixels[image_row * pgm.width..(image_row + 1) * pgm.width];
        cells.extend(line.iter().map(|&v| meta.classify(v)));
    }
    Ok(OccupancyGrid::new(
        pgm.width,
        pgm.height,
        meta.resolution,
        meta.origin,
        cells,
    )?)
}

pub fn pixel_for(state: CellState) -> u8 {
    match state {
        CellState::Occupied => PIXEL_OCCUPIED,
        CellState::Free => PIXEL_FREE,
        CellState::Unknown => PIXEL_UNKNOWN,
    }
}

/// Encodes a grid as `P5` image bytes plus metadata text. `image_name` is
/// recorded in the metadata's `image` key.
pub fn save_map(grid: &OccupancyGrid, image_name: &str) -> (Vec<u8>, String) {
    let header = format!("P5\n{} {}\n255\n", grid.width, grid.height);
    let mut bytes = Vec::with_capacity(header.len() + grid.len());
    bytes.extend_from_slice(header.as_bytes());
    for row in (0..grid.height).rev() {
        let line = &grid.cells[row * grid.width..(row + 1) * grid.width];
        bytes.extend(line.iter().map(|&s| pixel_for(s)));
    }
    let meta = MapMetadata {
        image: Some(image_name.to_string()),
        resolution: grid.resolution,
        origin: grid.origin,
        negate: false,
        occupied_thresh: DEFAULT_OCCUPIED_THRESH,
        free_thresh: DEFAULT_FREE_THRESH,
    };
    (bytes, meta.render())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MapIoError + '_ {
    move |source| MapIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a map from its metadata file; the image path is resolved relative
/// to the metadata file's directory.
pub fn read_map_files(meta_path: &Path) -> Result<OccupancyGrid, MapIoError> {
    let text = fs::read_to_string(meta_path).map_err(io_err(meta_path))?;
    let meta = MapMetadata::parse(&text)?;
    let image = meta
        .image
        .as_deref()
        .filter(|s| !s.is_empty())
        .ok_or(MapIoError::MissingKey("image"))?;
    let image_path = meta_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(image);
    let bytes = fs::read(&image_path).map_err(io_err(&image_path))?;
    grid_from_image(&bytes, &meta)
}

/// Writes `<stem>.pgm` next to `meta_path` and the metadata to `meta_path`.
pub fn write_map_files(meta_path: &Path, grid: &OccupancyGrid) -> Result<(), MapIoError> {
    let image_path = meta_path.with_extension("pgm");
    let image_name = image_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (bytes, meta) = save_map(grid, &image_name);
    fs::write(&image_path, bytes).map_err(io_err(&image_path))?;
    fs::write(meta_path, meta).map_err(io_err(meta_path))?;
    Ok(())
}
