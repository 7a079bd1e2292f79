//! Zone registry: base map, id-keyed zone table and the derived composite.
//!
//! The composite is always `recompose(base, zones)`. Deletion resets the
//! composite to the base map and redraws every remaining zone, rather than
//! undoing the deleted footprint.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rasterize, AnchorTransform, Polygon, PolygonError};
use crate::grid::{CellState, OccupancyGrid};

/// Zone identifiers start at 1; 0 is reserved for "clear" on the wire.
pub type ZoneId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("zone id {0} already exists")]
    DuplicateId(ZoneId),
    #[error("zone id {0} does not exist")]
    UnknownId(ZoneId),
    #[error("zone id must be >= 1 (got {0})")]
    InvalidId(i64),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(#[from] PolygonError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed store document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("store document: {0}")]
    Invalid(#[from] RegistryError),
    #[error("store file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One restricted zone, vertices in the map frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: ZoneId,
    pub polygon: Polygon,
    /// Persisted verbatim; not used when rasterizing.
    pub rotation: f64,
    /// Drawing-frame reference the vertices were captured against.
    pub anchor: AnchorTransform,
}

impl Zone {
    pub fn new(id: ZoneId, polygon: Polygon) -> Self {
        Self {
            id,
            polygon,
            rotation: 0.0,
            anchor: AnchorTransform::IDENTITY,
        }
    }
}

/// Result of adding a zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddReport {
    pub footprint_cells: usize,
    pub clipped_cells: usize,
}

/// Copy of `base` with each zone's footprint set Occupied, ascending id order.
pub fn recompose<'a>(base: &OccupancyGrid, zones: impl IntoIterator<Item = &'a Zone>) -> OccupancyGrid {
    let mut out = base.clone();
    for zone in zones {
        paint(&mut out, &zone.polygon);
    }
    out
}

fn paint(grid: &mut OccupancyGrid, polygon: &Polygon) -> AddReport {
    let raster = rasterize(grid, polygon);
    for &idx in &raster.cells {
        grid.set(idx, CellState::Occupied);
    }
    AddReport {
        footprint_cells: raster.cells.len(),
        clipped_cells: raster.clipped,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneRegistry {
    base: OccupancyGrid,
    zones: BTreeMap<ZoneId, Zone>,
    composite: OccupancyGrid,
}

impl ZoneRegistry {
    pub fn new(base: OccupancyGrid) -> Self {
        Self {
            composite: base.clone(),
            base,
            zones: BTreeMap::new(),
        }
    }

    pub fn base(&self) -> &OccupancyGrid {
        &self.base
    }

    pub fn composite(&self) -> &OccupancyGrid {
        &self.composite
    }

    pub fn zones(&self) -> impl Iterator<Item = &Zone> {
        self.zones.values()
    }

    pub fn zone(&self, id: ZoneId) -> Option<&Zone> {
        self.zones.get(&id)
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn ids(&self) -> Vec<ZoneId> {
        self.zones.keys().copied().collect()
    }

    /// Next free id: one past the largest stored id, starting at 1.
    pub fn next_id(&self) -> ZoneId {
        self.zones.keys().next_back().map_or(1, |&id| id + 1)
    }

    pub fn add_zone(&mut self, id: ZoneId, polygon: Polygon) -> Result<AddReport, RegistryError> {
        self.insert(Zone::new(id, polygon))
    }

    pub fn insert(&mut self, zone: Zone) -> Result<AddReport, RegistryError> {
        if zone.id < 1 {
            return Err(RegistryError::InvalidId(i64::from(zone.id)));
        }
        if self.zones.contains_key(&zone.id) {
            return Err(RegistryError::DuplicateId(zone.id));
        }
        let report = paint(&mut self.composite, &zone.polygon);
        if report.clipped_cells > 0 {
            tracing::warn!(
                id = zone.id,
                clipped = report.clipped_cells,
                "zone extends beyond the map; out-of-bounds cells dropped"
            );
        }
        self.zones.insert(zone.id, zone);
        Ok(report)
    }

    /// Removes a zone, then resets to the base map and redraws the rest.
    pub fn delete_zone(&mut self, id: ZoneId) -> Result<Zone, RegistryError> {
        let zone = self.zones.remove(&id).ok_or(RegistryError::UnknownId(id))?;
        self.composite = recompose(&self.base, self.zones.values());
        Ok(zone)
    }

    pub fn clear(&mut self) {
        self.zones.clear();
        self.composite = self.base.clone();
    }

    /// Stable within a process; used to check that rejected edits leave state alone.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.save_store().hash(&mut h);
        self.composite.cells().hash(&mut h);
        h.finish()
    }

    pub fn to_document(&self) -> StoreDocument {
        StoreDocument {
            zones: self
                .zones
                .values()
                .map(|z| StoredZone {
                    id: i64::from(z.id),
                    anchor: z.anchor,
                    rotation: z.rotation,
                    vertices: z.polygon.to_pairs(),
                })
                .collect(),
        }
    }

    /// Canonical JSON store document (stable key order, full float precision).
    pub fn save_store(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.to_document()).expect("store document serializes");
        text.push('\n');
        text
    }

    pub fn load_store(doc: &str, base: OccupancyGrid) -> Result<Self, StoreError> {
        let doc: StoreDocument = serde_json::from_str(doc)?;
        Ok(Self::from_document(doc, base)?)
    }

    pub fn from_document(doc: StoreDocument, base: OccupancyGrid) -> Result<Self, RegistryError> {
        let mut zones = BTreeMap::new();
        for stored in doc.zones {
            let id = ZoneId::try_from(stored.id)
                .ok()
                .filter(|&id| id >= 1)
                .ok_or(RegistryError::InvalidId(stored.id))?;
            let zone = Zone {
                id,
                polygon: Polygon::from_pairs(&stored.vertices)?,
                rotation: stored.rotation,
                anchor: stored.anchor,
            };
            if zones.insert(id, zone).is_some() {
                return Err(RegistryError::DuplicateId(id));
            }
        }
        let composite = recompose(&base, zones.values());
        Ok(Self {
            base,
            zones,
            composite,
        })
    }

    /// Overwrites `path` with the current store via temp file + rename.
    pub fn write_store(&self, path: &Path) -> Result<(), StoreError> {
        write_atomic(path, self.save_store().as_bytes()).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads the store at `path`, or an empty registry if the file is absent.
    pub fn read_store(path: &Path, base: OccupancyGrid) -> Result<Self, StoreError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::load_store(&text, base),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new(base)),
            Err(source) => Err(StoreError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "store".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Persisted zone document: `{ "zones": [ { id, anchor, rotation, vertices } ] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreDocument {
    pub zones: Vec<StoredZone>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredZone {
    pub id: i64,
    #[serde(default)]
    pub anchor: AnchorTransform,
    #[serde(default)]
    pub rotation: f64,
    pub vertices: Vec<[f64; 2]>,
}
