//! Zone-sync wire protocol: newline-delimited JSON objects with a `"type"`
//! discriminator.
//!
//! | type     | direction        | meaning                                   |
//! |----------|------------------|-------------------------------------------|
//! | `add`    | client -> server | add zone `id` (>= 1) with map-frame vertices |
//! | `remove` | client -> server | delete zone `id`; `id == 0` clears all zones |
//! | `map`    | server -> client | full composite map state                  |
//! | `robot`  | server -> client | robot pose and current planned path       |
//! | `error`  | server -> client | rejected request, sent to its sender only |
//!
//! Unknown fields are ignored; unknown `type` values are rejected.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Polygon;
use crate::grid::{CellState, OccupancyGrid, Pose2D};
use crate::registry::{RegistryError, ZoneId, ZoneRegistry};

pub const CELL_FREE: u8 = 0;
pub const CELL_OCCUPIED: u8 = 100;
pub const CELL_UNKNOWN: u8 = 255;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => "malformed",
            ProtocolError::Schema(_) => "schema",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Add(AddZone),
    Remove(RemoveZone),
    Map(MapState),
    Robot(RobotState),
    Error(ErrorReply),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddZone {
    pub id: ZoneId,
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoveZone {
    pub id: ZoneId,
}

impl RemoveZone {
    pub const CLEAR: RemoveZone = RemoveZone { id: 0 };

    pub fn is_clear(&self) -> bool {
        self.id == 0
    }
}

/// Full composite map. `cells` is base64 of one byte per cell, row-major,
/// 0 = free, 100 = occupied, 255 = unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapState {
    /// Registry revision; increases with every applied edit.
    pub revision: u64,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Pose2D,
    pub zone_ids: Vec<ZoneId>,
    pub cells: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub seq: u64,
    pub pose: Pose2D,
    /// World-frame polyline of the current plan; empty when there is none.
    pub path: Vec<[f64; 2]>,
    pub path_length: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ZoneId>,
}

pub fn cell_byte(state: CellState) -> u8 {
    match state {
        CellState::Free => CELL_FREE,
        CellState::Occupied => CELL_OCCUPIED,
        CellState::Unknown => CELL_UNKNOWN,
    }
}

impl MapState {
    pub fn from_grid(grid: &OccupancyGrid, revision: u64, zone_ids: Vec<ZoneId>) -> Self {
        let bytes: Vec<u8> = grid.cells().iter().map(|&s| cell_byte(s)).collect();
        Self {
            revision,
            width: grid.width(),
            height: grid.height(),
            resolution: grid.resolution(),
            origin: grid.origin(),
            zone_ids,
            cells: BASE64.encode(bytes),
        }
    }

    pub fn cell_bytes(&self) -> Result<Vec<u8>, ProtocolError> {
        BASE64
            .decode(&self.cells)
            .map_err(|e| ProtocolError::Schema(format!("map cells: {e}")))
    }

    pub fn to_grid(&self) -> Result<OccupancyGrid, ProtocolError> {
        let cells = self
            .cell_bytes()?
            .into_iter()
            .map(|b| match b {
                CELL_FREE => Ok(CellState::Free),
                CELL_OCCUPIED => Ok(CellState::Occupied),
                CELL_UNKNOWN => Ok(CellState::Unknown),
                other => Err(ProtocolError::Schema(format!("map cell byte {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        OccupancyGrid::new(self.width, self.height, self.resolution, self.origin, cells)
            .map_err(|e| ProtocolError::Schema(e.to_string()))
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

fn validate(msg: &WireMessage) -> Result<(), ProtocolError> {
    let schema = |m: String| Err(ProtocolError::Schema(m));
    match msg {
        WireMessage::Add(add) => {
            if add.id < 1 {
                return schema("add: id must be >= 1".into());
            }
            if add.vertices.len() < 3 {
                return schema(format!("add: need >= 3 vertices, got {}", add.vertices.len()));
            }
            if !add.vertices.iter().flatten().copied().all(finite) {
                return schema("add: vertices must be finite".into());
            }
        }
        WireMessage::Remove(_) => {}
        WireMessage::Map(map) => {
            if map.width == 0 || map.height == 0 {
                return schema("map: empty dimensions".into());
            }
            if !(finite(map.resolution) && map.resolution > 0.0) {
                return schema("map: resolution must be positive".into());
            }
            if ![map.origin.x, map.origin.y, map.origin.theta].into_iter().all(finite) {
                return schema("map: origin must be finite".into());
            }
            let n = map.cell_bytes()?.len();
            if n != map.width * map.height {
                return schema(format!("map: {n} cells for {}x{}", map.width, map.height));
            }
        }
        WireMessage::Robot(robot) => {
            let nums = [robot.pose.x, robot.pose.y, robot.pose.theta, robot.path_length];
            if !nums.into_iter().chain(robot.path.iter().flatten().copied()).all(finite) {
                return schema("robot: values must be finite".into());
            }
        }
        WireMessage::Error(_) => {}
    }
    Ok(())
}

/// Encodes one message as a single-line JSON object (no trailing newline).
pub fn encode(msg: &WireMessage) -> Result<String, ProtocolError> {
    validate(msg)?;
    serde_json::to_string(msg).map_err(|e| ProtocolError::Schema(e.to_string()))
}

/// Encodes one message followed by `\n`.
pub fn encode_line(msg: &WireMessage) -> Result<String, ProtocolError> {
    let mut s = encode(msg)?;
    s.push('\n');
    Ok(s)
}

pub fn decode(frame: &str) -> Result<WireMessage, ProtocolError> {
    let value: serde_json::Value = serde_json::from_str(frame.trim_end_matches(['\n', '\r']))
        .map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if !value.is_object() {
        return Err(ProtocolError::Malformed("frame is not a JSON object".into()));
    }
    let msg: WireMessage =
        serde_json::from_value(value).map_err(|e| ProtocolError::Schema(e.to_string()))?;
    validate(&msg)?;
    Ok(msg)
}

/// What applying a client message did.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    /// Registry changed; broadcast these to every client.
    Changed(Vec<WireMessage>),
    /// Rejected; send this to the originating client only.
    Rejected(WireMessage),
}

pub fn error_reply(code: &str, message: impl Into<String>, id: Option<ZoneId>) -> WireMessage {
    WireMessage::Error(ErrorReply {
        code: code.to_string(),
        message: message.into(),
        id,
    })
}

fn registry_error_reply(err: &RegistryError, id: ZoneId) -> WireMessage {
    let code = match err {
        RegistryError::DuplicateId(_) => "duplicate_id",
        RegistryError::UnknownId(_) => "unknown_id",
        RegistryError::InvalidId(_) => "invalid_id",
        RegistryError::DegeneratePolygon(_) => "degenerate_polygon",
    };
    error_reply(code, err.to_string(), Some(id))
}

/// Applies an edit to the registry. `revision` is bumped only on success and
/// is stamped on the resulting map broadcast.
pub fn apply_message(reg: &mut ZoneRegistry, revision: &mut u64, msg: &WireMessage) -> Applied {
    let result = match msg {
        WireMessage::Add(add) => Polygon::from_pairs(&add.vertices)
            .map_err(RegistryError::from)
            .and_then(|poly| reg.add_zone(add.id, poly).map(|_| ()))
            .map_err(|e| registry_error_reply(&e, add.id)),
        WireMessage::Remove(rm) if rm.is_clear() => {
            reg.clear();
            Ok(())
        }
        WireMessage::Remove(rm) => reg
            .delete_zone(rm.id)
            .map(|_| ())
            .map_err(|e| registry_error_reply(&e, rm.id)),
        other => Err(error_reply(
            "unsupported",
            format!("clients may only send add/remove, got {}", type_name(other)),
            None,
        )),
    };
    match result {
        Ok(()) => {
            *revision += 1;
            Applied::Changed(vec![WireMessage::Map(MapState::from_grid(
                reg.composite(),
                *revision,
                reg.ids(),
            ))])
        }
        Err(reply) => Applied::Rejected(reply),
    }
}

pub fn type_name(msg: &WireMessage) -> &'static str {
    match msg {
        WireMessage::Add(_) => "add",
        WireMessage::Remove(_) => "remove",
        WireMessage::Map(_) => "map",
        WireMessage::Robot(_) => "robot",
        WireMessage::Error(_) => "error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> OccupancyGrid {
        OccupancyGrid::filled(8, 8, 0.5, Pose2D::default(), CellState::Free).unwrap()
    }

    #[test]
    fn add_round_trips() {
        let msg = WireMessage::Add(AddZone {
            id: 1,
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        });
        let text = encode(&msg).unwrap();
        assert_eq!(text, r#"{"type":"add","id":1,"vertices":[[0.0,0.0],[1.0,0.0],[0.0,1.0]]}"#);
        assert_eq!(decode(&text).unwrap(), msg);
    }

    #[test]
    fn remove_zero_is_clear() {
        match decode(r#"{"type":"remove","id":0}"#).unwrap() {
            WireMessage::Remove(rm) => assert!(rm.is_clear()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_violations() {
        let zero = decode(r#"{"type":"add","id":0,"vertices":[[0,0],[1,0],[0,1]]}"#);
        assert!(matches!(zero, Err(ProtocolError::Schema(_))));
        let two = decode(r#"{"type":"add","id":3,"vertices":[[0,0],[1,0]]}"#);
        assert!(matches!(two, Err(ProtocolError::Schema(_))));
        let neg = decode(r#"{"type":"remove","id":-1}"#);
        assert!(matches!(neg, Err(ProtocolError::Schema(_))));
        let unknown = decode(r#"{"type":"teleport","id":1}"#);
        assert!(matches!(unknown, Err(ProtocolError::Schema(_))));
        assert!(matches!(decode("{not json"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode("[1,2]"), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn extra_fields_ignored() {
        let msg = decode(r#"{"type":"remove","id":4,"client":"tablet","ts":17}"#).unwrap();
        assert_eq!(msg, WireMessage::Remove(RemoveZone { id: 4 }));
    }

    #[test]
    fn non_finite_add_not_encodable() {
        let msg = WireMessage::Add(AddZone {
            id: 1,
            vertices: vec![[0.0, 0.0], [f64::INFINITY, 0.0], [0.0, 1.0]],
        });
        assert!(encode(&msg).is_err());
    }

    #[test]
    fn map_state_grid_round_trip() {
        let mut g = base();
        g.set(crate::grid::GridIndex::new(2, 3), CellState::Occupied);
        g.set(crate::grid::GridIndex::new(0, 0), CellState::Unknown);
        let m = MapState::from_grid(&g, 4, vec![]);
        assert_eq!(m.to_grid().unwrap(), g);
        let bytes = m.cell_bytes().unwrap();
        assert_eq!(bytes[0], CELL_UNKNOWN);
        assert_eq!(bytes[3 * 8 + 2], CELL_OCCUPIED);
    }

    #[test]
    fn add_then_remove_restores_registry() {
        let mut reg = ZoneRegistry::new(base());
        let start = reg.clone();
        let mut rev = 0;
        let add = decode(r#"{"type":"add","id":1,"vertices":[[0.5,0.5],[2.5,0.5],[2.5,2.5]]}"#).unwrap();
        let rm = decode(r#"{"type":"remove","id":1}"#).unwrap();
        let a = apply_message(&mut reg, &mut rev, &add);
        let b = apply_message(&mut reg, &mut rev, &rm);
        for applied in [a, b] {
            match applied {
                Applied::Changed(msgs) => {
                    assert_eq!(msgs.len(), 1);
                    assert!(matches!(msgs[0], WireMessage::Map(_)));
                }
                Applied::Rejected(r) => panic!("rejected: {r:?}"),
            }
        }
        assert_eq!(reg, start);
        assert_eq!(rev, 2);
    }

    #[test]
    fn unknown_remove_rejected_without_mutation() {
        let mut reg = ZoneRegistry::new(base());
        let mut rev = 0;
        let before = reg.state_hash();
        let out = apply_message(&mut reg, &mut rev, &WireMessage::Remove(RemoveZone { id: 9 }));
        match out {
            Applied::Rejected(WireMessage::Error(e)) => {
                assert_eq!(e.code, "unknown_id");
                assert_eq!(e.id, Some(9));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(reg.state_hash(), before);
        assert_eq!(rev, 0);
    }

    #[test]
    fn server_messages_from_clients_rejected() {
        let mut reg = ZoneRegistry::new(base());
        let mut rev = 0;
        let map = WireMessage::Map(MapState::from_grid(&base(), 0, vec![]));
        assert!(matches!(
            apply_message(&mut reg, &mut rev, &map),
            Applied::Rejected(WireMessage::Error(ErrorReply { ref code, .. })) if code == "unsupported"
        ));
    }
}
