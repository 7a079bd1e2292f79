//! Keep-out zone editing for occupancy-grid costmaps.
//!
//! Operators draw polygonal restricted zones; each zone is rasterized onto a
//! copy of the robot's map, persisted, synchronized to connected clients and
//! immediately used for global path planning. Evaluation helpers compare a
//! drawn map against ground truth and run navigation trials.
//!
//! Module map:
//! - [`grid`]: occupancy grid, coordinate mapping, map files
//! - [`geometry`]: polygon rasterization and frame alignment
//! - [`registry`]: zone table, composite map, persistence
//! - [`protocol`]: wire messages and edit application
//! - [`planner`]: A* global planner
//! - [`metrics`]: confusion counts and accuracy metrics
//! - [`navsim`]: navigation trials, fixtures, robot stepping
//! - [`service`]: live web socket / TCP service
//! - [`cli`]: the `hrz` command

pub mod cli;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod navsim;
pub mod planner;
pub mod protocol;
pub mod registry;
pub mod service;

pub use geometry::{AnchorTransform, Polygon};
pub use grid::{CellState, GridIndex, OccupancyGrid, Point, Pose2D};
pub use registry::{Zone, ZoneId, ZoneRegistry};
