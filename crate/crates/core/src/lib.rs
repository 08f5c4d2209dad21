//! Parking occupancy engine.
//!
//! Per-frame vehicle detections go in; tracked vehicle identities, per-slot
//! occupancy, an append-only occupancy log and occupancy analytics come out.
//!
//! - [`geometry`]: point-in-polygon, IoU and box helpers.
//! - [`tracking`]: Kalman filter, gated Hungarian association, track lifecycle.
//! - [`slots`]: the annotated slot map and its JSON file format.
//! - [`occupancy`]: vehicle → slot assignment, change events, summaries.
//! - [`analytics`]: the occupancy log and the statistics computed from it.
//! - [`ingest`]: detection stream parsing and the synthetic scenario generator.
//! - [`pipeline`]: the per-frame track → assign → diff step.

pub mod analytics;
pub mod geometry;
pub mod ingest;
pub mod occupancy;
pub mod pipeline;
pub mod slots;
pub mod tracking;

pub use geometry::{BoundingBox, Point, Polygon};
pub use occupancy::{OccupancyEvent, OccupancyFrame, SlotEntry};
pub use slots::{Slot, SlotMap};
pub use tracking::{Detection, ObjectClass, Tracker, TrackerParams};
