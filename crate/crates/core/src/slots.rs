//! The slot map: manually annotated parking-slot polygons and their JSON file.
//!
//! File layout (closing vertex explicit):
//!
//! ```json
//! {"version":1,"frame_width":1280,"frame_height":720,"reference_image":null,
//!  "slots":[{"slot_id":0,"label":"A1","polygon":[[x0,y0],[x1,y1],...,[x0,y0]]}]}
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{intersection_area, shared_boundary_length, validate_polygon, Point, Polygon};

pub const SLOT_MAP_VERSION: u32 = 1;

/// First/last vertices closer than this are snapped together on load.
pub const AUTO_CLOSE_TOLERANCE: f64 = 1e-6;

/// Overlap area or shared edge length above this is reported.
pub const OVERLAP_TOLERANCE: f64 = 1e-9;

pub type SlotId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub slot_id: SlotId,
    pub polygon: Polygon,
    pub label: Option<String>,
}

/// Validated slot map. Slots are kept sorted by `slot_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotMap {
    slots: Vec<Slot>,
    pub frame_width: u32,
    pub frame_height: u32,
    pub reference_image: Option<String>,
    pub version: u32,
}

/// A problem with one slot, or with the map as a whole when `slot_id` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotIssue {
    pub slot_id: Option<SlotId>,
    pub message: String,
}

impl fmt::Display for SlotIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.slot_id {
            Some(id) => write!(f, "slot {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum SlotMapError {
    #[error("slot map parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid slot map: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<SlotIssue>),
}

impl SlotMapError {
    pub fn issues(&self) -> Vec<String> {
        match self {
            Self::Parse { .. } => vec![self.to_string()],
            Self::Invalid(issues) => issues.iter().map(|i| i.to_string()).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotMapFile {
    version: u32,
    frame_width: u32,
    frame_height: u32,
    reference_image: Option<String>,
    slots: Vec<SlotFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotFile {
    slot_id: SlotId,
    #[serde(default)]
    label: Option<String>,
    polygon: Vec<[f64; 2]>,
}

/// A loaded map plus any non-fatal notes (auto-closed polygons, overlaps).
#[derive(Debug, Clone)]
pub struct LoadedSlotMap {
    pub map: SlotMap,
    pub warnings: Vec<String>,
}

impl SlotMap {
    /// Builds a map, checking id uniqueness and frame bounds. Polygons are
    /// already valid by construction.
    pub fn new(
        mut slots: Vec<Slot>,
        frame_width: u32,
        frame_height: u32,
        reference_image: Option<String>,
    ) -> Result<Self, SlotMapError> {
        let mut issues = Vec::new();
        if frame_width == 0 || frame_height == 0 {
            issues.push(SlotIssue {
                slot_id: None,
                message: format!("frame size {frame_width}x{frame_height} must be positive"),
            });
        }
        let mut seen = BTreeSet::new();
        for s in &slots {
            if !seen.insert(s.slot_id) {
                issues.push(SlotIssue {
                    slot_id: None,
                    message: format!("duplicate slot_id {}", s.slot_id),
                });
            }
            issues.extend(bounds_issues(s.slot_id, &s.polygon, frame_width, frame_height));
        }
        if !issues.is_empty() {
            return Err(SlotMapError::Invalid(issues));
        }
        slots.sort_by_key(|s| s.slot_id);
        Ok(Self {
            slots,
            frame_width,
            frame_height,
            reference_image,
            version: SLOT_MAP_VERSION,
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Number of slots (`Nb`).
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot_ids(&self) -> Vec<SlotId> {
        self.slots.iter().map(|s| s.slot_id).collect()
    }

    /// Position of `slot_id` in the sorted slot list, which is also its index
    /// in every occupancy frame.
    pub fn index_of(&self, slot_id: SlotId) -> Option<usize> {
        self.slots.binary_search_by_key(&slot_id, |s| s.slot_id).ok()
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.frame_width as f64 && p.y <= self.frame_height as f64
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(save_slot_map(self)))
    }
}

fn bounds_issues(id: SlotId, poly: &Polygon, w: u32, h: u32) -> Vec<SlotIssue> {
    poly.ring()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.x < 0.0 || p.y < 0.0 || p.x > w as f64 || p.y > h as f64)
        .map(|(i, p)| SlotIssue {
            slot_id: Some(id),
            message: format!("vertex {i} {p} outside frame {w}x{h}"),
        })
        .collect()
}

/// Parses and fully validates a slot-map document.
///
/// Either the whole map is valid or every problem found is returned.
pub fn load_slot_map(source: &[u8]) -> Result<LoadedSlotMap, SlotMapError> {
    let de = &mut serde_json::Deserializer::from_slice(source);
    let file: SlotMapFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SlotMapError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;

    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    if file.version != SLOT_MAP_VERSION {
        issues.push(SlotIssue {
            slot_id: None,
            message: format!("unsupported version {} (expected {SLOT_MAP_VERSION})", file.version),
        });
    }

    let mut slots = Vec::with_capacity(file.slots.len());
    for raw in file.slots {
        let mut vertices: Vec<Point> = raw.polygon.iter().map(|&v| Point::from(v)).collect();
        if let (Some(first), Some(last)) = (vertices.first().copied(), vertices.last().copied()) {
            let gap = first.distance(&last);
            if vertices.len() > 3 && gap > 0.0 && gap <= AUTO_CLOSE_TOLERANCE {
                let n = vertices.len();
                vertices[n - 1] = first;
                warnings.push(format!(
                    "slot {}: closing vertex snapped to vertex 0 (gap {gap:e})",
                    raw.slot_id
                ));
            }
        }
        match validate_polygon(vertices) {
            Ok(polygon) => slots.push(Slot {
                slot_id: raw.slot_id,
                polygon,
                label: raw.label,
            }),
            Err(violations) => issues.extend(violations.into_iter().map(|v| SlotIssue {
                slot_id: Some(raw.slot_id),
                message: v.to_string(),
            })),
        }
    }

    let map = match SlotMap::new(slots, file.frame_width, file.frame_height, file.reference_image) {
        Ok(map) if issues.is_empty() => map,
        Ok(_) => return Err(SlotMapError::Invalid(issues)),
        Err(SlotMapError::Invalid(more)) => {
            issues.extend(more);
            return Err(SlotMapError::Invalid(issues));
        }
        Err(e) => return Err(e),
    };

    for o in slot_overlap_report(&map) {
        warnings.push(o.to_string());
    }
    Ok(LoadedSlotMap { map, warnings })
}

/// Canonical serialization; `load_slot_map` reads it back to an equal map.
pub fn save_slot_map(map: &SlotMap) -> Vec<u8> {
    let file = SlotMapFile {
        version: map.version,
        frame_width: map.frame_width,
        frame_height: map.frame_height,
        reference_image: map.reference_image.clone(),
        slots: map
            .slots
            .iter()
            .map(|s| SlotFile {
                slot_id: s.slot_id,
                label: s.label.clone(),
                polygon: s.polygon.vertices().iter().map(|&p| p.into()).collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&file).expect("slot map serializes");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapKind {
    /// Interiors overlap with positive area.
    Interior,
    /// Interiors are disjoint but an edge segment of positive length is shared.
    SharedBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOverlap {
    pub a: SlotId,
    pub b: SlotId,
    pub kind: OverlapKind,
    pub area: f64,
}

impl fmt::Display for SlotOverlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OverlapKind::Interior => {
                write!(f, "slots {} and {} overlap (area {:.3})", self.a, self.b, self.area)
            }
            OverlapKind::SharedBoundary => {
                write!(f, "slots {} and {} share a boundary edge", self.a, self.b)
            }
        }
    }
}

/// Every pair of slots whose polygons overlap in area or share an edge
/// segment. Touching at isolated points is not reported.
pub fn slot_overlap_report(map: &SlotMap) -> Vec<SlotOverlap> {
    let mut out = Vec::new();
    let slots = map.slots();
    for (i, a) in slots.iter().enumerate() {
        let (ax0, ay0, ax1, ay1) = a.polygon.bounds();
        for b in &slots[i + 1..] {
            let (bx0, by0, bx1, by1) = b.polygon.bounds();
            if ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0 {
                continue;
            }
            let area = intersection_area(&a.polygon, &b.polygon);
            let kind = if area > OVERLAP_TOLERANCE {
                Some(OverlapKind::Interior)
            } else if shared_boundary_length(&a.polygon, &b.polygon, OVERLAP_TOLERANCE)
                > OVERLAP_TOLERANCE
            {
                Some(OverlapKind::SharedBoundary)
            } else {
                None
            };
            if let Some(kind) = kind {
                out.push(SlotOverlap {
                    a: a.slot_id,
                    b: b.slot_id,
                    kind,
                    area,
                });
            }
        }
    }
    out
}

/// Axis-aligned rectangular slot, handy for layouts and tests.
pub fn rect_slot(slot_id: SlotId, x0: f64, y0: f64, x1: f64, y1: f64, label: Option<String>) -> Slot {
    let polygon = Polygon::new(vec![
        Point::new(x0, y0),
        Point::new(x1, y0),
        Point::new(x1, y1),
        Point::new(x0, y1),
        Point::new(x0, y0),
    ])
    .expect("rectangle with positive extent is a valid polygon");
    Slot {
        slot_id,
        polygon,
        label,
    }
}
