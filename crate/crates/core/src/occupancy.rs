//! Per-frame vehicle → slot assignment and the events derived from it.
//!
//! A vehicle occupies the first slot (ascending `slot_id`) whose polygon
//! contains its center. Vehicles are visited in ascending id order, so when
//! two centers land in one slot the lower id keeps it.

use serde::Serialize;
use thiserror::Error;
use tracing::warn;

use crate::geometry::Point;
use crate::slots::{SlotId, SlotMap};

pub type VehicleId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OccupancyError {
    #[error("vehicle id {0} appears twice in frame")]
    DuplicateVehicle(VehicleId),
    #[error("vehicle id 0 is reserved for free slots")]
    ZeroVehicleId,
    #[error("slot count changed from {prev} to {curr}")]
    SlotCountMismatch { prev: usize, curr: usize },
    #[error("frame {curr} does not follow frame {prev}")]
    FrameOrder { prev: u64, curr: u64 },
    #[error("inconsistent entry for slot index {index}: {reason}")]
    InvalidEntry { index: usize, reason: &'static str },
}

/// Occupied flag plus the occupying vehicle (0 when free).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SlotEntry {
    pub occupied: bool,
    pub vehicle_id: VehicleId,
}

impl SlotEntry {
    pub const FREE: SlotEntry = SlotEntry {
        occupied: false,
        vehicle_id: 0,
    };

    pub fn occupied_by(vehicle_id: VehicleId) -> Self {
        Self {
            occupied: true,
            vehicle_id,
        }
    }
}

/// Occupancy of every slot at one frame. `entries[k]` belongs to the k-th
/// slot in ascending `slot_id` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyFrame {
    pub frame_index: u64,
    pub timestamp_ms: Option<i64>,
    pub entries: Vec<SlotEntry>,
    pub unassigned_vehicles: Vec<VehicleId>,
}

impl OccupancyFrame {
    pub fn all_free(frame_index: u64, timestamp_ms: Option<i64>, slot_count: usize) -> Self {
        Self {
            frame_index,
            timestamp_ms,
            entries: vec![SlotEntry::FREE; slot_count],
            unassigned_vehicles: Vec::new(),
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.entries.iter().filter(|e| e.occupied).count()
    }

    pub fn validate(&self) -> Result<(), OccupancyError> {
        for (index, e) in self.entries.iter().enumerate() {
            if !e.occupied && e.vehicle_id != 0 {
                return Err(OccupancyError::InvalidEntry {
                    index,
                    reason: "free slot with non-zero vehicle id",
                });
            }
            if e.occupied && e.vehicle_id == 0 {
                return Err(OccupancyError::InvalidEntry {
                    index,
                    reason: "occupied slot with vehicle id 0",
                });
            }
        }
        Ok(())
    }

    /// Applies one change event. `slot_ids` maps entry positions to ids.
    pub fn apply(&mut self, event: &OccupancyEvent, slot_ids: &[SlotId]) -> bool {
        let Some(k) = slot_ids.iter().position(|&s| s == event.slot_id) else {
            return false;
        };
        self.entries[k] = match event.kind {
            EventKind::Occupied | EventKind::VehicleChanged => {
                SlotEntry::occupied_by(event.vehicle_id)
            }
            EventKind::Freed => SlotEntry::FREE,
        };
        self.frame_index = self.frame_index.max(event.frame_index);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Occupied,
    Freed,
    VehicleChanged,
}

/// A slot changed state. `vehicle_id` is the new occupant, or the previous
/// one for `Freed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OccupancyEvent {
    pub frame_index: u64,
    pub slot_id: SlotId,
    pub kind: EventKind,
    pub vehicle_id: VehicleId,
}

/// Counts for the occupied/free status bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameSummary {
    pub frame_index: u64,
    pub occupied_count: usize,
    pub free_count: usize,
    pub total_slots: usize,
}

/// Two vehicle centers fell in the same slot; `rejected` was left unassigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotConflict {
    pub frame_index: u64,
    pub slot_id: SlotId,
    pub holder: VehicleId,
    pub rejected: VehicleId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAssignment {
    pub frame: OccupancyFrame,
    pub conflicts: Vec<SlotConflict>,
}

/// Assigns vehicle centers to slots for one frame.
pub fn assign_frame(
    vehicles: &[(VehicleId, Point)],
    map: &SlotMap,
    frame_index: u64,
    timestamp_ms: Option<i64>,
) -> Result<FrameAssignment, OccupancyError> {
    let mut order: Vec<&(VehicleId, Point)> = vehicles.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    for w in order.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(OccupancyError::DuplicateVehicle(w[0].0));
        }
    }
    if order.first().is_some_and(|v| v.0 == 0) {
        return Err(OccupancyError::ZeroVehicleId);
    }

    let mut frame = OccupancyFrame::all_free(frame_index, timestamp_ms, map.len());
    let mut conflicts = Vec::new();
    for &&(id, center) in &order {
        let hit = map
            .slots()
            .iter()
            .position(|slot| slot.polygon.contains(center));
        match hit {
            Some(k) if !frame.entries[k].occupied => {
                frame.entries[k] = SlotEntry::occupied_by(id);
            }
            Some(k) => {
                let c = SlotConflict {
                    frame_index,
                    slot_id: map.slots()[k].slot_id,
                    holder: frame.entries[k].vehicle_id,
                    rejected: id,
                };
                warn!(
                    frame = frame_index,
                    slot = c.slot_id,
                    holder = c.holder,
                    rejected = c.rejected,
                    "two vehicles in one slot"
                );
                conflicts.push(c);
                frame.unassigned_vehicles.push(id);
            }
            None => frame.unassigned_vehicles.push(id),
        }
    }
    Ok(FrameAssignment { frame, conflicts })
}

/// Events for the first frame of a stream: one `Occupied` per occupied slot,
/// as if the frame before it were all free.
pub fn initial_events(frame: &OccupancyFrame, slot_ids: &[SlotId]) -> Vec<OccupancyEvent> {
    frame
        .entries
        .iter()
        .zip(slot_ids)
        .filter(|(e, _)| e.occupied)
        .map(|(e, &slot_id)| OccupancyEvent {
            frame_index: frame.frame_index,
            slot_id,
            kind: EventKind::Occupied,
            vehicle_id: e.vehicle_id,
        })
        .collect()
}

/// Change events between two consecutive frames, in slot order.
pub fn diff_frames(
    prev: &OccupancyFrame,
    curr: &OccupancyFrame,
    slot_ids: &[SlotId],
) -> Result<Vec<OccupancyEvent>, OccupancyError> {
    if prev.entries.len() != curr.entries.len() || curr.entries.len() != slot_ids.len() {
        return Err(OccupancyError::SlotCountMismatch {
            prev: prev.entries.len(),
            curr: curr.entries.len(),
        });
    }
    if curr.frame_index <= prev.frame_index {
        return Err(OccupancyError::FrameOrder {
            prev: prev.frame_index,
            curr: curr.frame_index,
        });
    }
    let events = prev
        .entries
        .iter()
        .zip(&curr.entries)
        .zip(slot_ids)
        .filter_map(|((p, c), &slot_id)| {
            let (kind, vehicle_id) = match (p.occupied, c.occupied) {
                (false, true) => (EventKind::Occupied, c.vehicle_id),
                (true, false) => (EventKind::Freed, p.vehicle_id),
                (true, true) if p.vehicle_id != c.vehicle_id => {
                    (EventKind::VehicleChanged, c.vehicle_id)
                }
                _ => return None,
            };
            Some(OccupancyEvent {
                frame_index: curr.frame_index,
                slot_id,
                kind,
                vehicle_id,
            })
        })
        .collect();
    Ok(events)
}

pub fn summarize(frame: &OccupancyFrame) -> FrameSummary {
    let occupied = frame.occupied_count();
    FrameSummary {
        frame_index: frame.frame_index,
        occupied_count: occupied,
        free_count: frame.entries.len() - occupied,
        total_slots: frame.entries.len(),
    }
}

/// Holds each slot's reported state until a new raw state has persisted for
/// `min_dwell_frames` consecutive frames. Values of 0 or 1 pass frames
/// through unchanged.
#[derive(Debug, Clone)]
pub struct Debouncer {
    min_dwell_frames: u32,
    reported: Vec<SlotEntry>,
    pending: Vec<(SlotEntry, u32)>,
}

impl Debouncer {
    pub fn new(min_dwell_frames: u32, slot_count: usize) -> Self {
        Self {
            min_dwell_frames,
            reported: vec![SlotEntry::FREE; slot_count],
            pending: vec![(SlotEntry::FREE, 0); slot_count],
        }
    }

    pub fn apply(&mut self, mut raw: OccupancyFrame) -> OccupancyFrame {
        if self.min_dwell_frames <= 1 {
            return raw;
        }
        for (k, entry) in raw.entries.iter_mut().enumerate() {
            if *entry == self.reported[k] {
                self.pending[k] = (*entry, 0);
            } else {
                let (candidate, streak) = &mut self.pending[k];
                if *candidate == *entry {
                    *streak += 1;
                } else {
                    *candidate = *entry;
                    *streak = 1;
                }
                if *streak >= self.min_dwell_frames {
                    self.reported[k] = *entry;
                    *streak = 0;
                }
            }
            *entry = self.reported[k];
        }
        raw
    }
}
