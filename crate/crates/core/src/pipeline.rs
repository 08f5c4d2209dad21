//! One frame at a time: track, assign to slots, diff against the previous
//! frame.

use thiserror::Error;

use crate::ingest::DetectionFrame;
use crate::occupancy::{
    assign_frame, diff_frames, initial_events, summarize, Debouncer, FrameSummary, OccupancyError,
    OccupancyEvent, OccupancyFrame, SlotConflict,
};
use crate::slots::{SlotId, SlotMap};
use crate::tracking::{StepReport, Tracker, TrackerParams, TrackingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: OccupancyFrame,
    pub events: Vec<OccupancyEvent>,
    pub summary: FrameSummary,
    pub conflicts: Vec<SlotConflict>,
    pub report: StepReport,
}

pub struct Pipeline {
    map: SlotMap,
    slot_ids: Vec<SlotId>,
    tracker: Tracker,
    debouncer: Debouncer,
    prev: Option<OccupancyFrame>,
}

impl Pipeline {
    pub fn new(
        map: SlotMap,
        params: TrackerParams,
        min_dwell_frames: u32,
    ) -> Result<Self, PipelineError> {
        let tracker = Tracker::new(params)?;
        Ok(Self {
            slot_ids: map.slot_ids(),
            debouncer: Debouncer::new(min_dwell_frames, map.len()),
            map,
            tracker,
            prev: None,
        })
    }

    pub fn slot_map(&self) -> &SlotMap {
        &self.map
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn last_frame(&self) -> Option<&OccupancyFrame> {
        self.prev.as_ref()
    }

    /// Confirmed tracks (coasting ones too) whose center lies inside the
    /// frame take part in slot assignment. Coasting tracks of vehicles that
    /// left the picture drift out of the frame and are dropped here.
    pub fn step(&mut self, input: &DetectionFrame) -> Result<FrameOutput, PipelineError> {
        let report = self.tracker.step(&input.detections);
        let centers: Vec<_> = report
            .vehicles
            .iter()
            .filter(|v| self.map.contains_point(v.center))
            .map(|v| (v.id, v.center))
            .collect();
        let assigned = assign_frame(&centers, &self.map, input.frame_index, input.timestamp_ms)?;
        let frame = self.debouncer.apply(assigned.frame);
        let events = match &self.prev {
            Some(prev) => diff_frames(prev, &frame, &self.slot_ids)?,
            None => initial_events(&frame, &self.slot_ids),
        };
        let summary = summarize(&frame);
        self.prev = Some(frame.clone());
        Ok(FrameOutput {
            frame,
            events,
            summary,
            conflicts: assigned.conflicts,
            report,
        })
    }
}
