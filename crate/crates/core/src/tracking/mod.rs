//! Tracking-by-detection: Kalman prediction, gated global assignment and
//! track lifecycle.
//!
//! Each frame runs predict → associate → update/miss → spawn → prune. Pairs
//! are gated by the squared Mahalanobis distance of the measurement and,
//! by default, by the IoU between the predicted and detected boxes. Feasible
//! pairs are scored by a weighted sum of the gate-normalized motion distance
//! and the cosine appearance distance, then matched with the Hungarian method.

pub mod assignment;
pub mod kalman;
mod track;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::geometry::{iou, BoundingBox, Point};

pub use assignment::{CostMatrix, Matching};
pub use kalman::{KalmanError, KalmanFilter, MotionState, NoiseParams};
pub use track::{
    appearance_distance, normalize_appearance, AppearanceError, Detection, ObjectClass, Track,
    TrackId, TrackStatus,
};

/// 95% quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

/// Largest possible cosine distance between unit vectors.
const MAX_APPEARANCE_DISTANCE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("track {0} has a corrupted state")]
    CorruptedTrack(TrackId),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid tracker parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    /// Reject a pair when either the Mahalanobis or the IoU gate fails.
    #[default]
    Both,
    MahalanobisOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    pub iou_min: f64,
    /// Weight of the motion term; `1 - lambda` goes to appearance.
    pub lambda: f64,
    pub mahalanobis_gate: f64,
    pub max_age: u32,
    pub n_init: u32,
    pub gallery_capacity: usize,
    pub gating: GatingMode,
    pub class_consistent_matching: bool,
    pub noise: NoiseParams,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            iou_min: 0.3,
            lambda: 0.5,
            mahalanobis_gate: CHI2_95_4DOF,
            max_age: 30,
            n_init: 3,
            gallery_capacity: 100,
            gating: GatingMode::Both,
            class_consistent_matching: false,
            noise: NoiseParams::default(),
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackingError> {
        let bad = |msg: String| Err(TrackingError::InvalidParams(msg));
        if !(self.iou_min > 0.0 && self.iou_min < 1.0) {
            return bad(format!("iou_min {} not in (0, 1)", self.iou_min));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} not in [0, 1]", self.lambda));
        }
        if !(self.mahalanobis_gate.is_finite() && self.mahalanobis_gate > 0.0) {
            return bad(format!("mahalanobis_gate {} must be > 0", self.mahalanobis_gate));
        }
        if self.n_init == 0 {
            return bad("n_init must be >= 1".into());
        }
        let n = &self.noise;
        let stds = [
            n.std_weight_position,
            n.std_weight_velocity,
            n.aspect_std_position,
            n.aspect_std_velocity,
            n.aspect_std_measurement,
            n.measurement_scale,
        ];
        if stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("noise parameters must be finite and > 0".into());
        }
        Ok(())
    }
}

/// `lambda·motion + (1 - lambda)·appearance`, both already normalized to `[0, 1]`.
pub fn combined_cost(d_motion: f64, d_appearance: f64, lambda: f64) -> f64 {
    lambda * d_motion + (1.0 - lambda) * d_appearance
}

/// Outcome of associating predicted tracks with one frame's detections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    pub matches: Vec<(TrackId, usize)>,
    pub unmatched_tracks: Vec<TrackId>,
    pub unmatched_detections: Vec<usize>,
    /// Feasible pairs scored on motion alone because appearance was missing
    /// on one side or had a different dimension.
    pub appearance_fallbacks: usize,
}

/// Gated cost of pairing `track` with `det`, or `None` when a gate rejects it.
/// The second value reports whether appearance had to be skipped.
pub fn pair_cost(
    track: &Track,
    det: &Detection,
    params: &TrackerParams,
    kf: &KalmanFilter,
) -> Result<(Option<f64>, bool), TrackingError> {
    if params.class_consistent_matching && track.class() != det.class {
        return Ok((None, false));
    }
    let d_sq = kf
        .mahalanobis_sq(track.mean(), track.covariance(), &det.measurement())
        .map_err(|_| TrackingError::CorruptedTrack(track.id()))?;
    if d_sq > params.mahalanobis_gate {
        return Ok((None, false));
    }
    if params.gating == GatingMode::Both {
        let predicted = track.state_bbox()?;
        if iou(&predicted, &det.bbox) < params.iou_min {
            return Ok((None, false));
        }
    }
    let d_motion = d_sq / params.mahalanobis_gate;
    let d_appearance = det
        .appearance
        .as_ref()
        .and_then(|a| appearance_distance(track.gallery(), a).ok());
    Ok(match d_appearance {
        Some(d) => (
            Some(combined_cost(d_motion, d / MAX_APPEARANCE_DISTANCE, params.lambda)),
            false,
        ),
        None => (Some(d_motion), true),
    })
}

/// Matches predicted `tracks` to `detections`. Tracks whose cost cannot be
/// evaluated are reported in the error list and left unmatched.
pub fn associate(
    tracks: &[Track],
    detections: &[Detection],
    params: &TrackerParams,
    kf: &KalmanFilter,
) -> (Association, Vec<TrackId>) {
    let mut costs = CostMatrix::new(tracks.len(), detections.len());
    let mut fallbacks = 0;
    let mut corrupted = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        for (j, d) in detections.iter().enumerate() {
            match pair_cost(t, d, params, kf) {
                Ok((cost, fell_back)) => {
                    costs.set(i, j, cost);
                    if cost.is_some() && fell_back {
                        fallbacks += 1;
                    }
                }
                Err(_) => {
                    corrupted.push(t.id());
                    break;
                }
            }
        }
    }
    for (i, t) in tracks.iter().enumerate() {
        if corrupted.contains(&t.id()) {
            (0..detections.len()).for_each(|j| costs.set(i, j, None));
        }
    }
    let m = assignment::solve(&costs);
    let association = Association {
        matches: m.pairs.iter().map(|&(i, j)| (tracks[i].id(), j)).collect(),
        unmatched_tracks: m.unmatched_rows.iter().map(|&i| tracks[i].id()).collect(),
        unmatched_detections: m.unmatched_cols,
        appearance_fallbacks: fallbacks,
    };
    (association, corrupted)
}

/// A confirmed track as reported for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedVehicle {
    pub id: TrackId,
    pub bbox: BoundingBox,
    pub class: ObjectClass,
    pub center: Point,
    /// Zero when a detection was matched this frame.
    pub time_since_update: u32,
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    /// Confirmed tracks sorted by id, coasting ones included.
    pub vehicles: Vec<TrackedVehicle>,
    pub created: Vec<TrackId>,
    pub deleted: Vec<TrackId>,
    /// Tracks dropped because their state became unusable.
    pub corrupted: Vec<TrackId>,
    pub appearance_fallbacks: usize,
}

/// Owns the live tracks. One caller at a time may step it.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: TrackId,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self, TrackingError> {
        params.validate()?;
        Ok(Self {
            kf: KalmanFilter::new(params.noise),
            params,
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes one frame of detections.
    pub fn step(&mut self, detections: &[Detection]) -> StepReport {
        let mut report = StepReport::default();

        for t in &mut self.tracks {
            if let Err(e) = t.predict(&self.kf) {
                warn!(track = t.id(), "dropping track after predict failure: {e}");
                t.mark_deleted();
                report.corrupted.push(t.id());
            }
        }
        self.tracks.retain(|t| !t.is_deleted());

        let (assoc, corrupted) = associate(&self.tracks, detections, &self.params, &self.kf);
        report.appearance_fallbacks = assoc.appearance_fallbacks;
        if assoc.appearance_fallbacks > 0 {
            debug!(
                pairs = assoc.appearance_fallbacks,
                "appearance unavailable, scored on motion only"
            );
        }

        for id in corrupted {
            warn!(track = id, "dropping track with unusable covariance");
            if let Some(t) = self.tracks.iter_mut().find(|t| t.id() == id) {
                t.mark_deleted();
            }
            report.corrupted.push(id);
        }

        for &(id, j) in &assoc.matches {
            let Some(t) = self.tracks.iter_mut().find(|t| t.id() == id) else {
                continue;
            };
            if let Err(e) = t.update(&self.kf, &detections[j], self.params.n_init) {
                warn!(track = id, "dropping track after update failure: {e}");
                t.mark_deleted();
                report.corrupted.push(id);
            }
        }
        for id in &assoc.unmatched_tracks {
            if let Some(t) = self.tracks.iter_mut().find(|t| t.id() == *id) {
                if !t.is_deleted() {
                    t.mark_missed(self.params.max_age);
                }
            }
        }
        for &j in &assoc.unmatched_detections {
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track::new(
                id,
                &self.kf,
                &detections[j],
                self.params.n_init,
                self.params.gallery_capacity,
            ));
            report.created.push(id);
        }

        for t in &self.tracks {
            if t.is_deleted() && !report.corrupted.contains(&t.id()) {
                report.deleted.push(t.id());
            }
        }
        self.tracks.retain(|t| !t.is_deleted());

        for t in self.tracks.iter().filter(|t| t.is_confirmed()) {
            match t.output_bbox() {
                Ok(bbox) => report.vehicles.push(TrackedVehicle {
                    id: t.id(),
                    bbox,
                    class: t.class(),
                    center: bbox.center(),
                    time_since_update: t.time_since_update(),
                }),
                Err(e) => {
                    warn!(track = t.id(), "track box unusable: {e}");
                    report.corrupted.push(t.id());
                }
            }
        }
        if !report.corrupted.is_empty() {
            let bad = report.corrupted.clone();
            self.tracks.retain(|t| !bad.contains(&t.id()));
            report.vehicles.retain(|v| !bad.contains(&v.id));
        }
        report.vehicles.sort_by_key(|v| v.id);
        report
    }
}
