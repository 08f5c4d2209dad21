use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::geometry::{BoundingBox, Point};

use super::kalman::{KalmanError, KalmanFilter, Measurement, MotionState, StateCovariance, StateVector};
use super::TrackingError;

pub type TrackId = u64;

/// Detector class vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectClass {
    Bus,
    BicycleMotorcycle,
    Truck,
    Pedestrian,
    Car,
    /// Only accepted when the stream reader is configured to allow it.
    Unknown,
}

impl ObjectClass {
    pub const KNOWN: [ObjectClass; 5] = [
        ObjectClass::Bus,
        ObjectClass::BicycleMotorcycle,
        ObjectClass::Truck,
        ObjectClass::Pedestrian,
        ObjectClass::Car,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bus => "Bus",
            Self::BicycleMotorcycle => "Bicycle/Motorcycle",
            Self::Truck => "Truck",
            Self::Pedestrian => "Pedestrian",
            Self::Car => "Car",
            Self::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Bus" => Ok(Self::Bus),
            "Bicycle/Motorcycle" => Ok(Self::BicycleMotorcycle),
            "Truck" => Ok(Self::Truck),
            "Pedestrian" => Ok(Self::Pedestrian),
            "Car" => Ok(Self::Car),
            "Unknown" => Ok(Self::Unknown),
            other => Err(format!("unknown class label {other:?}")),
        }
    }
}

/// One detector output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class: ObjectClass,
    pub confidence: f64,
    /// Unit-norm appearance descriptor, when the detector provides one.
    pub appearance: Option<Vec<f64>>,
}

impl Detection {
    /// Validates confidence and normalizes the appearance vector.
    pub fn new(
        bbox: BoundingBox,
        class: ObjectClass,
        confidence: f64,
        appearance: Option<Vec<f64>>,
    ) -> Result<Self, TrackingError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TrackingError::InvalidDetection(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        let appearance = appearance.map(normalize_appearance).transpose()?;
        Ok(Self {
            bbox,
            class,
            confidence,
            appearance,
        })
    }

    pub fn measurement(&self) -> Measurement {
        let c = self.bbox.center();
        Measurement::new(c.x, c.y, self.bbox.height(), self.bbox.aspect_ratio())
    }
}

pub fn normalize_appearance(mut v: Vec<f64>) -> Result<Vec<f64>, TrackingError> {
    if v.is_empty() {
        return Err(TrackingError::InvalidDetection("empty appearance vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(TrackingError::InvalidDetection(
            "non-finite appearance component".into(),
        ));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(TrackingError::InvalidDetection("zero appearance vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AppearanceError {
    EmptyGallery,
    DimensionMismatch { gallery: usize, query: usize },
}

/// Smallest cosine distance `1 - g·a` between `appearance` and any gallery
/// entry. All vectors are expected to be unit norm.
pub fn appearance_distance<'a>(
    gallery: impl IntoIterator<Item = &'a Vec<f64>>,
    appearance: &[f64],
) -> Result<f64, AppearanceError> {
    let mut best: Option<f64> = None;
    for g in gallery {
        if g.len() != appearance.len() {
            return Err(AppearanceError::DimensionMismatch {
                gallery: g.len(),
                query: appearance.len(),
            });
        }
        let dot: f64 = g.iter().zip(appearance).map(|(a, b)| a * b).sum();
        let d = (1.0 - dot).clamp(0.0, 2.0);
        best = Some(best.map_or(d, |b: f64| b.min(d)));
    }
    best.ok_or(AppearanceError::EmptyGallery)
}

/// A vehicle identity carried across frames.
#[derive(Debug, Clone)]
pub struct Track {
    id: TrackId,
    mean: StateVector,
    covariance: StateCovariance,
    status: TrackStatus,
    hits: u32,
    time_since_update: u32,
    class: ObjectClass,
    gallery: VecDeque<Vec<f64>>,
    gallery_capacity: usize,
    matched_bbox: Option<BoundingBox>,
}

impl Track {
    /// Starts a tentative track from its first detection (which counts as a hit).
    pub fn new(
        id: TrackId,
        kf: &KalmanFilter,
        det: &Detection,
        n_init: u32,
        gallery_capacity: usize,
    ) -> Self {
        let (mean, covariance) = kf.initiate(&det.measurement());
        let mut track = Self {
            id,
            mean,
            covariance,
            status: TrackStatus::Tentative,
            hits: 1,
            time_since_update: 0,
            class: det.class,
            gallery: VecDeque::new(),
            gallery_capacity,
            matched_bbox: Some(det.bbox),
        };
        track.push_appearance(det);
        if track.hits >= n_init {
            track.status = TrackStatus::Confirmed;
        }
        track
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn is_deleted(&self) -> bool {
        self.status == TrackStatus::Deleted
    }

    pub fn hits(&self) -> u32 {
        self.hits
    }

    pub fn time_since_update(&self) -> u32 {
        self.time_since_update
    }

    pub fn class(&self) -> ObjectClass {
        self.class
    }

    pub fn mean(&self) -> &StateVector {
        &self.mean
    }

    pub fn covariance(&self) -> &StateCovariance {
        &self.covariance
    }

    pub fn state(&self) -> MotionState {
        MotionState::from(&self.mean)
    }

    pub fn gallery(&self) -> &VecDeque<Vec<f64>> {
        &self.gallery
    }

    /// Box implied by the filtered state.
    pub fn state_bbox(&self) -> Result<BoundingBox, TrackingError> {
        let s = self.state();
        BoundingBox::from_center_size(Point::new(s.x, s.y), s.r * s.h, s.h)
            .map_err(|_| TrackingError::CorruptedTrack(self.id))
    }

    /// The matched detection box on frames with an update, the filtered
    /// state box while coasting.
    pub fn output_bbox(&self) -> Result<BoundingBox, TrackingError> {
        match (self.time_since_update, self.matched_bbox) {
            (0, Some(b)) => Ok(b),
            _ => self.state_bbox(),
        }
    }

    pub fn predict(&mut self, kf: &KalmanFilter) -> Result<(), TrackingError> {
        if self.is_deleted() {
            return Err(TrackingError::CorruptedTrack(self.id));
        }
        let (mean, cov) = kf
            .predict(&self.mean, &self.covariance)
            .map_err(|_| TrackingError::CorruptedTrack(self.id))?;
        self.mean = mean;
        self.covariance = cov;
        self.time_since_update += 1;
        self.matched_bbox = None;
        Ok(())
    }

    pub fn update(
        &mut self,
        kf: &KalmanFilter,
        det: &Detection,
        n_init: u32,
    ) -> Result<(), TrackingError> {
        let (mean, cov) = kf
            .update(&self.mean, &self.covariance, &det.measurement())
            .map_err(|e| match e {
                KalmanError::NonFinite | KalmanError::NotPositiveDefinite => {
                    TrackingError::CorruptedTrack(self.id)
                }
            })?;
        self.mean = mean;
        self.covariance = cov;
        self.hits += 1;
        self.time_since_update = 0;
        self.class = det.class;
        self.matched_bbox = Some(det.bbox);
        self.push_appearance(det);
        if self.status == TrackStatus::Tentative && self.hits >= n_init {
            self.status = TrackStatus::Confirmed;
        }
        Ok(())
    }

    pub fn mark_missed(&mut self, max_age: u32) {
        match self.status {
            TrackStatus::Tentative => self.status = TrackStatus::Deleted,
            TrackStatus::Confirmed if self.time_since_update > max_age => {
                self.status = TrackStatus::Deleted
            }
            _ => {}
        }
    }

    pub fn mark_deleted(&mut self) {
        self.status = TrackStatus::Deleted;
    }

    fn push_appearance(&mut self, det: &Detection) {
        if self.gallery_capacity == 0 {
            return;
        }
        if let Some(a) = &det.appearance {
            if self.gallery.len() == self.gallery_capacity {
                self.gallery.pop_front();
            }
            self.gallery.push_back(a.clone());
        }
    }
}
