//! Detection stream parsing and the synthetic scenario generator.
//!
//! Stream format, one frame per line:
//!
//! ```text
//! {"f":0,"t":0,"d":[{"b":[x_min,y_min,x_max,y_max],"c":"Car","p":0.93,"a":[0.1,0.7]}]}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{LogHeader, OccupancyLog};
use crate::geometry::{BoundingBox, Point};
use crate::occupancy::{OccupancyFrame, SlotEntry};
use crate::slots::{load_slot_map, rect_slot, SlotId, SlotMap};
use crate::tracking::{normalize_appearance, Detection, ObjectClass, TrackId};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("stream i/o: {0}")]
    Io(#[from] io::Error),
}

/// One frame of detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame_index: u64,
    pub timestamp_ms: Option<i64>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StreamOptions {
    /// Accept the `"Unknown"` class label.
    pub allow_unknown_class: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    f: u64,
    #[serde(default)]
    t: Option<i64>,
    d: Vec<RawDetection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    b: [f64; 4],
    c: String,
    p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<f64>>,
}

/// Pull-based reader over a detection stream. Stops after the first error.
pub struct DetectionStream<R> {
    reader: R,
    options: StreamOptions,
    line_no: usize,
    last_frame: Option<u64>,
    appearance_dim: Option<usize>,
    buf: String,
    failed: bool,
}

pub fn parse_stream<R: BufRead>(reader: R, options: StreamOptions) -> DetectionStream<R> {
    DetectionStream {
        reader,
        options,
        line_no: 0,
        last_frame: None,
        appearance_dim: None,
        buf: String::new(),
        failed: false,
    }
}

impl<R: BufRead> DetectionStream<R> {
    /// Line number of the most recently read line.
    pub fn line(&self) -> usize {
        self.line_no
    }

    pub fn appearance_dim(&self) -> Option<usize> {
        self.appearance_dim
    }

    fn parse_line(&mut self, line: &str) -> Result<DetectionFrame, String> {
        let de = &mut serde_json::Deserializer::from_str(line);
        let raw: RawFrame = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                e.into_inner().to_string()
            } else {
                format!("{path}: {}", e.into_inner())
            }
        })?;
        if let Some(prev) = self.last_frame {
            if raw.f <= prev {
                return Err(format!("f: frame {} does not follow frame {prev}", raw.f));
            }
        }
        let mut detections = Vec::with_capacity(raw.d.len());
        for (i, d) in raw.d.into_iter().enumerate() {
            detections.push(self.convert(i, d)?);
        }
        self.last_frame = Some(raw.f);
        Ok(DetectionFrame {
            frame_index: raw.f,
            timestamp_ms: raw.t,
            detections,
        })
    }

    fn convert(&mut self, i: usize, d: RawDetection) -> Result<Detection, String> {
        let [x0, y0, x1, y1] = d.b;
        if [x0, y0, x1, y1].iter().any(|v| !v.is_finite()) {
            return Err(format!("d[{i}].b: non-finite coordinate"));
        }
        if x1 < x0 {
            return Err(format!("d[{i}].b: x_max < x_min"));
        }
        if y1 < y0 {
            return Err(format!("d[{i}].b: y_max < y_min"));
        }
        let bbox = BoundingBox::new(x0, y0, x1, y1).map_err(|e| format!("d[{i}].b: {e}"))?;
        let class: ObjectClass = d.c.parse().map_err(|e| format!("d[{i}].c: {e}"))?;
        if class == ObjectClass::Unknown && !self.options.allow_unknown_class {
            return Err(format!("d[{i}].c: class \"Unknown\" is not accepted"));
        }
        if !(0.0..=1.0).contains(&d.p) {
            return Err(format!("d[{i}].p: confidence {} outside [0, 1]", d.p));
        }
        let appearance = match d.a {
            None => None,
            Some(a) => {
                match self.appearance_dim {
                    None => self.appearance_dim = Some(a.len()),
                    Some(dim) if dim != a.len() => {
                        return Err(format!(
                            "d[{i}].a: dimension {} differs from stream dimension {dim}",
                            a.len()
                        ))
                    }
                    Some(_) => {}
                }
                Some(normalize_appearance(a).map_err(|e| format!("d[{i}].a: {e}"))?)
            }
        };
        Ok(Detection {
            bbox,
            class,
            confidence: d.p,
            appearance,
        })
    }
}

impl<R: BufRead> Iterator for DetectionStream<R> {
    type Item = Result<DetectionFrame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line_no += 1;
            if self.buf.trim().is_empty() {
                continue;
            }
            let line = std::mem::take(&mut self.buf);
            let out = self.parse_line(line.trim_end());
            self.buf = line;
            return Some(out.map_err(|message| {
                self.failed = true;
                IngestError::Line {
                    line: self.line_no,
                    message,
                }
            }));
        }
    }
}

/// Serializes one frame in stream format, newline included.
pub fn frame_to_line(frame: &DetectionFrame) -> String {
    let raw = RawFrame {
        f: frame.frame_index,
        t: frame.timestamp_ms,
        d: frame
            .detections
            .iter()
            .map(|d| RawDetection {
                b: d.bbox.corners(),
                c: d.class.as_str().to_string(),
                p: d.confidence,
                a: d.appearance.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&raw).expect("frame serializes");
    s.push('\n');
    s
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("vehicle {index}: {message}")]
    Vehicle { index: usize, message: String },
    #[error("could not place random vehicle {index} after {attempts} attempts")]
    Placement { index: usize, attempts: usize },
    #[error("slot map {path}: {message}")]
    SlotMap { path: String, message: String },
}

/// Rows of rectangular slots above and below one horizontal lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridLayout {
    pub columns: u32,
    pub rows: u32,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            columns: 12,
            rows: 2,
        }
    }
}

pub const GRID_FRAME: (u32, u32) = (1280, 720);
pub const GRID_LANE_Y: f64 = 360.0;
const GRID_PITCH: f64 = 104.0;
const GRID_X0: f64 = 12.0;
const GRID_SLOT_W: f64 = 100.0;
const GRID_ROW_Y: [(f64, f64); 2] = [(78.0, 198.0), (522.0, 642.0)];

impl GridLayout {
    /// Slot `row * columns + col`; row 0 is above the lane. Slot centers sit
    /// on the 4 px lattice the default vehicles drive on and no slot edge
    /// does, so scripted centers never land on a boundary.
    pub fn slot_map(&self) -> Result<SlotMap, ScenarioError> {
        if self.columns == 0 || self.columns > 12 || self.rows == 0 || self.rows > 2 {
            return Err(ScenarioError::Invalid(
                "grid layout needs 1..=12 columns and 1..=2 rows".into(),
            ));
        }
        let mut slots = Vec::new();
        for row in 0..self.rows {
            let (y0, y1) = GRID_ROW_Y[row as usize];
            for col in 0..self.columns {
                let x0 = GRID_X0 + GRID_PITCH * f64::from(col);
                let label = format!("{}{}", (b'A' + row as u8) as char, col + 1);
                slots.push(rect_slot(
                    row * self.columns + col,
                    x0,
                    y0,
                    x0 + GRID_SLOT_W,
                    y1,
                    Some(label),
                ));
            }
        }
        SlotMap::new(slots, GRID_FRAME.0, GRID_FRAME.1, None)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

/// One scripted vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VehicleScript {
    /// Drives along the lane from the left edge to the right edge.
    Pass { entry_frame: u64 },
    /// Enters on the left, drives into `slot_id`, stays `dwell_frames`,
    /// backs out and leaves on the right.
    Park {
        entry_frame: u64,
        slot_id: SlotId,
        dwell_frames: u64,
    },
    /// Already parked at `from_frame`. With `drive_out` it backs out at
    /// `until_frame` and leaves on the right. Without it the vehicle stays
    /// until the stream ends: a car that stops being detected while parked
    /// looks like an occlusion to the tracker, not a departure.
    Parked {
        slot_id: SlotId,
        #[serde(default)]
        from_frame: u64,
        #[serde(default)]
        until_frame: Option<u64>,
        #[serde(default)]
        drive_out: bool,
    },
}

/// Parameters for randomly sampled vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomVehicles {
    pub count: usize,
    pub park_probability: f64,
    pub parked_at_start_probability: f64,
    pub dwell_frames: [u64; 2],
    pub max_attempts: usize,
}

impl Default for RandomVehicles {
    fn default() -> Self {
        Self {
            count: 10,
            park_probability: 0.7,
            parked_at_start_probability: 0.2,
            dwell_frames: [150, 900],
            max_attempts: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Std of Gaussian jitter added to box corners, in pixels.
    pub jitter_std: f64,
    /// Chance per eligible frame that a dropout gap starts.
    pub dropout_probability: f64,
    pub max_gap: u32,
    /// Dropouts only happen while a vehicle is parked, starting this many
    /// frames after it stops and ending this many frames before it moves.
    pub settle_frames: u32,
    /// Std of per-component jitter on appearance vectors.
    pub appearance_jitter_std: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            jitter_std: 0.0,
            dropout_probability: 0.0,
            max_gap: 0,
            settle_frames: 30,
            appearance_jitter_std: 0.05,
        }
    }
}

/// Scenario description, deserializable from the `synth` spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub fps: f64,
    pub frames: u64,
    /// Confirmation latency applied to the ground truth.
    pub n_init: u32,
    pub layout: GridLayout,
    /// Slot map file to use instead of the grid layout.
    pub slot_map: Option<PathBuf>,
    /// Lane height; defaults to the grid lane or half the frame height.
    pub lane_y: Option<f64>,
    pub vehicle_size: [f64; 2],
    pub speed: f64,
    pub min_separation: f64,
    pub vehicles: Vec<VehicleScript>,
    pub random_vehicles: Option<RandomVehicles>,
    pub noise: NoiseModel,
    /// 0 disables appearance vectors.
    pub appearance_dim: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            fps: 30.0,
            frames: 300,
            n_init: 3,
            layout: GridLayout::default(),
            slot_map: None,
            lane_y: None,
            vehicle_size: [36.0, 60.0],
            speed: 4.0,
            min_separation: 80.0,
            vehicles: Vec::new(),
            random_vehicles: None,
            noise: NoiseModel::default(),
            appearance_dim: 0,
        }
    }
}

/// Expected identity and extent of one scripted vehicle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleTruth {
    /// Position in the vehicle list (scripted first, then random).
    pub index: usize,
    /// Id the tracker is expected to give it.
    pub expected_id: TrackId,
    pub first_frame: u64,
    pub last_frame: u64,
    pub target_slot: Option<SlotId>,
    pub script: VehicleScript,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub slot_map: SlotMap,
    pub frames: Vec<DetectionFrame>,
    pub ground_truth: OccupancyLog,
    pub vehicles: Vec<VehicleTruth>,
}

impl ScenarioOutput {
    pub fn detection_stream(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in &self.frames {
            out.extend_from_slice(frame_to_line(f).as_bytes());
        }
        out
    }

    /// Expected id and extent of every vehicle, as pretty JSON.
    pub fn id_map_json(&self) -> String {
        serde_json::to_string_pretty(&self.vehicles).expect("truth serializes")
    }
}

/// A vehicle's center per frame from `start` on, plus the span where it is
/// stationary inside its slot.
#[derive(Debug, Clone)]
struct Path {
    start: u64,
    points: Vec<Point>,
    target: Option<usize>,
    parked: Option<(u64, u64)>,
}

impl Path {
    fn at(&self, f: u64) -> Option<Point> {
        f.checked_sub(self.start)
            .and_then(|k| self.points.get(k as usize))
            .copied()
    }

    fn end(&self) -> u64 {
        self.start + self.points.len() as u64
    }
}

struct Geometry<'a> {
    map: &'a SlotMap,
    lane_y: f64,
    speed: f64,
    frames: u64,
}

impl Geometry<'_> {
    fn drive(&self, pts: &mut Vec<Point>, to: Point) {
        let mut cur = *pts.last().expect("path has a start");
        loop {
            let d = cur.distance(&to);
            if d <= self.speed + 1e-12 {
                if d > 0.0 {
                    pts.push(to);
                }
                return;
            }
            let k = self.speed / d;
            cur = Point::new(cur.x + (to.x - cur.x) * k, cur.y + (to.y - cur.y) * k);
            pts.push(cur);
        }
    }

    fn slot_center(&self, slot_id: SlotId) -> Result<(usize, Point), String> {
        let k = self
            .map
            .index_of(slot_id)
            .ok_or_else(|| format!("unknown slot {slot_id}"))?;
        let c = self.map.slots()[k].polygon.vertex_centroid();
        if !self.map.slots()[k].polygon.contains(c) {
            return Err(format!("slot {slot_id} does not contain its vertex centroid"));
        }
        Ok((k, c))
    }

    fn entry(&self) -> Point {
        Point::new(2.0, self.lane_y)
    }

    fn exit(&self) -> Point {
        Point::new(f64::from(self.map.frame_width) - 2.0, self.lane_y)
    }

    fn leave(&self, pts: &mut Vec<Point>, c: Point) {
        self.drive(pts, Point::new(c.x, self.lane_y));
        self.drive(pts, self.exit());
    }

    fn build(&self, script: &VehicleScript) -> Result<Path, String> {
        let mut path = match *script {
            VehicleScript::Pass { entry_frame } => {
                let mut pts = vec![self.entry()];
                self.drive(&mut pts, self.exit());
                Path {
                    start: entry_frame,
                    points: pts,
                    target: None,
                    parked: None,
                }
            }
            VehicleScript::Park {
                entry_frame,
                slot_id,
                dwell_frames,
            } => {
                if dwell_frames == 0 {
                    return Err("dwell_frames must be > 0".into());
                }
                let (k, c) = self.slot_center(slot_id)?;
                let mut pts = vec![self.entry()];
                self.drive(&mut pts, Point::new(c.x, self.lane_y));
                self.drive(&mut pts, c);
                let arrive = entry_frame + pts.len() as u64 - 1;
                pts.extend(std::iter::repeat_n(c, dwell_frames as usize));
                let depart = entry_frame + pts.len() as u64 - 1;
                self.leave(&mut pts, c);
                Path {
                    start: entry_frame,
                    points: pts,
                    target: Some(k),
                    parked: Some((arrive, depart)),
                }
            }
            VehicleScript::Parked {
                slot_id,
                from_frame,
                until_frame,
                drive_out,
            } => {
                let (k, c) = self.slot_center(slot_id)?;
                let until = until_frame.unwrap_or(self.frames).min(self.frames);
                if until_frame.is_some_and(|u| u <= from_frame) {
                    return Err(format!(
                        "until_frame {} is not after from_frame {from_frame}",
                        until_frame.unwrap_or_default()
                    ));
                }
                if !drive_out && until < self.frames {
                    return Err(format!(
                        "until_frame {until} is before the end of the stream; set drive_out"
                    ));
                }
                let mut pts = vec![c; until.saturating_sub(from_frame) as usize];
                if drive_out && until < self.frames {
                    pts.push(c);
                    self.leave(&mut pts, c);
                }
                Path {
                    start: from_frame,
                    points: pts,
                    target: Some(k),
                    parked: Some((from_frame, until)),
                }
            }
        };
        if path.start >= self.frames {
            return Err(format!("starts at frame {} of {}", path.start, self.frames));
        }
        let keep = (self.frames - path.start).min(path.points.len() as u64) as usize;
        path.points.truncate(keep);

        let (w, h) = (f64::from(self.map.frame_width), f64::from(self.map.frame_height));
        for (i, p) in path.points.iter().enumerate() {
            if !(0.0..=w).contains(&p.x) || !(0.0..=h).contains(&p.y) {
                return Err(format!("leaves the frame at {p}"));
            }
            for (k, slot) in self.map.slots().iter().enumerate() {
                if Some(k) != path.target && slot.polygon.contains(*p) {
                    return Err(format!(
                        "crosses slot {} at frame {}",
                        slot.slot_id,
                        path.start + i as u64
                    ));
                }
            }
        }
        Ok(path)
    }
}

fn conflicts(a: &Path, b: &Path, min_sep: f64) -> bool {
    let lo = a.start.max(b.start);
    let hi = a.end().min(b.end());
    let close = (lo..hi).any(|f| match (a.at(f), b.at(f)) {
        (Some(p), Some(q)) => p.distance(&q) < min_sep,
        _ => false,
    });
    if close {
        return true;
    }
    // Two visits to one slot must not overlap in time.
    a.target.is_some()
        && a.target == b.target
        && a.start < b.end()
        && b.start < a.end()
}

fn sample_script<R: Rng>(
    rng: &mut R,
    cfg: &RandomVehicles,
    map: &SlotMap,
    frames: u64,
) -> VehicleScript {
    let slot_id = map.slots()[rng.random_range(0..map.len())].slot_id;
    let dwell = rng.random_range(cfg.dwell_frames[0]..=cfg.dwell_frames[1].max(cfg.dwell_frames[0]));
    let u: f64 = rng.random();
    let latest_entry = frames.saturating_sub(100).max(1);
    if u < cfg.parked_at_start_probability {
        VehicleScript::Parked {
            slot_id,
            from_frame: 0,
            until_frame: Some(dwell.max(1)),
            drive_out: true,
        }
    } else if u < cfg.parked_at_start_probability + cfg.park_probability {
        VehicleScript::Park {
            entry_frame: rng.random_range(0..latest_entry),
            slot_id,
            dwell_frames: dwell.max(1),
        }
    } else {
        VehicleScript::Pass {
            entry_frame: rng.random_range(0..latest_entry),
        }
    }
}

fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
    if !(s.fps.is_finite() && s.fps > 0.0) {
        return bad("fps must be > 0");
    }
    if s.n_init == 0 {
        return bad("n_init must be >= 1");
    }
    if !(s.speed.is_finite() && s.speed > 0.0) {
        return bad("speed must be > 0");
    }
    if s.vehicle_size.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return bad("vehicle_size must be positive");
    }
    if !(s.noise.jitter_std >= 0.0 && s.noise.appearance_jitter_std >= 0.0) {
        return bad("noise stds must be >= 0");
    }
    if !(0.0..=1.0).contains(&s.noise.dropout_probability) {
        return bad("dropout_probability must be in [0, 1]");
    }
    if s.noise.dropout_probability > 0.0 && s.noise.max_gap == 0 {
        return bad("dropout needs max_gap >= 1");
    }
    Ok(())
}

/// Generates the detection stream, ground-truth log and expected ids.
///
/// Ground truth is geometric: a vehicle occupies its target slot on frames
/// where its scripted center lies inside the slot polygon, starting
/// `n_init - 1` frames after it first appears. Vehicles are numbered by
/// first appearance, ties by list position, which is the order the tracker
/// creates tracks in. Dropouts never hide a vehicle during its first
/// `n_init` frames and do not change the ground truth.
pub fn generate_scenario(s: &Scenario) -> Result<ScenarioOutput, ScenarioError> {
    validate(s)?;
    let map = match &s.slot_map {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| ScenarioError::SlotMap {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            load_slot_map(&bytes)
                .map_err(|e| ScenarioError::SlotMap {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?
                .map
        }
        None => s.layout.slot_map()?,
    };
    let lane_y = s.lane_y.unwrap_or(if s.slot_map.is_none() {
        GRID_LANE_Y
    } else {
        f64::from(map.frame_height) / 2.0
    });
    let geo = Geometry {
        map: &map,
        lane_y,
        speed: s.speed,
        frames: s.frames,
    };

    let mut scripts: Vec<VehicleScript> = Vec::new();
    let mut paths: Vec<Path> = Vec::new();
    for (index, v) in s.vehicles.iter().enumerate() {
        let p = geo
            .build(v)
            .map_err(|message| ScenarioError::Vehicle { index, message })?;
        if let Some(j) = paths.iter().position(|q| conflicts(q, &p, s.min_separation)) {
            return Err(ScenarioError::Vehicle {
                index,
                message: format!("conflicts with vehicle {j}"),
            });
        }
        scripts.push(v.clone());
        paths.push(p);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    if let Some(cfg) = &s.random_vehicles {
        if map.is_empty() && cfg.park_probability + cfg.parked_at_start_probability > 0.0 {
            return Err(ScenarioError::Invalid("parking vehicles need slots".into()));
        }
        for n in 0..cfg.count {
            let mut placed = false;
            for _ in 0..cfg.max_attempts {
                let v = sample_script(&mut rng, cfg, &map, s.frames);
                let Ok(p) = geo.build(&v) else { continue };
                if paths.iter().any(|q| conflicts(q, &p, s.min_separation)) {
                    continue;
                }
                scripts.push(v);
                paths.push(p);
                placed = true;
                break;
            }
            if !placed {
                return Err(ScenarioError::Placement {
                    index: n,
                    attempts: cfg.max_attempts,
                });
            }
        }
    }

    let mut order: Vec<usize> = (0..paths.len())
        .filter(|&i| !paths[i].points.is_empty())
        .collect();
    order.sort_by_key(|&i| (paths[i].start, i));
    let mut expected = vec![0 as TrackId; paths.len()];
    for (n, &i) in order.iter().enumerate() {
        expected[i] = n as TrackId + 1;
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(s.seed);
    noise_rng.set_stream(1);
    let hidden = dropouts(&mut noise_rng, s, &paths);
    let appearances: Vec<Vec<f64>> = (0..paths.len())
        .map(|_| random_unit(&mut noise_rng, s.appearance_dim))
        .collect();
    let jitter = Normal::new(0.0, s.noise.jitter_std.max(0.0)).expect("std >= 0");
    let app_jitter = Normal::new(0.0, s.noise.appearance_jitter_std.max(0.0)).expect("std >= 0");

    let header = LogHeader::new(s.fps, &map, None);
    let mut truth = OccupancyLog::new(header).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let [w, h] = s.vehicle_size;
    let mut frames = Vec::with_capacity(s.frames as usize);
    for f in 0..s.frames {
        let timestamp_ms = Some(timestamp(f, s.fps));
        let mut detections = Vec::new();
        let mut gt = OccupancyFrame::all_free(f, timestamp_ms, map.len());
        for &i in &order {
            let path = &paths[i];
            let Some(c) = path.at(f) else { continue };
            if !hidden[i].contains_key(&f) {
                let mut corners = [c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0];
                if s.noise.jitter_std > 0.0 {
                    corners.iter_mut().for_each(|v| *v += jitter.sample(&mut noise_rng));
                    if corners[2] < corners[0] {
                        corners.swap(0, 2);
                    }
                    if corners[3] < corners[1] {
                        corners.swap(1, 3);
                    }
                }
                let bbox = BoundingBox::new(corners[0], corners[1], corners[2], corners[3])
                    .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                let appearance = (s.appearance_dim > 0).then(|| {
                    let v: Vec<f64> = appearances[i]
                        .iter()
                        .map(|x| x + app_jitter.sample(&mut noise_rng))
                        .collect();
                    normalize_appearance(v).unwrap_or_else(|_| appearances[i].clone())
                });
                detections.push(Detection {
                    bbox,
                    class: ObjectClass::Car,
                    confidence: 0.9,
                    appearance,
                });
            }
            if f + 1 < path.start + u64::from(s.n_init) {
                continue;
            }
            match path.target {
                Some(k) if map.slots()[k].polygon.contains(c) => {
                    gt.entries[k] = SlotEntry::occupied_by(expected[i]);
                }
                _ => gt.unassigned_vehicles.push(expected[i]),
            }
        }
        gt.unassigned_vehicles.sort_unstable();
        truth
            .append(gt)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        frames.push(DetectionFrame {
            frame_index: f,
            timestamp_ms,
            detections,
        });
    }

    let mut vehicles: Vec<VehicleTruth> = order
        .iter()
        .map(|&i| VehicleTruth {
            index: i,
            expected_id: expected[i],
            first_frame: paths[i].start,
            last_frame: paths[i].end() - 1,
            target_slot: paths[i].target.map(|k| map.slots()[k].slot_id),
            script: scripts[i].clone(),
        })
        .collect();
    vehicles.sort_by_key(|v| v.index);
    Ok(ScenarioOutput {
        slot_map: map,
        frames,
        ground_truth: truth,
        vehicles,
    })
}

pub fn timestamp(frame: u64, fps: f64) -> i64 {
    (frame as f64 * 1000.0 / fps).round() as i64
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
        if let Ok(u) = normalize_appearance(v) {
            return u;
        }
    }
}

/// Frames each vehicle is hidden on. Gaps fall inside the settled part of a
/// parked span and are separated by at least one visible frame.
fn dropouts<R: Rng>(rng: &mut R, s: &Scenario, paths: &[Path]) -> Vec<BTreeMap<u64, ()>> {
    let mut out = vec![BTreeMap::new(); paths.len()];
    if s.noise.dropout_probability <= 0.0 {
        return out;
    }
    let settle = u64::from(s.noise.settle_frames);
    for (i, p) in paths.iter().enumerate() {
        let Some((arrive, depart)) = p.parked else {
            continue;
        };
        let lo = (arrive + settle).max(p.start + u64::from(s.n_init));
        let hi = depart.saturating_sub(settle).min(p.end());
        let mut f = lo;
        while f < hi {
            if rng.random_bool(s.noise.dropout_probability) {
                let len = rng.random_range(1..=u64::from(s.noise.max_gap));
                let end = (f + len).min(hi);
                for g in f..end {
                    out[i].insert(g, ());
                }
                f = end + 1;
            } else {
                f += 1;
            }
        }
    }
    out
}

/// Compact text summary of a scenario's vehicles, for debugging output.
pub fn describe(out: &ScenarioOutput) -> String {
    let mut s = String::new();
    for v in &out.vehicles {
        let _ = writeln!(
            s,
            "vehicle {} id {} frames {}..={} slot {:?}",
            v.index, v.expected_id, v.first_frame, v.last_frame, v.target_slot
        );
    }
    s
}
