//! The occupancy log and the statistics computed from it.
//!
//! The log is newline-delimited JSON. Line 1 is a [`LogHeader`], every later
//! line one frame:
//!
//! ```text
//! {"version":1,"fps":30.0,"slot_count":2,"slot_map_sha256":"…","start_timestamp_ms":null}
//! {"f":0,"t":0,"s":[[1,4],[0,0]],"u":[7]}
//! ```
//!
//! Durations are counted in frames and divided by fps. Timestamps are carried
//! through for labelling only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;
use tracing::warn;

use crate::occupancy::{OccupancyFrame, SlotEntry, VehicleId};
use crate::slots::{SlotId, SlotMap};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("log header: {0}")]
    Header(String),
    #[error("record {index} (line {line}): {message}")]
    Record {
        index: usize,
        line: usize,
        message: String,
    },
    #[error("frame {curr} does not follow frame {prev}")]
    Order { prev: u64, curr: u64 },
    #[error("frame has {found} slots, log header says {expected}")]
    SlotCount { expected: usize, found: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub version: u32,
    pub fps: f64,
    pub slot_count: usize,
    pub slot_map_sha256: String,
    pub start_timestamp_ms: Option<i64>,
}

impl LogHeader {
    pub fn new(fps: f64, map: &SlotMap, start_timestamp_ms: Option<i64>) -> Self {
        Self {
            version: LOG_VERSION,
            fps,
            slot_count: map.len(),
            slot_map_sha256: map.sha256(),
            start_timestamp_ms,
        }
    }

    fn check(&self) -> Result<(), LogError> {
        if self.version != LOG_VERSION {
            return Err(LogError::Header(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(LogError::Header(format!("fps must be > 0, got {}", self.fps)));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("header serializes");
        s.push('\n');
        s
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    f: u64,
    t: Option<i64>,
    s: Vec<(u8, VehicleId)>,
    u: Vec<VehicleId>,
}

/// Canonical one-line form of a frame, newline included.
pub fn frame_to_line(frame: &OccupancyFrame) -> String {
    let mut out = String::with_capacity(24 + frame.entries.len() * 6);
    let _ = write!(out, "{{\"f\":{},\"t\":", frame.frame_index);
    match frame.timestamp_ms {
        Some(t) => {
            let _ = write!(out, "{t}");
        }
        None => out.push_str("null"),
    }
    out.push_str(",\"s\":[");
    for (k, e) in frame.entries.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "[{},{}]", u8::from(e.occupied), e.vehicle_id);
    }
    out.push_str("],\"u\":[");
    for (k, v) in frame.unassigned_vehicles.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push_str("]}\n");
    out
}

fn parse_frame_line(line: &str) -> Result<OccupancyFrame, String> {
    let rec: FrameRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut entries = Vec::with_capacity(rec.s.len());
    for (k, (occ, vid)) in rec.s.into_iter().enumerate() {
        let e = match occ {
            0 => SlotEntry {
                occupied: false,
                vehicle_id: vid,
            },
            1 => SlotEntry::occupied_by(vid),
            other => return Err(format!("s[{k}]: occupied flag must be 0 or 1, got {other}")),
        };
        entries.push(e);
    }
    let frame = OccupancyFrame {
        frame_index: rec.f,
        timestamp_ms: rec.t,
        entries,
        unassigned_vehicles: rec.u,
    };
    frame.validate().map_err(|e| e.to_string())?;
    Ok(frame)
}

/// Header plus frames. `slot_ids` maps entry positions to slot ids; it is not
/// stored in the file and defaults to `0..slot_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyLog {
    header: LogHeader,
    slot_ids: Vec<SlotId>,
    frames: Vec<OccupancyFrame>,
}

impl OccupancyLog {
    pub fn new(header: LogHeader) -> Result<Self, LogError> {
        header.check()?;
        let slot_ids = (0..header.slot_count as SlotId).collect();
        Ok(Self {
            header,
            slot_ids,
            frames: Vec::new(),
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn fps(&self) -> f64 {
        self.header.fps
    }

    pub fn frames(&self) -> &[OccupancyFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn slot_ids(&self) -> &[SlotId] {
        &self.slot_ids
    }

    /// Labels entries with the map's slot ids. Warns if the map hash differs
    /// from the one recorded in the header.
    pub fn attach_slot_map(&mut self, map: &SlotMap) -> Result<(), LogError> {
        if map.len() != self.header.slot_count {
            return Err(LogError::SlotCount {
                expected: self.header.slot_count,
                found: map.len(),
            });
        }
        if map.sha256() != self.header.slot_map_sha256 {
            warn!("slot map hash does not match the log header");
        }
        self.slot_ids = map.slot_ids();
        Ok(())
    }

    fn check_next(&self, frame: &OccupancyFrame) -> Result<(), LogError> {
        if frame.entries.len() != self.header.slot_count {
            return Err(LogError::SlotCount {
                expected: self.header.slot_count,
                found: frame.entries.len(),
            });
        }
        if let Some(last) = self.frames.last() {
            if frame.frame_index <= last.frame_index {
                return Err(LogError::Order {
                    prev: last.frame_index,
                    curr: frame.frame_index,
                });
            }
        }
        frame
            .validate()
            .map_err(|e| LogError::InvalidFrame(e.to_string()))
    }

    pub fn append(&mut self, frame: OccupancyFrame) -> Result<(), LogError> {
        self.check_next(&frame)?;
        self.frames.push(frame);
        Ok(())
    }

    /// Canonical serialization of the whole log.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_line().into_bytes();
        for f in &self.frames {
            out.extend_from_slice(frame_to_line(f).as_bytes());
        }
        out
    }
}

/// Append-only log writer. Each record goes out in a single `write_all` of a
/// complete line, with no buffering in between, so a killed process leaves at
/// most an unterminated final line, which readers skip.
pub struct LogWriter<W: Write> {
    out: W,
    header: LogHeader,
    last_frame: Option<u64>,
    written: usize,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: LogHeader) -> Result<Self, LogError> {
        header.check()?;
        out.write_all(header.to_line().as_bytes())?;
        out.flush()?;
        Ok(Self {
            out,
            header,
            last_frame: None,
            written: 0,
        })
    }

    pub fn append(&mut self, frame: &OccupancyFrame) -> Result<(), LogError> {
        if frame.entries.len() != self.header.slot_count {
            return Err(LogError::SlotCount {
                expected: self.header.slot_count,
                found: frame.entries.len(),
            });
        }
        if let Some(prev) = self.last_frame {
            if frame.frame_index <= prev {
                return Err(LogError::Order {
                    prev,
                    curr: frame.frame_index,
                });
            }
        }
        frame
            .validate()
            .map_err(|e| LogError::InvalidFrame(e.to_string()))?;
        self.out.write_all(frame_to_line(frame).as_bytes())?;
        self.last_frame = Some(frame.frame_index);
        self.written += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> usize {
        self.written
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn get_ref(&self) -> &W {
        &self.out
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl LogWriter<File> {
    /// Creates the log at `path`. The header is written to a sibling temp file
    /// and renamed into place, so the log either does not exist or starts with
    /// a complete header.
    pub fn create(path: &Path, header: LogHeader) -> Result<Self, LogError> {
        header.check()?;
        let tmp = temp_sibling(path);
        {
            let mut f = File::create(&tmp)?;
            f.write_all(header.to_line().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        let out = fs::OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            out,
            header,
            last_frame: None,
            written: 0,
        })
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.out.sync_data()
    }
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Result of reading a log that may still be growing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadLog {
    pub log: OccupancyLog,
    /// Bytes of an unterminated final line that were skipped.
    pub ignored_tail_bytes: usize,
}

/// Reads a complete log. An unterminated last line is treated as an
/// in-progress write and skipped; any complete line that fails to parse is an
/// error naming its record index (0 for the first frame after the header).
pub fn read_log<R: Read>(source: R) -> Result<ReadLog, LogError> {
    let mut reader = io::BufReader::new(source);
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 || !line.ends_with('\n') {
        return Err(LogError::Header("missing or incomplete header line".into()));
    }
    let header: LogHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| LogError::Header(e.to_string()))?;
    let mut log = OccupancyLog::new(header)?;
    let mut ignored_tail_bytes = 0;
    let mut index = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            ignored_tail_bytes = n;
            break;
        }
        let record_err = |message: String| LogError::Record {
            index,
            line: index + 2,
            message,
        };
        let frame = parse_frame_line(line.trim_end()).map_err(record_err)?;
        log.check_next(&frame).map_err(|e| record_err(e.to_string()))?;
        log.frames.push(frame);
        index += 1;
    }
    Ok(ReadLog {
        log,
        ignored_tail_bytes,
    })
}

pub fn read_log_file(path: &Path) -> Result<ReadLog, LogError> {
    read_log(File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeriesPoint {
    pub frame_index: u64,
    pub timestamp_ms: Option<i64>,
    pub occupied_count: usize,
}

/// Occupied slot count per frame.
pub fn occupancy_timeseries(log: &OccupancyLog) -> Vec<SeriesPoint> {
    log.frames
        .iter()
        .map(|f| SeriesPoint {
            frame_index: f.frame_index,
            timestamp_ms: f.timestamp_ms,
            occupied_count: f.occupied_count(),
        })
        .collect()
}

/// Frames with `occupied == true`, per slot position.
fn occupied_frames(log: &OccupancyLog) -> Vec<u64> {
    let mut counts = vec![0u64; log.header.slot_count];
    for f in &log.frames {
        for (c, e) in counts.iter_mut().zip(&f.entries) {
            *c += u64::from(e.occupied);
        }
    }
    counts
}

/// Occupied seconds per slot: occupied frame count divided by fps.
pub fn slot_durations(log: &OccupancyLog) -> BTreeMap<SlotId, f64> {
    let fps = log.fps();
    log.slot_ids
        .iter()
        .zip(occupied_frames(log))
        .map(|(&id, n)| (id, n as f64 / fps))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VehicleCount {
    pub distinct_vehicles: usize,
    pub visits: usize,
}

/// Distinct vehicle ids seen in each slot, plus the number of visits (maximal
/// runs of one vehicle in consecutive frames).
pub fn slot_vehicle_counts(log: &OccupancyLog) -> BTreeMap<SlotId, VehicleCount> {
    slot_stats(log)
        .into_iter()
        .map(|(id, s)| {
            (
                id,
                VehicleCount {
                    distinct_vehicles: s.distinct_vehicles,
                    visits: s.intervals.len(),
                },
            )
        })
        .collect()
}

/// Half-open run `[start_frame, end_frame)` of one vehicle in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub start_frame: u64,
    pub end_frame: u64,
    pub vehicle_id: VehicleId,
}

impl Interval {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame == self.start_frame
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotStats {
    pub slot_id: SlotId,
    pub occupied_frames: u64,
    #[serde(serialize_with = "fixed3")]
    pub occupied_seconds: f64,
    pub distinct_vehicles: usize,
    pub intervals: Vec<Interval>,
}

/// Interval decomposition per slot. An interval ends when the slot frees, the
/// vehicle changes, or the log skips a frame index.
pub fn slot_stats(log: &OccupancyLog) -> BTreeMap<SlotId, SlotStats> {
    let n = log.header.slot_count;
    let mut open: Vec<Option<Interval>> = vec![None; n];
    let mut done: Vec<Vec<Interval>> = vec![Vec::new(); n];
    for f in &log.frames {
        for (k, e) in f.entries.iter().enumerate() {
            let cur = &mut open[k];
            let extends = matches!(cur, Some(iv) if e.occupied
                && iv.vehicle_id == e.vehicle_id
                && iv.end_frame == f.frame_index);
            if extends {
                if let Some(iv) = cur.as_mut() {
                    iv.end_frame += 1;
                }
                continue;
            }
            if let Some(iv) = cur.take() {
                done[k].push(iv);
            }
            if e.occupied {
                *cur = Some(Interval {
                    start_frame: f.frame_index,
                    end_frame: f.frame_index + 1,
                    vehicle_id: e.vehicle_id,
                });
            }
        }
    }
    let fps = log.fps();
    log.slot_ids
        .iter()
        .enumerate()
        .map(|(k, &slot_id)| {
            let mut intervals = std::mem::take(&mut done[k]);
            intervals.extend(open[k].take());
            let occupied_frames: u64 = intervals.iter().map(Interval::len).sum();
            let distinct: BTreeSet<VehicleId> = intervals.iter().map(|i| i.vehicle_id).collect();
            (
                slot_id,
                SlotStats {
                    slot_id,
                    occupied_frames,
                    occupied_seconds: occupied_frames as f64 / fps,
                    distinct_vehicles: distinct.len(),
                    intervals,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overstay {
    pub slot_id: SlotId,
    pub vehicle_id: VehicleId,
    pub start_frame: u64,
    #[serde(serialize_with = "fixed3")]
    pub duration_seconds: f64,
}

/// Intervals strictly longer than `threshold_seconds`, in slot then time order.
pub fn overstays(
    stats: &BTreeMap<SlotId, SlotStats>,
    fps: f64,
    threshold_seconds: f64,
) -> Vec<Overstay> {
    stats
        .values()
        .flat_map(|s| {
            s.intervals.iter().filter_map(move |iv| {
                let d = iv.len() as f64 / fps;
                (d > threshold_seconds).then_some(Overstay {
                    slot_id: s.slot_id,
                    vehicle_id: iv.vehicle_id,
                    start_frame: iv.start_frame,
                    duration_seconds: d,
                })
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "svg" | "svg-heatmap" => Ok(ExportFormat::Svg),
            other => Err(ExportError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),
    #[error("{what} cannot be exported as {format}")]
    NotApplicable {
        what: &'static str,
        format: ExportFormat,
    },
    #[error("svg heatmap needs the slot map")]
    MissingSlotMap,
    #[error("slot {0} is not in the slot map")]
    UnknownSlot(SlotId),
    #[error("export i/o: {0}")]
    Io(#[from] io::Error),
}

/// Something [`export`] can write.
#[derive(Debug, Clone, Copy)]
pub enum AnalyticsResult<'a> {
    Timeseries(&'a [SeriesPoint]),
    Durations(&'a BTreeMap<SlotId, f64>),
    VehicleCounts(&'a BTreeMap<SlotId, VehicleCount>),
    Stats(&'a BTreeMap<SlotId, SlotStats>),
}

impl AnalyticsResult<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            AnalyticsResult::Timeseries(_) => "occupancy_timeseries",
            AnalyticsResult::Durations(_) => "slot_durations",
            AnalyticsResult::VehicleCounts(_) => "slot_vehicle_counts",
            AnalyticsResult::Stats(_) => "slot_stats",
        }
    }

    /// Per-slot value drawn on the heatmap.
    fn heat_values(&self) -> Option<BTreeMap<SlotId, f64>> {
        match self {
            AnalyticsResult::Timeseries(_) => None,
            AnalyticsResult::Durations(d) => Some((*d).clone()),
            AnalyticsResult::VehicleCounts(c) => Some(
                c.iter()
                    .map(|(&k, v)| (k, v.distinct_vehicles as f64))
                    .collect(),
            ),
            AnalyticsResult::Stats(s) => {
                Some(s.iter().map(|(&k, v)| (k, v.occupied_seconds)).collect())
            }
        }
    }
}

fn fixed3<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{v:.3}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

#[derive(Serialize)]
struct DurationRow {
    slot_id: SlotId,
    #[serde(serialize_with = "fixed3")]
    occupied_seconds: f64,
}

#[derive(Serialize)]
struct CountRow {
    slot_id: SlotId,
    distinct_vehicles: usize,
    visits: usize,
}

/// Writes `result` to `sink`. CSV has a header row and `\n` line endings;
/// JSON is a single compact array; durations use three decimals.
pub fn export<W: Write>(
    result: AnalyticsResult<'_>,
    format: ExportFormat,
    map: Option<&SlotMap>,
    sink: &mut W,
) -> Result<(), ExportError> {
    match format {
        ExportFormat::Csv => sink.write_all(to_csv(result).as_bytes())?,
        ExportFormat::Json => {
            let json = match result {
                AnalyticsResult::Timeseries(ts) => serde_json::to_string(ts),
                AnalyticsResult::Durations(d) => serde_json::to_string(
                    &d.iter()
                        .map(|(&slot_id, &occupied_seconds)| DurationRow {
                            slot_id,
                            occupied_seconds,
                        })
                        .collect::<Vec<_>>(),
                ),
                AnalyticsResult::VehicleCounts(c) => serde_json::to_string(
                    &c.iter()
                        .map(|(&slot_id, v)| CountRow {
                            slot_id,
                            distinct_vehicles: v.distinct_vehicles,
                            visits: v.visits,
                        })
                        .collect::<Vec<_>>(),
                ),
                AnalyticsResult::Stats(s) => serde_json::to_string(&s.values().collect::<Vec<_>>()),
            }
            .map_err(io::Error::other)?;
            sink.write_all(json.as_bytes())?;
        }
        ExportFormat::Svg => {
            let values = result.heat_values().ok_or(ExportError::NotApplicable {
                what: result.name(),
                format,
            })?;
            let map = map.ok_or(ExportError::MissingSlotMap)?;
            sink.write_all(to_svg(result.name(), &values, map)?.as_bytes())?;
        }
    }
    Ok(())
}

fn to_csv(result: AnalyticsResult<'_>) -> String {
    let mut out = String::new();
    match result {
        AnalyticsResult::Timeseries(ts) => {
            out.push_str("frame_index,timestamp_ms,occupied_count\n");
            for p in ts {
                let t = p.timestamp_ms.map(|t| t.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{}", p.frame_index, t, p.occupied_count);
            }
        }
        AnalyticsResult::Durations(d) => {
            out.push_str("slot_id,occupied_seconds\n");
            for (id, s) in d {
                let _ = writeln!(out, "{id},{s:.3}");
            }
        }
        AnalyticsResult::VehicleCounts(c) => {
            out.push_str("slot_id,distinct_vehicles,visits\n");
            for (id, v) in c {
                let _ = writeln!(out, "{id},{},{}", v.distinct_vehicles, v.visits);
            }
        }
        AnalyticsResult::Stats(s) => {
            out.push_str("slot_id,vehicle_id,start_frame,end_frame,duration_frames\n");
            for st in s.values() {
                for iv in &st.intervals {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        st.slot_id,
                        iv.vehicle_id,
                        iv.start_frame,
                        iv.end_frame,
                        iv.len()
                    );
                }
            }
        }
    }
    out
}

/// Low and high ends of the heatmap ramp.
pub const RAMP_LOW: [u8; 3] = [255, 255, 178];
pub const RAMP_HIGH: [u8; 3] = [189, 0, 38];

/// Fill color for `value` on a ramp whose top is `max`. Each channel is
/// `round(low + (high - low) * value / max)`; `max == 0` maps to the low end.
pub fn ramp_color(value: f64, max: f64) -> [u8; 3] {
    let t = if max > 0.0 {
        (value / max).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut c = [0u8; 3];
    for i in 0..3 {
        let lo = f64::from(RAMP_LOW[i]);
        let hi = f64::from(RAMP_HIGH[i]);
        c[i] = (lo + (hi - lo) * t).round() as u8;
    }
    c
}

fn to_svg(
    name: &str,
    values: &BTreeMap<SlotId, f64>,
    map: &SlotMap,
) -> Result<String, ExportError> {
    for id in values.keys() {
        if map.index_of(*id).is_none() {
            return Err(ExportError::UnknownSlot(*id));
        }
    }
    let max = values.values().copied().fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = map.frame_width,
        h = map.frame_height
    );
    let _ = writeln!(
        out,
        "<!-- {name}: fill = round(low + (high - low) * value / {max:.3}) per channel, \
         low = rgb({},{},{}) at 0, high = rgb({},{},{}) at max. \
         Slots without a value are drawn unfilled. -->",
        RAMP_LOW[0], RAMP_LOW[1], RAMP_LOW[2], RAMP_HIGH[0], RAMP_HIGH[1], RAMP_HIGH[2]
    );
    for slot in map.slots() {
        let points = slot
            .polygon
            .ring()
            .iter()
            .map(|p| format!("{},{}", p.x, p.y))
            .collect::<Vec<_>>()
            .join(" ");
        match values.get(&slot.slot_id) {
            Some(&v) => {
                let [r, g, b] = ramp_color(v, max);
                let _ = writeln!(
                    out,
                    "<polygon data-slot=\"{id}\" data-value=\"{v:.3}\" points=\"{points}\" \
                     fill=\"#{r:02x}{g:02x}{b:02x}\" stroke=\"#333333\" stroke-width=\"1\">\
                     <title>slot {id}: {v:.3}</title></polygon>",
                    id = slot.slot_id
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "<polygon data-slot=\"{id}\" points=\"{points}\" fill=\"none\" \
                     stroke=\"#333333\" stroke-width=\"1\"/>",
                    id = slot.slot_id
                );
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slots::rect_slot;

    fn header(n: usize, fps: f64) -> LogHeader {
        LogHeader {
            version: 1,
            fps,
            slot_count: n,
            slot_map_sha256: "x".into(),
            start_timestamp_ms: None,
        }
    }

    /// `pattern[t][k]` is the vehicle in slot k at frame t (0 = free).
    fn log_from(pattern: &[Vec<u64>], fps: f64) -> OccupancyLog {
        let mut log = OccupancyLog::new(header(pattern[0].len(), fps)).unwrap();
        for (t, row) in pattern.iter().enumerate() {
            let entries = row
                .iter()
                .map(|&v| if v == 0 { SlotEntry::FREE } else { SlotEntry::occupied_by(v) })
                .collect();
            log.append(OccupancyFrame {
                frame_index: t as u64,
                timestamp_ms: Some(t as i64 * 33),
                entries,
                unassigned_vehicles: vec![],
            })
            .unwrap();
        }
        log
    }

    #[test]
    fn append_order_and_count() {
        let mut log = OccupancyLog::new(header(2, 30.0)).unwrap();
        let mut f = OccupancyFrame::all_free(7, None, 2);
        log.append(f.clone()).unwrap();
        assert_eq!(log.len(), 1);
        f.frame_index = 5;
        assert!(matches!(log.append(f.clone()), Err(LogError::Order { prev: 7, curr: 5 })));
        let g = OccupancyFrame::all_free(9, None, 3);
        assert!(matches!(log.append(g), Err(LogError::SlotCount { .. })));
        assert!(OccupancyLog::new(header(2, 0.0)).is_err());
    }

    #[test]
    fn frame_line_format() {
        let f = OccupancyFrame {
            frame_index: 3,
            timestamp_ms: Some(100),
            entries: vec![SlotEntry::occupied_by(4), SlotEntry::FREE],
            unassigned_vehicles: vec![7, 9],
        };
        assert_eq!(frame_to_line(&f), "{\"f\":3,\"t\":100,\"s\":[[1,4],[0,0]],\"u\":[7,9]}\n");
        assert_eq!(parse_frame_line(frame_to_line(&f).trim_end()).unwrap(), f);
        let g = OccupancyFrame::all_free(0, None, 0);
        assert_eq!(frame_to_line(&g), "{\"f\":0,\"t\":null,\"s\":[],\"u\":[]}\n");
    }

    #[test]
    fn writer_reader_round_trip_and_torn_tail() {
        let mut w = LogWriter::new(Vec::new(), header(2, 30.0)).unwrap();
        for i in 0..5 {
            let mut f = OccupancyFrame::all_free(i, Some(i as i64), 2);
            f.entries[1] = SlotEntry::occupied_by(i + 1);
            w.append(&f).unwrap();
        }
        let mut bytes = w.into_inner();
        let full = read_log(&bytes[..]).unwrap();
        assert_eq!(full.log.len(), 5);
        assert_eq!(full.ignored_tail_bytes, 0);
        assert_eq!(full.log.to_bytes(), bytes);

        bytes.extend_from_slice(b"{\"f\":5,\"t\":5,\"s\":[[0,");
        let torn = read_log(&bytes[..]).unwrap();
        assert_eq!(torn.log.len(), 5);
        assert_eq!(torn.ignored_tail_bytes, 21);
    }

    #[test]
    fn corrupt_record_names_index() {
        let mut bytes = header(1, 30.0).to_line().into_bytes();
        bytes.extend_from_slice(b"{\"f\":0,\"t\":null,\"s\":[[0,0]],\"u\":[]}\n");
        bytes.extend_from_slice(b"{\"f\":1,\"t\":null,\"s\":[[2,0]],\"u\":[]}\n");
        match read_log(&bytes[..]) {
            Err(LogError::Record { index, line, .. }) => assert_eq!((index, line), (1, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_log(&b""[..]), Err(LogError::Header(_))));
    }

    #[test]
    fn timeseries_cases() {
        let log = OccupancyLog::new(header(3, 30.0)).unwrap();
        assert!(occupancy_timeseries(&log).is_empty());
        let free = log_from(&vec![vec![0, 0, 0]; 10], 30.0);
        assert!(occupancy_timeseries(&free).iter().all(|p| p.occupied_count == 0));
        let some = log_from(&[vec![1, 0, 2], vec![0, 0, 2]], 30.0);
        let counts: Vec<usize> = occupancy_timeseries(&some)
            .iter()
            .map(|p| p.occupied_count)
            .collect();
        assert_eq!(counts, vec![2, 1]);
    }

    #[test]
    fn durations() {
        let mut rows = vec![vec![0u64, 0]; 300];
        for row in rows.iter_mut().take(120) {
            row[0] = 3;
        }
        let log = log_from(&rows, 30.0);
        let d = slot_durations(&log);
        assert_eq!(d[&0], 4.0);
        assert_eq!(d[&1], 0.0);

        // Bursts of 30, 60 and 90 frames.
        let mut rows = vec![vec![0u64]; 400];
        for (start, len) in [(0, 30), (100, 60), (200, 90)] {
            for row in rows.iter_mut().skip(start).take(len) {
                row[0] = 1;
            }
        }
        assert_eq!(slot_durations(&log_from(&rows, 30.0))[&0], 6.0);
    }

    #[test]
    fn vehicle_counts_distinct_vs_visits() {
        let log = OccupancyLog::new(header(2, 30.0)).unwrap();
        assert!(slot_vehicle_counts(&log).values().all(|c| c.distinct_vehicles == 0));

        let rows = vec![vec![5u64]; 50];
        assert_eq!(slot_vehicle_counts(&log_from(&rows, 30.0))[&0].distinct_vehicles, 1);

        let rows: Vec<Vec<u64>> = [4, 4, 0, 0, 4, 4].iter().map(|&v| vec![v]).collect();
        let c = slot_vehicle_counts(&log_from(&rows, 30.0))[&0];
        assert_eq!((c.distinct_vehicles, c.visits), (1, 2));
    }

    #[test]
    fn intervals() {
        let mut rows = vec![vec![0u64]; 500];
        for row in rows.iter_mut().take(400).skip(100) {
            row[0] = 9;
        }
        let s = slot_stats(&log_from(&rows, 30.0));
        assert_eq!(
            s[&0].intervals,
            vec![Interval {
                start_frame: 100,
                end_frame: 400,
                vehicle_id: 9
            }]
        );
        assert_eq!(s[&0].occupied_seconds, 10.0);

        let flicker: Vec<Vec<u64>> = (0..10).map(|t| vec![if t % 2 == 0 { 2 } else { 0 }]).collect();
        let s = slot_stats(&log_from(&flicker, 30.0));
        assert_eq!(s[&0].intervals.len(), 5);
        assert!(s[&0].intervals.iter().all(|iv| iv.len() == 1));

        // Vehicle change splits an interval.
        let rows: Vec<Vec<u64>> = [1, 1, 2, 2].iter().map(|&v| vec![v]).collect();
        let s = slot_stats(&log_from(&rows, 30.0));
        assert_eq!(s[&0].intervals.len(), 2);
        assert_eq!(s[&0].distinct_vehicles, 2);
    }

    #[test]
    fn overstay_query() {
        let mut rows = vec![vec![0u64, 0]; 3000];
        for row in rows.iter_mut().skip(100).take(2700) {
            row[1] = 6;
        }
        for row in rows.iter_mut().take(300) {
            row[0] = 2;
        }
        let log = log_from(&rows, 30.0);
        let o = overstays(&slot_stats(&log), log.fps(), 60.0);
        assert_eq!(o.len(), 1);
        assert_eq!((o[0].slot_id, o[0].vehicle_id, o[0].duration_seconds), (1, 6, 90.0));
    }

    #[test]
    fn csv_and_json_exports() {
        let d: BTreeMap<SlotId, f64> = [(0, 4.0), (1, 0.0), (2, 1.0 / 3.0)].into();
        let mut out = Vec::new();
        export(AnalyticsResult::Durations(&d), ExportFormat::Csv, None, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "slot_id,occupied_seconds\n0,4.000\n1,0.000\n2,0.333\n"
        );

        let mut out = Vec::new();
        export(AnalyticsResult::Durations(&d), ExportFormat::Json, None, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "[{\"slot_id\":0,\"occupied_seconds\":4.000},{\"slot_id\":1,\"occupied_seconds\":0.000},\
             {\"slot_id\":2,\"occupied_seconds\":0.333}]"
        );

        let mut out = Vec::new();
        export(AnalyticsResult::Timeseries(&[]), ExportFormat::Json, None, &mut out).unwrap();
        assert_eq!(out, b"[]");

        assert!(matches!(
            "xml".parse::<ExportFormat>(),
            Err(ExportError::UnsupportedFormat(_))
        ));
        assert_eq!("svg-heatmap".parse::<ExportFormat>().unwrap(), ExportFormat::Svg);
    }

    #[test]
    fn svg_ramp() {
        let map = SlotMap::new(
            (0..3)
                .map(|i| rect_slot(i, i as f64 * 20.0, 0.0, i as f64 * 20.0 + 10.0, 10.0, None))
                .collect(),
            100,
            50,
            None,
        )
        .unwrap();
        let d: BTreeMap<SlotId, f64> = [(0, 1.0), (1, 9.0), (2, 4.0)].into();
        let mut out = Vec::new();
        export(AnalyticsResult::Durations(&d), ExportFormat::Svg, Some(&map), &mut out).unwrap();
        let svg = String::from_utf8(out).unwrap();
        assert!(svg.contains("fill=\"#bd0026\""), "{svg}");
        assert!(svg.contains("<!--"));
        assert_eq!(ramp_color(0.0, 9.0), RAMP_LOW);
        assert_eq!(ramp_color(9.0, 9.0), RAMP_HIGH);
        assert!(matches!(
            export(AnalyticsResult::Durations(&d), ExportFormat::Svg, None, &mut Vec::new()),
            Err(ExportError::MissingSlotMap)
        ));
        assert!(matches!(
            export(AnalyticsResult::Timeseries(&[]), ExportFormat::Svg, Some(&map), &mut Vec::new()),
            Err(ExportError::NotApplicable { .. })
        ));
    }
}
