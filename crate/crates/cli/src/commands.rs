//! The batch commands: run, analyze, validate-slots and synth.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use parklot_core::analytics::{
    export, occupancy_timeseries, overstays, read_log_file, slot_durations, slot_stats,
    slot_vehicle_counts, AnalyticsResult, ExportError, ExportFormat, LogError, LogHeader,
    LogWriter, OccupancyLog,
};
use parklot_core::ingest::{generate_scenario, parse_stream, Scenario, StreamOptions};
use parklot_core::occupancy::FrameSummary;
use parklot_core::pipeline::{FrameOutput, Pipeline};
use parklot_core::slots::{load_slot_map, save_slot_map};
use parklot_core::SlotMap;
use serde::Serialize;
use thiserror::Error;
use tracing::{info, warn};

use crate::config::EngineConfig;

/// Command failure. `Usage` and `Config` exit with 1, `Data` with 2.
#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn log_err(path: &Path) -> impl Fn(LogError) -> CliError + '_ {
    move |e| match e {
        LogError::Io(e) if e.kind() == io::ErrorKind::NotFound => {
            CliError::Config(format!("log {}: {e}", path.display()))
        }
        e => CliError::Data(format!("log {}: {e}", path.display())),
    }
}

/// Loads and validates a slot map, logging its warnings. A missing or
/// unreadable file is a config error; an invalid map is a data error.
pub fn read_slot_map(path: &Path) -> Result<SlotMap, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read slot map {}: {e}", path.display())))?;
    let loaded = load_slot_map(&bytes)
        .map_err(|e| CliError::Data(format!("slot map {}: {e}", path.display())))?;
    for w in &loaded.warnings {
        warn!("slot map {}: {w}", path.display());
    }
    Ok(loaded.map)
}

/// Where detections come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Stdin,
    File(PathBuf),
}

impl Input {
    pub fn from_arg(arg: Option<&Path>) -> Self {
        match arg {
            None => Input::Stdin,
            Some(p) if p.as_os_str() == "-" => Input::Stdin,
            Some(p) => Input::File(p.to_path_buf()),
        }
    }

    pub fn open(&self) -> Result<Box<dyn BufRead + Send>, CliError> {
        match self {
            Input::Stdin => Ok(Box::new(BufReader::new(io::stdin()))),
            Input::File(p) => {
                let f = File::open(p).map_err(|e| {
                    CliError::Config(format!("cannot open input {}: {e}", p.display()))
                })?;
                Ok(Box::new(BufReader::with_capacity(1 << 16, f)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub frames: usize,
    pub last: Option<FrameSummary>,
    pub seconds: f64,
}

/// The pipeline loop behind `run` and `serve`: detections in, log records
/// out, with `on_frame` called after each record is written.
pub fn run_pipeline(
    cfg: &EngineConfig,
    map: SlotMap,
    input: impl BufRead,
    mut on_frame: impl FnMut(&FrameOutput),
) -> Result<RunReport, CliError> {
    let header = LogHeader::new(cfg.fps, &map, cfg.log.start_timestamp_ms);
    let mut writer = LogWriter::create(&cfg.log.path, header).map_err(|e| {
        CliError::Config(format!("cannot create log {}: {e}", cfg.log.path.display()))
    })?;
    let mut pipeline = Pipeline::new(map, cfg.tracker.clone(), cfg.occupancy.min_dwell_frames)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let opts = StreamOptions {
        allow_unknown_class: cfg.ingest.allow_unknown_class,
    };
    let start = Instant::now();
    let mut last = None;
    for frame in parse_stream(input, opts) {
        let frame = frame.map_err(|e| CliError::Data(format!("detection stream: {e}")))?;
        let out = pipeline
            .step(&frame)
            .map_err(|e| CliError::Data(format!("frame {}: {e}", frame.frame_index)))?;
        for c in &out.conflicts {
            warn!(
                frame = c.frame_index,
                slot = c.slot_id,
                holder = c.holder,
                rejected = c.rejected,
                "two vehicles in one slot"
            );
        }
        writer
            .append(&out.frame)
            .map_err(|e| CliError::Data(format!("log {}: {e}", cfg.log.path.display())))?;
        on_frame(&out);
        last = Some(out.summary);
    }
    writer
        .sync()
        .map_err(|e| CliError::Data(format!("log {}: {e}", cfg.log.path.display())))?;
    let seconds = start.elapsed().as_secs_f64();
    let frames = writer.frames_written();
    info!(
        frames,
        seconds,
        fps = frames as f64 / seconds.max(1e-9),
        "stream finished"
    );
    Ok(RunReport {
        frames,
        last,
        seconds,
    })
}

/// `run`: prints the final frame summary as JSON on stdout.
pub fn run(cfg: &EngineConfig, input: &Input) -> Result<RunReport, CliError> {
    let map = read_slot_map(&cfg.slot_map)?;
    let report = run_pipeline(cfg, map, input.open()?, |_| {})?;
    match &report.last {
        Some(s) => println!("{}", serde_json::to_string(s).expect("summary serializes")),
        None => info!("empty detection stream; log has a header only"),
    }
    Ok(report)
}

pub struct AnalyzeRequest<'a> {
    pub log: &'a Path,
    pub out: &'a Path,
    pub formats: &'a [ExportFormat],
    pub slots: Option<&'a Path>,
    pub overstay_seconds: Option<f64>,
}

/// `analyze`: writes every analytics result in every requested format and
/// returns the files written.
pub fn analyze(req: &AnalyzeRequest<'_>) -> Result<Vec<PathBuf>, CliError> {
    let read = read_log_file(req.log).map_err(log_err(req.log))?;
    if read.ignored_tail_bytes > 0 {
        warn!(
            bytes = read.ignored_tail_bytes,
            "log ends in an incomplete record; ignored"
        );
    }
    let mut log = read.log;
    let map = match req.slots {
        Some(p) => {
            let map = read_slot_map(p)?;
            log.attach_slot_map(&map).map_err(log_err(req.log))?;
            Some(map)
        }
        None => None,
    };
    if req.formats.contains(&ExportFormat::Svg) && map.is_none() {
        return Err(CliError::Usage("svg heatmaps need --slots MAP".into()));
    }
    fs::create_dir_all(req.out).map_err(|e| {
        CliError::Config(format!("cannot create {}: {e}", req.out.display()))
    })?;

    let series = occupancy_timeseries(&log);
    let durations = slot_durations(&log);
    let counts = slot_vehicle_counts(&log);
    let stats = slot_stats(&log);
    let results = [
        AnalyticsResult::Timeseries(&series),
        AnalyticsResult::Durations(&durations),
        AnalyticsResult::VehicleCounts(&counts),
        AnalyticsResult::Stats(&stats),
    ];
    let mut written = Vec::new();
    for &format in req.formats {
        for result in results {
            let path = req.out.join(format!("{}.{}", result.name(), format.extension()));
            let mut buf = Vec::new();
            match export(result, format, map.as_ref(), &mut buf) {
                Ok(()) => {}
                Err(ExportError::NotApplicable { .. }) => continue,
                Err(e) => return Err(CliError::Data(e.to_string())),
            }
            write_file(&path, &buf)?;
            written.push(path);
        }
    }
    if let Some(threshold) = req.overstay_seconds {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(CliError::Usage(format!("--overstay-seconds must be >= 0, got {threshold}")));
        }
        let found = overstays(&stats, log.fps(), threshold);
        for &format in req.formats {
            let bytes = match format {
                ExportFormat::Csv => {
                    let mut s = String::from("slot_id,vehicle_id,start_frame,duration_seconds\n");
                    for o in &found {
                        s.push_str(&format!(
                            "{},{},{},{:.3}\n",
                            o.slot_id, o.vehicle_id, o.start_frame, o.duration_seconds
                        ));
                    }
                    s.into_bytes()
                }
                ExportFormat::Json => serde_json::to_vec(&found).expect("overstays serialize"),
                ExportFormat::Svg => continue,
            };
            let path = req.out.join(format!("overstays.{}", format.extension()));
            write_file(&path, &bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// `validate-slots`: on success returns the slot count and prints
/// `OK, N slots`.
pub fn validate_slots(path: &Path) -> Result<usize, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read slot map {}: {e}", path.display())))?;
    match load_slot_map(&bytes) {
        Ok(loaded) => {
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            println!("OK, {} slots", loaded.map.len());
            Ok(loaded.map.len())
        }
        Err(e) => {
            for issue in e.issues() {
                eprintln!("{issue}");
            }
            Err(CliError::Data(format!(
                "{}: {} problem(s) found",
                path.display(),
                e.issues().len()
            )))
        }
    }
}

#[derive(Serialize)]
struct SynthConfig<'a> {
    slot_map: &'a str,
    fps: f64,
    tracker: SynthTracker,
    log: SynthLog<'a>,
}

#[derive(Serialize)]
struct SynthTracker {
    n_init: u32,
}

#[derive(Serialize)]
struct SynthLog<'a> {
    path: &'a str,
}

pub const SYNTH_FILES: [&str; 5] = [
    "slots.json",
    "detections.ndjson",
    "ground_truth.log",
    "ids.json",
    "config.json",
];

/// `synth`: generates a scenario and writes the slot map, the detection
/// stream, the ground-truth log, the expected ids and a config that runs the
/// stream against the map.
pub fn synth(spec: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read(spec)
        .map_err(|e| CliError::Config(format!("cannot read scenario {}: {e}", spec.display())))?;
    let de = &mut serde_json::Deserializer::from_slice(&text);
    let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Config(format!("scenario {}: {}: {}", spec.display(), e.path(), e.inner()))
    })?;
    if let Some(p) = &scenario.slot_map {
        if p.is_relative() {
            scenario.slot_map = Some(spec.parent().unwrap_or(Path::new("")).join(p));
        }
    }
    let generated = generate_scenario(&scenario)
        .map_err(|e| CliError::Data(format!("scenario {}: {e}", spec.display())))?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;

    let config = SynthConfig {
        slot_map: SYNTH_FILES[0],
        fps: scenario.fps,
        tracker: SynthTracker {
            n_init: scenario.n_init,
        },
        log: SynthLog {
            path: "occupancy.log",
        },
    };
    let mut config_json = serde_json::to_string_pretty(&config).expect("config serializes");
    config_json.push('\n');
    let mut ids = generated.id_map_json();
    ids.push('\n');
    let contents: [Vec<u8>; 5] = [
        save_slot_map(&generated.slot_map),
        generated.detection_stream(),
        generated.ground_truth.to_bytes(),
        ids.into_bytes(),
        config_json.into_bytes(),
    ];
    let mut written = Vec::new();
    for (name, bytes) in SYNTH_FILES.iter().zip(contents) {
        let path = out.join(name);
        let mut f = BufWriter::new(File::create(&path).map_err(|e| {
            CliError::Data(format!("cannot write {}: {e}", path.display()))
        })?);
        f.write_all(&bytes)
            .and_then(|_| f.flush())
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    tracing::debug!("{}", parklot_core::ingest::describe(&generated));
    Ok(written)
}

/// Folds a finished log back into memory for replay.
pub fn load_log_for_replay(path: &Path, map: &SlotMap) -> Result<OccupancyLog, CliError> {
    let read = read_log_file(path).map_err(log_err(path))?;
    let mut log = read.log;
    log.attach_slot_map(map).map_err(log_err(path))?;
    Ok(log)
}
