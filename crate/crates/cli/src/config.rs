//! Engine configuration: one JSON document, any field of which can be
//! replaced from the command line with `--dotted.name=value`.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use parklot_core::analytics::ExportFormat;
use parklot_core::TrackerParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub slot_map: PathBuf,
    pub fps: f64,
    pub tracker: TrackerParams,
    pub occupancy: OccupancyConfig,
    pub ingest: IngestConfig,
    pub log: LogConfig,
    pub serve: ServeConfig,
    pub analytics: AnalyticsConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancyConfig {
    /// Frames a slot change must persist before it is reported. 0 disables.
    pub min_dwell_frames: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub allow_unknown_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogConfig {
    pub path: PathBuf,
    pub start_timestamp_ms: Option<i64>,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("occupancy.log"),
            start_timestamp_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub address: String,
    pub port: u16,
    /// Frames buffered per stream consumer before it is disconnected.
    pub queue_capacity: usize,
    /// A consumer whose queue stays full this long is disconnected.
    pub stall_timeout_ms: u64,
    /// Replay pace as a multiple of the log's fps; 0 replays unthrottled.
    pub replay_speed: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            address: "127.0.0.1".into(),
            port: 8080,
            queue_capacity: 1024,
            stall_timeout_ms: 10_000,
            replay_speed: 1.0,
        }
    }
}

impl ServeConfig {
    pub fn socket_addr(&self) -> Result<SocketAddr, CliError> {
        let text = if self.address.contains(':') && !self.address.starts_with('[') {
            format!("[{}]:{}", self.address, self.port)
        } else {
            format!("{}:{}", self.address, self.port)
        };
        text.parse()
            .map_err(|e| CliError::Config(format!("serve.address `{}`: {e}", self.address)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub formats: Vec<String>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            slot_map: PathBuf::new(),
            fps: 30.0,
            tracker: TrackerParams::default(),
            occupancy: OccupancyConfig::default(),
            ingest: IngestConfig::default(),
            log: LogConfig::default(),
            serve: ServeConfig::default(),
            analytics: AnalyticsConfig::default(),
        }
    }
}

/// Fields holding paths. Relative values in the config file are taken
/// relative to the file's directory.
const PATH_FIELDS: &[&[&str]] = &[&["slot_map"], &["log", "path"]];

const TOP_LEVEL: &[&str] = &[
    "slot_map",
    "fps",
    "tracker",
    "occupancy",
    "ingest",
    "log",
    "serve",
    "analytics",
];

/// `--a.b=value` from the command line. The value is parsed as JSON when it
/// is valid JSON and taken as a string otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl Override {
    pub fn new(key: &str, raw: &str) -> Self {
        Self {
            path: key.split('.').map(str::to_string).collect(),
            value: serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
        }
    }
}

fn override_key(arg: &str) -> Option<&str> {
    let name = arg.strip_prefix("--")?;
    let key = name.split_once('=').map_or(name, |(k, _)| k);
    let first = key.split('.').next()?;
    let scalar = matches!(key, "slot_map" | "fps");
    (TOP_LEVEL.contains(&first) && (key.contains('.') || scalar)).then_some(key)
}

/// Pulls config overrides out of `args`, leaving everything else for the
/// regular argument parser. Accepts `--key=value` and `--key value`.
pub fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Vec<Override>), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(text) = arg.to_str() else {
            rest.push(arg);
            continue;
        };
        let Some(key) = override_key(text) else {
            rest.push(arg);
            continue;
        };
        let raw = match text.split_once('=') {
            Some((_, v)) => v.to_string(),
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?,
        };
        overrides.push(Override::new(key, &raw));
    }
    Ok((rest, overrides))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut cur = root;
    for (k, key) in path.iter().enumerate() {
        let Value::Object(obj) = cur else {
            return Err(CliError::Config(format!(
                "override --{}: `{}` is not an object",
                path.join("."),
                path[..k].join(".")
            )));
        };
        if k + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        cur = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn get_path<'a>(root: &'a mut Value, path: &[&str]) -> Option<&'a mut Value> {
    path.iter().try_fold(root, |v, k| v.get_mut(*k))
}

impl EngineConfig {
    /// Reads `path`, applies `overrides` and validates the result.
    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self, CliError> {
        let text = fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_slice(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        if !doc.is_object() {
            return Err(CliError::Config(format!(
                "config {}: expected a JSON object",
                path.display()
            )));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for field in PATH_FIELDS {
            if let Some(Value::String(p)) = get_path(&mut doc, field) {
                if Path::new(p.as_str()).is_relative() && !p.is_empty() {
                    *p = base.join(p.as_str()).to_string_lossy().into_owned();
                }
            }
        }
        Self::from_value(doc, overrides, &path.display().to_string())
    }

    /// Builds a config from a JSON value. Paths are used as given.
    pub fn from_value(mut doc: Value, overrides: &[Override], origin: &str) -> Result<Self, CliError> {
        for o in overrides {
            set_path(&mut doc, &o.path, o.value.clone())?;
        }
        let cfg: EngineConfig = serde_path_to_error::deserialize(doc)
            .map_err(|e| CliError::Config(format!("config {origin}: {}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.slot_map.as_os_str().is_empty() {
            return bad("slot_map is not set".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be > 0, got {}", self.fps));
        }
        self.tracker
            .validate()
            .map_err(|e| CliError::Config(format!("tracker: {e}")))?;
        if self.serve.queue_capacity == 0 {
            return bad("serve.queue_capacity must be >= 1".into());
        }
        if !(self.serve.replay_speed.is_finite() && self.serve.replay_speed >= 0.0) {
            return bad(format!("serve.replay_speed must be >= 0, got {}", self.serve.replay_speed));
        }
        self.export_formats()?;
        Ok(())
    }

    pub fn export_formats(&self) -> Result<Vec<ExportFormat>, CliError> {
        parse_formats(self.analytics.formats.iter().map(String::as_str))
    }
}

/// Parses format names, dropping duplicates while keeping order.
pub fn parse_formats<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Vec<ExportFormat>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let f: ExportFormat = name
            .trim()
            .parse()
            .map_err(|e: parklot_core::analytics::ExportError| CliError::Usage(e.to_string()))?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}
