//! Live HTTP server: the slot map, a chunked NDJSON event stream, the current
//! snapshot and analytics computed from the log.
//!
//! Stream messages, one JSON object per line:
//!
//! ```text
//! {"type":"snapshot","frame_index":12,"timestamp_ms":400,"slots":[{"slot_id":0,"occupied":true,"vehicle_id":3}],"unassigned_vehicles":[]}
//! {"type":"event","frame_index":13,"slot_id":0,"kind":"Freed","vehicle_id":3}
//! {"type":"summary","frame_index":13,"occupied_count":0,"free_count":1,"total_slots":1}
//! {"type":"end","frame_index":13}
//! ```
//!
//! The first line of every stream is a snapshot; folding the events that
//! follow onto it gives the current state. Each frame's events and summary
//! are queued together. A consumer more than `queue_capacity` frames behind,
//! or whose queue stays full for `stall_timeout_ms`, is disconnected.

use std::convert::Infallible;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener as StdListener};
use std::path::{Path, PathBuf};
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll};
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use http_body_util::{combinators::BoxBody, BodyExt, Full};
use hyper::body::{Frame, Incoming};
use hyper::header::{HeaderValue, ACCESS_CONTROL_ALLOW_ORIGIN, CACHE_CONTROL, CONTENT_TYPE};
use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper::{Method, Request, Response, StatusCode};
use hyper_util::rt::TokioIo;
use parklot_core::analytics::{
    export, occupancy_timeseries, read_log_file, slot_durations, slot_stats,
    slot_vehicle_counts, AnalyticsResult, ExportFormat, OccupancyLog,
};
use parklot_core::occupancy::{diff_frames, initial_events, summarize, FrameSummary, OccupancyEvent, SlotEntry};
use parklot_core::slots::{save_slot_map, SlotId};
use parklot_core::{OccupancyFrame, SlotMap};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::TryRecvError;
use tokio::sync::{broadcast, mpsc, Notify};
use tokio::time::MissedTickBehavior;
use tracing::{debug, info, warn};

use crate::commands::{load_log_for_replay, read_slot_map, run_pipeline, CliError, Input};
use crate::config::EngineConfig;

#[derive(Serialize)]
struct SlotState {
    slot_id: SlotId,
    occupied: bool,
    vehicle_id: u64,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Message<'a> {
    Snapshot {
        frame_index: Option<u64>,
        timestamp_ms: Option<i64>,
        slots: Vec<SlotState>,
        unassigned_vehicles: &'a [u64],
    },
    Event(&'a OccupancyEvent),
    Summary(&'a FrameSummary),
    End { frame_index: Option<u64> },
}

fn line(msg: &Message<'_>) -> Bytes {
    let mut v = serde_json::to_vec(msg).expect("message serializes");
    v.push(b'\n');
    Bytes::from(v)
}

#[derive(Debug, Clone)]
pub struct HubOptions {
    pub queue_capacity: usize,
    pub stall_timeout: Duration,
}

impl Default for HubOptions {
    fn default() -> Self {
        Self {
            queue_capacity: 1024,
            stall_timeout: Duration::from_secs(10),
        }
    }
}

struct State {
    current: Option<OccupancyFrame>,
    finished: bool,
}

/// Shared between the pipeline thread, which publishes, and the server
/// tasks, which subscribe.
pub struct Hub {
    state: Mutex<State>,
    tx: broadcast::Sender<Bytes>,
    map: SlotMap,
    slot_ids: Vec<SlotId>,
    slot_map_json: Bytes,
    log_path: PathBuf,
    options: HubOptions,
    dropped: AtomicU64,
    connected: AtomicU64,
}

impl Hub {
    pub fn new(map: &SlotMap, log_path: PathBuf, options: HubOptions) -> Arc<Self> {
        let (tx, _) = broadcast::channel(options.queue_capacity.max(1));
        Arc::new(Self {
            state: Mutex::new(State {
                current: None,
                finished: false,
            }),
            tx,
            map: map.clone(),
            slot_ids: map.slot_ids(),
            slot_map_json: Bytes::from(save_slot_map(map)),
            log_path,
            options,
            dropped: AtomicU64::new(0),
            connected: AtomicU64::new(0),
        })
    }

    /// Makes `frame` current and sends its events and summary to every
    /// consumer. Never blocks on consumers.
    pub fn publish(&self, frame: &OccupancyFrame, events: &[OccupancyEvent], summary: &FrameSummary) {
        // One queue entry per frame: its events then its summary.
        let mut batch = Vec::with_capacity(96 * (events.len() + 1));
        for e in events {
            batch.extend_from_slice(&line(&Message::Event(e)));
        }
        batch.extend_from_slice(&line(&Message::Summary(summary)));
        let current = frame.clone();
        let mut state = self.state.lock().expect("hub lock");
        state.current = Some(current);
        let _ = self.tx.send(Bytes::from(batch));
    }

    /// The source is exhausted: streams end after an `end` message.
    pub fn finish(&self) {
        let mut state = self.state.lock().expect("hub lock");
        state.finished = true;
        let frame_index = state.current.as_ref().map(|f| f.frame_index);
        let _ = self.tx.send(line(&Message::End { frame_index }));
    }

    /// Consumers disconnected for falling behind.
    pub fn dropped_consumers(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Event streams opened so far.
    pub fn connected_consumers(&self) -> u64 {
        self.connected.load(Ordering::Relaxed)
    }

    fn snapshot_of(&self, state: &State) -> Bytes {
        let frame = state.current.as_ref();
        let entries: Vec<SlotEntry> = match frame {
            Some(f) => f.entries.clone(),
            None => vec![SlotEntry::FREE; self.slot_ids.len()],
        };
        line(&Message::Snapshot {
            frame_index: frame.map(|f| f.frame_index),
            timestamp_ms: frame.and_then(|f| f.timestamp_ms),
            slots: self
                .slot_ids
                .iter()
                .zip(entries)
                .map(|(&slot_id, e)| SlotState {
                    slot_id,
                    occupied: e.occupied,
                    vehicle_id: e.vehicle_id,
                })
                .collect(),
            unassigned_vehicles: frame.map_or(&[], |f| &f.unassigned_vehicles),
        })
    }

    pub fn snapshot(&self) -> Bytes {
        let state = self.state.lock().expect("hub lock");
        self.snapshot_of(&state)
    }

    /// Snapshot and subscription taken under one lock, so the stream holds
    /// exactly the events after the snapshot.
    fn subscribe(&self) -> (Bytes, Option<broadcast::Receiver<Bytes>>, Option<u64>) {
        let state = self.state.lock().expect("hub lock");
        let snapshot = self.snapshot_of(&state);
        let upto = state.current.as_ref().map(|f| f.frame_index);
        let rx = (!state.finished).then(|| self.tx.subscribe());
        (snapshot, rx, upto)
    }

    /// Analytics over the log records up to the current frame.
    fn analytics(&self) -> Result<Vec<u8>, String> {
        let upto = self
            .state
            .lock()
            .expect("hub lock")
            .current
            .as_ref()
            .map(|f| f.frame_index);
        let read = read_log_file(&self.log_path).map_err(|e| e.to_string())?;
        let mut log = OccupancyLog::new(read.log.header().clone()).map_err(|e| e.to_string())?;
        log.attach_slot_map(&self.map).map_err(|e| e.to_string())?;
        for f in read.log.frames() {
            if upto.is_some_and(|u| f.frame_index <= u) {
                log.append(f.clone()).map_err(|e| e.to_string())?;
            }
        }

        let series = occupancy_timeseries(&log);
        let durations = slot_durations(&log);
        let counts = slot_vehicle_counts(&log);
        let stats = slot_stats(&log);
        let mut out = format!("{{\"frames\":{}", log.len()).into_bytes();
        for r in [
            AnalyticsResult::Timeseries(&series),
            AnalyticsResult::Durations(&durations),
            AnalyticsResult::VehicleCounts(&counts),
            AnalyticsResult::Stats(&stats),
        ] {
            out.extend_from_slice(format!(",\"{}\":", r.name()).as_bytes());
            export(r, ExportFormat::Json, None, &mut out).map_err(|e| e.to_string())?;
        }
        out.push(b'}');
        Ok(out)
    }
}

/// Response body fed by a per-consumer queue.
struct ChannelBody(mpsc::Receiver<Bytes>);

const FLUSH_INTERVAL: Duration = Duration::from_millis(10);
const END_PREFIX: &[u8] = b"{\"type\":\"end\"";

impl hyper::body::Body for ChannelBody {
    type Data = Bytes;
    type Error = Infallible;

    fn poll_frame(
        mut self: Pin<&mut Self>,
        cx: &mut Context<'_>,
    ) -> Poll<Option<Result<Frame<Bytes>, Infallible>>> {
        self.0.poll_recv(cx).map(|b| b.map(|b| Ok(Frame::data(b))))
    }
}

type Body = BoxBody<Bytes, Infallible>;

fn full(status: StatusCode, content_type: &'static str, body: impl Into<Bytes>) -> Response<Body> {
    let mut r = Response::new(Full::new(body.into()).boxed());
    *r.status_mut() = status;
    r.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static(content_type));
    r
}

fn events(hub: &Arc<Hub>, kill: Arc<Notify>) -> Response<Body> {
    let (snapshot, rx, upto) = hub.subscribe();
    let (qtx, qrx) = mpsc::channel(2);
    hub.connected.fetch_add(1, Ordering::Relaxed);
    let _ = qtx.try_send(snapshot);
    match rx {
        None => {
            let _ = qtx.try_send(line(&Message::End { frame_index: upto }));
        }
        Some(rx) => {
            tokio::spawn(forward(hub.clone(), rx, qtx, kill));
        }
    }
    let mut r = Response::new(ChannelBody(qrx).boxed());
    let h = r.headers_mut();
    h.insert(CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"));
    h.insert(CACHE_CONTROL, HeaderValue::from_static("no-store"));
    r
}

/// Moves one consumer's frames from the broadcast buffer to its connection.
/// Draining on a timer rather than per message keeps the cost of a consumer
/// to the publisher independent of the frame rate.
async fn forward(hub: Arc<Hub>, mut rx: broadcast::Receiver<Bytes>, qtx: mpsc::Sender<Bytes>, kill: Arc<Notify>) {
    let disconnect = |why: &str| {
        warn!("event consumer {why}; disconnecting");
        hub.dropped.fetch_add(1, Ordering::Relaxed);
        kill.notify_one();
    };
    let mut tick = tokio::time::interval(FLUSH_INTERVAL);
    tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tick.tick().await;
        if qtx.is_closed() {
            return;
        }
        let mut batch = Vec::new();
        let mut done = false;
        while !done {
            match rx.try_recv() {
                Ok(m) => {
                    done = m.starts_with(END_PREFIX);
                    batch.extend_from_slice(&m);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Closed) => done = true,
                Err(TryRecvError::Lagged(_)) => return disconnect("fell behind"),
            }
        }
        if !batch.is_empty() {
            match qtx.send_timeout(Bytes::from(batch), hub.options.stall_timeout).await {
                Ok(()) => {}
                Err(mpsc::error::SendTimeoutError::Timeout(_)) => return disconnect("stalled"),
                Err(mpsc::error::SendTimeoutError::Closed(_)) => return,
            }
        }
        if done {
            return;
        }
    }
}

async fn handle(hub: Arc<Hub>, kill: Arc<Notify>, req: Request<Incoming>) -> Result<Response<Body>, Infallible> {
    let mut resp = if req.method() != Method::GET {
        full(StatusCode::METHOD_NOT_ALLOWED, "text/plain", "only GET is supported\n")
    } else {
        match req.uri().path() {
            "/slots" => full(StatusCode::OK, "application/json", hub.slot_map_json.clone()),
            "/snapshot" => full(StatusCode::OK, "application/json", hub.snapshot()),
            "/events" => events(&hub, kill),
            "/analytics" => {
                let h = hub.clone();
                match tokio::task::spawn_blocking(move || h.analytics()).await {
                    Ok(Ok(body)) => full(StatusCode::OK, "application/json", body),
                    Ok(Err(e)) => full(StatusCode::INTERNAL_SERVER_ERROR, "text/plain", format!("{e}\n")),
                    Err(e) => full(StatusCode::INTERNAL_SERVER_ERROR, "text/plain", format!("{e}\n")),
                }
            }
            _ => full(StatusCode::NOT_FOUND, "text/plain", "not found\n"),
        }
    };
    resp.headers_mut()
        .insert(ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    Ok(resp)
}

/// Binds the listening socket. Failure (port in use, bad address) is a
/// config error.
pub fn bind(addr: SocketAddr) -> Result<StdListener, CliError> {
    let l = StdListener::bind(addr).map_err(|e| CliError::Config(format!("cannot listen on {addr}: {e}")))?;
    l.set_nonblocking(true)
        .map_err(|e| CliError::Config(format!("cannot listen on {addr}: {e}")))?;
    Ok(l)
}

/// Accepts connections until the task is dropped.
pub async fn serve(hub: Arc<Hub>, listener: StdListener) -> std::io::Result<()> {
    let listener = TcpListener::from_std(listener)?;
    info!("listening on http://{}", listener.local_addr()?);
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let hub = hub.clone();
        tokio::spawn(async move {
            let kill = Arc::new(Notify::new());
            let k = kill.clone();
            let svc = service_fn(move |req| handle(hub.clone(), k.clone(), req));
            let conn = http1::Builder::new().serve_connection(TokioIo::new(stream), svc);
            tokio::select! {
                r = conn => {
                    if let Err(e) = r {
                        debug!(%peer, "connection ended: {e}");
                    }
                }
                _ = kill.notified() => debug!(%peer, "connection closed by server"),
            }
        });
    }
}

/// Replays a finished log into the hub, paced at `fps · speed` frames per
/// second (unthrottled when `speed` is 0).
pub fn replay(hub: &Hub, log: &OccupancyLog, speed: f64) -> Result<(), CliError> {
    let ids = log.slot_ids();
    let period = (speed > 0.0).then(|| Duration::from_secs_f64(1.0 / (log.fps() * speed)));
    let start = Instant::now();
    let mut prev: Option<&OccupancyFrame> = None;
    for (k, frame) in log.frames().iter().enumerate() {
        if let Some(p) = period {
            let due = start + p.mul_f64(k as f64);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let events = match prev {
            Some(p) => diff_frames(p, frame, ids)
                .map_err(|e| CliError::Data(format!("replay frame {}: {e}", frame.frame_index)))?,
            None => initial_events(frame, ids),
        };
        hub.publish(frame, &events, &summarize(frame));
        prev = Some(frame);
    }
    Ok(())
}

/// `serve`: runs the pipeline on `input` (or replays `replay_log`) while
/// serving. Keeps serving after the source ends, until interrupted.
pub fn serve_command(
    cfg: &EngineConfig,
    replay_log: Option<&Path>,
    input: &Input,
) -> Result<(), CliError> {
    let map = read_slot_map(&cfg.slot_map)?;
    let listener = bind(cfg.serve.socket_addr()?)?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Config(format!("listener: {e}")))?;
    let replayed = replay_log
        .map(|p| load_log_for_replay(p, &map))
        .transpose()?;
    let log_path = replay_log.map_or_else(|| cfg.log.path.clone(), Path::to_path_buf);
    let hub = Hub::new(
        &map,
        log_path,
        HubOptions {
            queue_capacity: cfg.serve.queue_capacity,
            stall_timeout: Duration::from_millis(cfg.serve.stall_timeout_ms),
        },
    );
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Config(format!("runtime: {e}")))?;
    let _server = rt.spawn(serve(hub.clone(), listener));
    println!("listening on http://{addr}");
    let _ = io::stdout().flush();

    let (done_tx, done_rx) = tokio::sync::oneshot::channel();
    let source_hub = hub.clone();
    let cfg = cfg.clone();
    let source = match replayed {
        Some(log) => {
            let speed = cfg.serve.replay_speed;
            thread::spawn(move || {
                let r = replay(&source_hub, &log, speed);
                source_hub.finish();
                let _ = done_tx.send(r);
            })
        }
        None => {
            let reader = input.open()?;
            thread::spawn(move || {
                let r = run_pipeline(&cfg, map, reader, |out| {
                    source_hub.publish(&out.frame, &out.events, &out.summary)
                });
                source_hub.finish();
                let _ = done_tx.send(r.map(|_| ()));
            })
        }
    };
    let result = rt.block_on(async {
        tokio::select! {
            r = done_rx => match r {
                Ok(Err(e)) => return Err(e),
                _ => info!("source finished; still serving"),
            },
            _ = tokio::signal::ctrl_c() => return Ok(()),
        }
        let _ = tokio::signal::ctrl_c().await;
        Ok(())
    });
    if result.is_err() {
        let _ = source.join();
    }
    rt.shutdown_timeout(Duration::from_millis(200));
    result
}
