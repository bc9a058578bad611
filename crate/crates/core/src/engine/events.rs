//! Event delivery that never blocks the learner.
//!
//! Each event is first written to `$HOME/.ta/queue/` and a detached
//! `ta flush-events` process posts the queue to the monitor. The flusher
//! holds an exclusive lock on the queue while it drains it, retries each
//! event a bounded number of times and then drops it with a line in
//! `$HOME/.ta/dropped.log`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::event::Event;

/// Maximum number of queued events; the oldest are dropped beyond this.
pub const QUEUE_LIMIT: usize = 1000;

pub trait EventSink {
    /// Hands the event off. Must not fail or block on the network.
    fn emit(&mut self, event: &Event);
}

/// Discards everything. Used when no monitor is configured.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _event: &Event) {}
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub events: Vec<Event>,
}

impl EventSink for MemorySink {
    fn emit(&mut self, event: &Event) {
        self.events.push(event.clone());
    }
}

pub fn ta_dir(home: &Path) -> PathBuf {
    home.join(".ta")
}

pub fn queue_dir(home: &Path) -> PathBuf {
    ta_dir(home).join("queue")
}

fn dropped_log(home: &Path) -> PathBuf {
    ta_dir(home).join("dropped.log")
}

fn log_dropped(home: &Path, reason: &str, payload: &str) {
    let line = format!("{} {reason} {}\n", chrono::Utc::now().to_rfc3339(), payload.trim());
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(dropped_log(home)) {
        let _ = f.write_all(line.as_bytes());
    }
}

fn queued_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e),
    };
    // Names start with a zero-padded timestamp, so this is arrival order.
    files.sort();
    Ok(files)
}

/// Writes `event` into the queue of `home`, evicting the oldest entries when
/// the queue is full.
pub fn spool_event(home: &Path, event: &Event) -> io::Result<PathBuf> {
    let dir = queue_dir(home);
    fs::create_dir_all(&dir)?;

    let existing = queued_files(&dir)?;
    if existing.len() >= QUEUE_LIMIT {
        for old in &existing[..=existing.len() - QUEUE_LIMIT] {
            let payload = fs::read_to_string(old).unwrap_or_default();
            if fs::remove_file(old).is_ok() {
                log_dropped(home, "queue-full", &payload);
            }
        }
    }

    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let path = dir.join(format!("{nanos:020}-{}.json", event.event_id));
    let body = serde_json::to_vec(event).map_err(io::Error::other)?;
    // Temp name without the .json suffix so a concurrent flusher never reads
    // a half-written file.
    let mut tmp = tempfile::Builder::new().prefix(".spool").tempfile_in(&dir)?;
    tmp.write_all(&body)?;
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Queues events on disk and starts a detached flusher after each one.
pub struct SpoolSink {
    home: PathBuf,
    flusher: Option<(PathBuf, String)>,
}

impl SpoolSink {
    /// `flusher` is the engine binary and monitor URL to launch
    /// `<bin> flush-events --monitor-url <url>` with; `None` only queues.
    pub fn new(home: impl Into<PathBuf>, flusher: Option<(PathBuf, String)>) -> Self {
        Self {
            home: home.into(),
            flusher,
        }
    }
}

impl EventSink for SpoolSink {
    fn emit(&mut self, event: &Event) {
        if let Err(e) = spool_event(&self.home, event) {
            let payload = serde_json::to_string(event).unwrap_or_default();
            log_dropped(&self.home, &format!("spool-failed:{e}"), &payload);
            return;
        }
        if let Some((bin, url)) = &self.flusher {
            let _ = Command::new(bin)
                .arg("flush-events")
                .arg("--monitor-url")
                .arg(url)
                .env("HOME", &self.home)
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .spawn();
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlushPolicy {
    /// Sleep before each retry; its length is the retry count.
    pub backoff: Vec<Duration>,
    pub request_timeout: Duration,
}

impl Default for FlushPolicy {
    fn default() -> Self {
        Self {
            backoff: vec![
                Duration::from_millis(100),
                Duration::from_millis(200),
                Duration::from_millis(400),
            ],
            request_timeout: Duration::from_secs(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    Delivered,
    /// The monitor answered with a 4xx status; retrying cannot help.
    Rejected(u16),
    Failed(String),
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FlushReport {
    pub delivered: usize,
    pub dropped: usize,
    /// Another flusher held the queue lock.
    pub skipped: bool,
}

fn post_once(agent: &ureq::Agent, url: &str, body: &[u8]) -> Delivery {
    match agent.post(url).header("Content-Type", "application/json").send(body) {
        Ok(resp) => {
            let status = resp.status().as_u16();
            match status {
                200..=299 => Delivery::Delivered,
                400..=499 => Delivery::Rejected(status),
                _ => Delivery::Failed(format!("http status {status}")),
            }
        }
        Err(e) => Delivery::Failed(e.to_string()),
    }
}

/// Posts one JSON body with retries.
pub fn post_event(agent: &ureq::Agent, url: &str, body: &[u8], policy: &FlushPolicy) -> Delivery {
    let mut outcome = post_once(agent, url, body);
    for pause in &policy.backoff {
        if !matches!(outcome, Delivery::Failed(_)) {
            break;
        }
        thread::sleep(*pause);
        outcome = post_once(agent, url, body);
    }
    outcome
}

pub fn events_endpoint(monitor_url: &str) -> String {
    format!("{}/api/v1/events", monitor_url.trim_end_matches('/'))
}

/// Drains the queue of `home` to the monitor. Returns immediately with
/// `skipped` when another flusher owns the queue.
pub fn flush_queue(home: &Path, monitor_url: &str, policy: &FlushPolicy) -> io::Result<FlushReport> {
    let dir = queue_dir(home);
    fs::create_dir_all(&dir)?;
    let lock = File::create(dir.join(".lock"))?;
    let agent = ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .timeout_global(Some(policy.request_timeout))
            .http_status_as_error(false)
            .build(),
    );
    let url = events_endpoint(monitor_url);
    let mut report = FlushReport::default();

    loop {
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => {
                // The holder rescans after unlocking, so nothing is stranded.
                report.skipped = report.delivered == 0 && report.dropped == 0;
                return Ok(report);
            }
            Err(fs::TryLockError::Error(e)) => return Err(e),
        }
        for path in queued_files(&dir)? {
            let Ok(body) = fs::read(&path) else { continue };
            match post_event(&agent, &url, &body, policy) {
                Delivery::Delivered => report.delivered += 1,
                Delivery::Rejected(status) => {
                    report.dropped += 1;
                    log_dropped(home, &format!("rejected:{status}"), &String::from_utf8_lossy(&body));
                }
                Delivery::Failed(why) => {
                    report.dropped += 1;
                    log_dropped(home, &format!("undeliverable:{why}"), &String::from_utf8_lossy(&body));
                }
            }
            let _ = fs::remove_file(&path);
        }
        lock.unlock()?;
        if queued_files(&dir)?.is_empty() {
            return Ok(report);
        }
    }
}
