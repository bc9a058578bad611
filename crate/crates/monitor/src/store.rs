//! Lab logs: one append-only NDJSON file per lab on disk, folded into
//! memory on load and on every accepted event.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::Serialize;
use ta_core::event::{Event, EventType};
use tokio::sync::broadcast;
use uuid::Uuid;

use crate::state::{fold_student, StudentState};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid lab id `{0}` (letters, digits, `.`, `_` and `-` only)")]
    BadLabId(String),
    #[error("lab log I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ingested {
    Accepted,
    Duplicate,
}

/// Pushed to stream subscribers after each accepted event.
#[derive(Debug, Clone, Serialize)]
pub struct Update {
    pub lab_id: String,
    pub event: Event,
    pub student: StudentState,
}

pub fn valid_lab_id(lab: &str) -> bool {
    !lab.is_empty()
        && lab.len() <= 128
        && !lab.starts_with('.')
        && lab.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

struct Lab {
    /// Sorted by `order_key`.
    log: Vec<Event>,
    ids: HashSet<Uuid>,
    /// Each student's events, sorted.
    per_user: BTreeMap<String, Vec<Event>>,
    students: BTreeMap<String, StudentState>,
    file: Option<File>,
}

impl Lab {
    fn empty(file: Option<File>) -> Self {
        Self {
            log: Vec::new(),
            ids: HashSet::new(),
            per_user: BTreeMap::new(),
            students: BTreeMap::new(),
            file,
        }
    }

    /// Inserts in order and refolds only what the insertion can affect.
    fn insert(&mut self, e: Event) -> StudentState {
        let key = e.order_key();
        let at = self.log.partition_point(|x| x.order_key() <= key);
        self.log.insert(at, e.clone());
        self.ids.insert(e.event_id);

        let events = self.per_user.entry(e.user.clone()).or_default();
        let at = events.partition_point(|x| x.order_key() <= key);
        let in_order = at == events.len();
        events.insert(at, e.clone());
        let state = self
            .students
            .entry(e.user.clone())
            .or_insert_with(|| StudentState::new(&e.user));
        if in_order {
            state.apply(&e);
        } else {
            *state = fold_student(&e.user, events.iter());
        }
        state.clone()
    }
}

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// All labs. Each lab has its own lock, so ingestion into one lab is
/// serialised while different labs proceed independently.
pub struct Monitor {
    data_dir: Option<PathBuf>,
    labs: RwLock<BTreeMap<String, Arc<Mutex<Lab>>>>,
    updates: broadcast::Sender<Update>,
    clock: Clock,
}

impl Monitor {
    /// Keeps everything in memory only.
    pub fn in_memory() -> Self {
        Self::build(None)
    }

    /// Loads every `<lab>.ndjson` in `dir`, creating the directory if needed.
    /// Unparseable lines (such as a torn final write) are skipped with a warning.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let monitor = Self::build(Some(dir.to_path_buf()));
        let mut labs = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("ndjson") {
                continue;
            }
            let Some(lab_id) = path.file_stem().and_then(|s| s.to_str()).filter(|l| valid_lab_id(l)) else {
                continue;
            };
            let mut file = OpenOptions::new().append(true).open(&path)?;
            let bytes = fs::read(&path)?;
            if bytes.last().is_some_and(|b| *b != b'\n') {
                // Seal a torn final record so the next append starts clean.
                file.write_all(b"\n")?;
            }
            let mut lab = Lab::empty(Some(file));
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Event>(&line) {
                    Ok(e) if !lab.ids.contains(&e.event_id) => {
                        lab.insert(e);
                    }
                    Ok(_) => {}
                    Err(err) => eprintln!("warning: {}:{}: skipping bad record: {err}", path.display(), n + 1),
                }
            }
            labs.insert(lab_id.to_string(), Arc::new(Mutex::new(lab)));
        }
        *monitor.labs.write().unwrap() = labs;
        Ok(monitor)
    }

    fn build(data_dir: Option<PathBuf>) -> Self {
        let (updates, _) = broadcast::channel(1024);
        Self {
            data_dir,
            labs: RwLock::new(BTreeMap::new()),
            updates,
            clock: Arc::new(Utc::now),
        }
    }

    /// Replaces the wall clock, for tests.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Update> {
        self.updates.subscribe()
    }

    fn lab(&self, lab_id: &str) -> Option<Arc<Mutex<Lab>>> {
        self.labs.read().unwrap().get(lab_id).cloned()
    }

    fn lab_or_create(&self, lab_id: &str) -> Result<Arc<Mutex<Lab>>, StoreError> {
        if !valid_lab_id(lab_id) {
            return Err(StoreError::BadLabId(lab_id.to_string()));
        }
        if let Some(lab) = self.lab(lab_id) {
            return Ok(lab);
        }
        let mut labs = self.labs.write().unwrap();
        if let Some(lab) = labs.get(lab_id) {
            return Ok(lab.clone());
        }
        let file = match &self.data_dir {
            Some(dir) => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(format!("{lab_id}.ndjson")))?,
            ),
            None => None,
        };
        let lab = Arc::new(Mutex::new(Lab::empty(file)));
        labs.insert(lab_id.to_string(), lab.clone());
        Ok(lab)
    }

    /// Appends the event to its lab's log and folds it in. An event id seen
    /// before is acknowledged without being stored again.
    pub fn ingest(&self, event: Event) -> Result<Ingested, StoreError> {
        let lab = self.lab_or_create(&event.lab_id)?;
        let mut lab = lab.lock().unwrap();
        if lab.ids.contains(&event.event_id) {
            return Ok(Ingested::Duplicate);
        }
        if let Some(file) = lab.file.as_mut() {
            let mut line = serde_json::to_vec(&event).expect("events serialise");
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        let student = lab.insert(event.clone());
        let _ = self.updates.send(Update {
            lab_id: event.lab_id.clone(),
            event,
            student,
        });
        Ok(Ingested::Accepted)
    }

    /// Records an instructor acknowledgement of `user`'s help request.
    /// Returns `None` when the student is unknown in that lab.
    pub fn acknowledge(&self, lab_id: &str, user: &str) -> Result<Option<Event>, StoreError> {
        let Some(student) = self.student(lab_id, user) else {
            return Ok(None);
        };
        let event = Event {
            event_id: Uuid::now_v7(),
            event_type: EventType::Ack,
            user: user.to_string(),
            host: String::new(),
            ip: String::new(),
            lab_id: lab_id.to_string(),
            level_id: student.current_level,
            command_text: String::new(),
            timestamp: self.now(),
            extra: BTreeMap::new(),
        };
        self.ingest(event.clone())?;
        Ok(Some(event))
    }

    pub fn lab_ids(&self) -> Vec<String> {
        self.labs.read().unwrap().keys().cloned().collect()
    }

    /// Current state of every student seen in the lab, sorted by user.
    pub fn snapshot(&self, lab_id: &str) -> Vec<StudentState> {
        self.lab(lab_id)
            .map(|l| l.lock().unwrap().students.values().cloned().collect())
            .unwrap_or_default()
    }

    pub fn student(&self, lab_id: &str, user: &str) -> Option<StudentState> {
        self.lab(lab_id)?.lock().unwrap().students.get(user).cloned()
    }

    pub fn history(&self, lab_id: &str, user: &str) -> Vec<Event> {
        self.lab(lab_id)
            .and_then(|l| l.lock().unwrap().per_user.get(user).cloned())
            .unwrap_or_default()
    }

    /// The lab's whole log, in order.
    pub fn log(&self, lab_id: &str) -> Vec<Event> {
        self.lab(lab_id).map(|l| l.lock().unwrap().log.clone()).unwrap_or_default()
    }
}
