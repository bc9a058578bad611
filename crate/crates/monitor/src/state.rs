//! Pure folds over event logs: per-student state, level statistics, stuck
//! detection and grades. Everything here takes events already sorted by
//! [`Event::order_key`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use ta_core::event::{Event, EventType, EXTRA_NEXT_LEVEL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentState {
    pub user: String,
    pub host: String,
    pub ip: String,
    pub current_level: String,
    pub last_command: String,
    /// Failed commands on the current level.
    pub unsuccessful_attempts: u32,
    pub last_activity: Option<DateTime<Utc>>,
    pub help_requested: bool,
    pub finished: bool,
    pub levels_passed: BTreeSet<String>,
    /// A leaf level has been passed; the next `exit` marks the student finished.
    pub passed_leaf: bool,
}

impl StudentState {
    pub fn new(user: &str) -> Self {
        Self {
            user: user.to_string(),
            host: String::new(),
            ip: String::new(),
            current_level: String::new(),
            last_command: String::new(),
            unsuccessful_attempts: 0,
            last_activity: None,
            help_requested: false,
            finished: false,
            levels_passed: BTreeSet::new(),
            passed_leaf: false,
        }
    }

    /// Applies one event. Acks come from the instructor, so they clear the
    /// help flag without counting as student activity.
    pub fn apply(&mut self, e: &Event) {
        if e.event_type != EventType::Ack {
            self.last_activity = Some(e.timestamp);
            if !e.host.is_empty() {
                self.host.clone_from(&e.host);
            }
            if !e.ip.is_empty() {
                self.ip.clone_from(&e.ip);
            }
        }
        match e.event_type {
            EventType::Start => {
                if self.current_level != e.level_id {
                    self.unsuccessful_attempts = 0;
                }
                self.current_level.clone_from(&e.level_id);
            }
            EventType::Command => {
                if self.current_level != e.level_id {
                    self.unsuccessful_attempts = 0;
                    self.current_level.clone_from(&e.level_id);
                }
                self.unsuccessful_attempts += 1;
                self.last_command.clone_from(&e.command_text);
            }
            EventType::Passed => {
                self.levels_passed.insert(e.level_id.clone());
                self.unsuccessful_attempts = 0;
                if !e.command_text.is_empty() {
                    self.last_command.clone_from(&e.command_text);
                }
                match e.extra.get(EXTRA_NEXT_LEVEL) {
                    Some(next) => self.current_level.clone_from(next),
                    None => {
                        self.current_level.clone_from(&e.level_id);
                        self.passed_leaf = true;
                    }
                }
            }
            EventType::Exit => {
                if self.passed_leaf {
                    self.finished = true;
                }
            }
            EventType::Help => self.help_requested = true,
            EventType::Ack => self.help_requested = false,
        }
    }

    pub fn idle(&self, now: DateTime<Utc>) -> Option<Duration> {
        self.last_activity.map(|t| now - t)
    }
}

/// Folds one student's events from scratch.
pub fn fold_student<'a>(user: &str, events: impl IntoIterator<Item = &'a Event>) -> StudentState {
    let mut state = StudentState::new(user);
    for e in events {
        state.apply(e);
    }
    state
}

/// Folds a whole lab log into per-student states.
pub fn fold_lab<'a>(events: impl IntoIterator<Item = &'a Event>) -> BTreeMap<String, StudentState> {
    let mut out: BTreeMap<String, StudentState> = BTreeMap::new();
    for e in events {
        out.entry(e.user.clone())
            .or_insert_with(|| StudentState::new(&e.user))
            .apply(e);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub idle: Duration,
    pub attempts: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            idle: Duration::minutes(10),
            attempts: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StuckReason {
    Help,
    Attempts,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StuckStudent {
    pub user: String,
    pub level: String,
    /// The most pressing reason.
    pub reason: StuckReason,
    pub reasons: Vec<StuckReason>,
}

/// Help requests are always flagged. Idle time and failed attempts only
/// count for students who have not finished.
pub fn stuck_reasons(s: &StudentState, now: DateTime<Utc>, t: Thresholds) -> Vec<StuckReason> {
    let mut reasons = Vec::new();
    if s.help_requested {
        reasons.push(StuckReason::Help);
    }
    if !s.finished {
        if s.unsuccessful_attempts >= t.attempts {
            reasons.push(StuckReason::Attempts);
        }
        if s.idle(now).is_some_and(|idle| idle > t.idle) {
            reasons.push(StuckReason::Idle);
        }
    }
    reasons
}

pub fn stuck_students<'a>(
    students: impl IntoIterator<Item = &'a StudentState>,
    now: DateTime<Utc>,
    t: Thresholds,
) -> Vec<StuckStudent> {
    students
        .into_iter()
        .filter_map(|s| {
            let reasons = stuck_reasons(s, now, t);
            Some(StuckStudent {
                user: s.user.clone(),
                level: s.current_level.clone(),
                reason: *reasons.first()?,
                reasons,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LevelStats {
    pub level: String,
    /// `command` events, i.e. commands that did not pass.
    pub failed_attempts: u64,
    /// Distinct students who passed the level.
    pub passes: u64,
    pub pass_events: u64,
    /// Students currently on this level and flagged as stuck.
    pub stuck_users: Vec<String>,
}

/// Per-level statistics, ordered by failed attempts (most first), then name.
pub fn level_statistics(events: &[Event], now: DateTime<Utc>, t: Thresholds) -> Vec<LevelStats> {
    let mut by_level: BTreeMap<&str, (LevelStats, BTreeSet<&str>)> = BTreeMap::new();
    for e in events {
        if e.level_id.is_empty() {
            continue;
        }
        let (stats, passers) = by_level.entry(&e.level_id).or_default();
        match e.event_type {
            EventType::Command => stats.failed_attempts += 1,
            EventType::Passed => {
                stats.pass_events += 1;
                passers.insert(&e.user);
            }
            _ => {}
        }
    }
    let students = fold_lab(events);
    for s in stuck_students(students.values(), now, t) {
        if let Some((stats, _)) = by_level.get_mut(s.level.as_str()) {
            stats.stuck_users.push(s.user);
        }
    }
    let mut out: Vec<LevelStats> = by_level
        .into_iter()
        .map(|(level, (mut stats, passers))| {
            stats.level = level.to_string();
            stats.passes = passers.len() as u64;
            stats
        })
        .collect();
    out.sort_by(|a, b| b.failed_attempts.cmp(&a.failed_attempts).then_with(|| a.level.cmp(&b.level)));
    out
}

/// Every level name the log mentions, including announced next levels.
pub fn known_levels(events: &[Event]) -> BTreeSet<String> {
    let mut levels = BTreeSet::new();
    for e in events {
        if !e.level_id.is_empty() {
            levels.insert(e.level_id.clone());
        }
        if let Some(next) = e.extra.get(EXTRA_NEXT_LEVEL) {
            levels.insert(next.clone());
        }
    }
    levels
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GradeError {
    #[error("grading scheme names unknown level `{0}`")]
    UnknownLevel(String),
    #[error("malformed grading scheme entry `{0}` (expected level:points)")]
    Malformed(String),
}

/// Parses `lvl1:1,lvl2:2`.
pub fn parse_scheme(text: &str) -> Result<BTreeMap<String, u32>, GradeError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (level, points) = entry.split_once(':').ok_or_else(|| GradeError::Malformed(entry.to_string()))?;
            let points = points.trim().parse().map_err(|_| GradeError::Malformed(entry.to_string()))?;
            Ok((level.trim().to_string(), points))
        })
        .collect()
}

/// CSV with one row per student, sorted by user:
/// `user,levels_passed,points,finished`. Levels missing from the scheme are
/// worth nothing; a scheme naming a level the lab never saw is an error.
pub fn grade_export(events: &[Event], scheme: &BTreeMap<String, u32>) -> Result<String, GradeError> {
    let known = known_levels(events);
    if let Some(unknown) = scheme.keys().find(|l| !known.contains(*l)) {
        return Err(GradeError::UnknownLevel(unknown.clone()));
    }
    let mut csv = String::from("user,levels_passed,points,finished\n");
    for s in fold_lab(events).values() {
        let points: u64 = s.levels_passed.iter().filter_map(|l| scheme.get(l)).map(|p| u64::from(*p)).sum();
        let _ = writeln!(csv, "{},{},{},{}", csv_field(&s.user), s.levels_passed.len(), points, s.finished);
    }
    Ok(csv)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uuid::Uuid;

    fn at(min: i64) -> DateTime<Utc> {
        "2024-03-01T10:00:00Z".parse::<DateTime<Utc>>().unwrap() + Duration::minutes(min)
    }

    fn ev(t: EventType, user: &str, level: &str, min: i64) -> Event {
        Event {
            event_id: Uuid::new_v4(),
            event_type: t,
            user: user.into(),
            host: "h".into(),
            ip: "10.0.0.1".into(),
            lab_id: "lab".into(),
            level_id: level.into(),
            command_text: String::new(),
            timestamp: at(min),
            extra: BTreeMap::new(),
        }
    }

    fn passed(user: &str, level: &str, next: Option<&str>, min: i64) -> Event {
        let mut e = ev(EventType::Passed, user, level, min);
        if let Some(n) = next {
            e.extra.insert(EXTRA_NEXT_LEVEL.into(), n.into());
        }
        e
    }

    fn full_run(user: &str) -> Vec<Event> {
        vec![
            ev(EventType::Start, user, "lvl1", 0),
            ev(EventType::Command, user, "lvl1", 1),
            passed(user, "lvl1", Some("lvl2"), 2),
            passed(user, "lvl2", Some("lvl3"), 3),
            passed(user, "lvl3", None, 4),
            ev(EventType::Exit, user, "lvl3", 4),
        ]
    }

    #[test]
    fn complete_run_is_finished() {
        let s = fold_student("a", &full_run("a"));
        assert!(s.finished);
        assert_eq!(s.levels_passed.len(), 3);
        assert_eq!(s.unsuccessful_attempts, 0);
    }

    #[test]
    fn exit_without_leaf_is_not_finished() {
        let log = [ev(EventType::Start, "a", "lvl1", 0), ev(EventType::Exit, "a", "lvl1", 1)];
        assert!(!fold_student("a", &log).finished);
    }

    #[test]
    fn attempts_and_help() {
        let mut log = vec![ev(EventType::Start, "a", "lvl1", 0)];
        log.extend((0..12).map(|i| ev(EventType::Command, "a", "lvl1", 1 + i / 6)));
        let s = fold_student("a", &log);
        assert_eq!(s.unsuccessful_attempts, 12);
        let stuck = stuck_students([&s], at(3), Thresholds::default());
        assert_eq!(stuck[0].reason, StuckReason::Attempts);

        log.push(ev(EventType::Help, "a", "lvl1", 3));
        let s = fold_student("a", &log);
        let lax = Thresholds { idle: Duration::hours(1), attempts: 100 };
        assert_eq!(stuck_students([&s], at(3), lax)[0].reasons, [StuckReason::Help]);
        log.push(ev(EventType::Ack, "a", "lvl1", 4));
        let s = fold_student("a", &log);
        assert!(!s.help_requested);
        assert_eq!(s.last_activity, Some(at(3)));
        assert!(stuck_students([&s], at(5), lax).is_empty());
        assert_eq!(stuck_students([&s], at(20), Thresholds::default())[0].reasons, [StuckReason::Attempts, StuckReason::Idle]);
    }

    #[test]
    fn statistics_rank_failures() {
        let mut log = full_run("a");
        log.extend((0..10).map(|i| ev(EventType::Command, "b", "lvl3", 10 + i)));
        let stats = level_statistics(&log, at(20), Thresholds::default());
        assert_eq!(stats[0].level, "lvl3");
        assert_eq!(stats[0].failed_attempts, 10);
        assert_eq!(stats[0].stuck_users, ["b"]);
        let lvl2 = stats.iter().find(|s| s.level == "lvl2").unwrap();
        assert_eq!((lvl2.failed_attempts, lvl2.passes), (0, 1));
        assert!(level_statistics(&[], at(0), Thresholds::default()).is_empty());
    }

    #[test]
    fn grades() {
        let mut log = full_run("zoe");
        log.push(ev(EventType::Start, "al", "lvl1", 0));
        let scheme = parse_scheme("lvl1:1, lvl2:2,lvl3:3").unwrap();
        assert_eq!(
            grade_export(&log, &scheme).unwrap(),
            "user,levels_passed,points,finished\nal,0,0,false\nzoe,3,6,true\n"
        );
        let bad = parse_scheme("lvl9:1").unwrap();
        assert_eq!(grade_export(&log, &bad), Err(GradeError::UnknownLevel("lvl9".into())));
        assert!(parse_scheme("lvl1").is_err());
    }
}
