use std::collections::BTreeMap;
use std::io::{self, Write};
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use chrono::{DateTime, TimeDelta, Utc};
use thiserror::Error;
use uuid::Uuid;

use super::events::EventSink;
use super::render::{render_level, RenderedText};
use super::select::{level_rng, select_next_level};
use crate::challenge::{ChallengeSpec, Level};
use crate::event::{Event, EventType, EXTRA_NEXT_LEVEL};
use crate::security::{
    compute_progress_hash, finished_marker, load_progress, progress_path, resolve_level_from_hash,
    save_progress, ProgressError, SaltTriple,
};

/// Name of the file in `$HOME` that always holds the current level text.
pub const CURRENT_LEVEL_FILE: &str = "ta_current_level.txt";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("progress: {0}")]
    Progress(#[from] ProgressError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Runs a level's test command and reports whether it exited with status 0.
pub trait TestRunner {
    fn passes(&self, test_command: &str) -> bool;
}

/// Runs tests with `<shell> -c` in the current directory and environment.
/// Output of the test is discarded.
#[derive(Debug, Clone)]
pub struct ShellTestRunner {
    pub shell: PathBuf,
}

impl Default for ShellTestRunner {
    fn default() -> Self {
        Self { shell: "bash".into() }
    }
}

impl TestRunner for ShellTestRunner {
    fn passes(&self, test_command: &str) -> bool {
        evaluate_test_with(&self.shell, test_command)
    }
}

/// `true` iff `test_command` exits with status 0 under bash (or `sh` when
/// bash is missing). A command that cannot be started counts as a failure.
pub fn evaluate_test(test_command: &str) -> bool {
    evaluate_test_with(Path::new("bash"), test_command)
}

fn evaluate_test_with(shell: &Path, test_command: &str) -> bool {
    let run = |sh: &Path| {
        Command::new(sh)
            .arg("-c")
            .arg(test_command)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
    };
    match run(shell) {
        Ok(status) => status.success(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            run(Path::new("sh")).map(|s| s.success()).unwrap_or(false)
        }
        Err(_) => false,
    }
}

/// Who is playing, where, and under which lab.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub user: String,
    pub host: String,
    pub ip: String,
    pub lab_id: String,
}

impl Identity {
    /// Reads user and host from the environment and the system; `ip` is the
    /// local address used to reach `monitor`, or loopback.
    pub fn detect(lab_id: &str, monitor: Option<&str>) -> Self {
        let user = std::env::var("USER")
            .or_else(|_| std::env::var("LOGNAME"))
            .unwrap_or_else(|_| "unknown".into());
        Self {
            user,
            host: hostname(),
            ip: monitor.and_then(local_ip_towards).unwrap_or_else(|| "127.0.0.1".into()),
            lab_id: lab_id.to_string(),
        }
    }
}

fn hostname() -> String {
    let mut buf = [0u8; 256];
    // SAFETY: the buffer outlives the call and its length is passed along.
    let rc = unsafe { libc::gethostname(buf.as_mut_ptr().cast(), buf.len()) };
    if rc != 0 {
        return "localhost".into();
    }
    let end = buf.iter().position(|&b| b == 0).unwrap_or(buf.len());
    String::from_utf8_lossy(&buf[..end]).into_owned()
}

/// Connecting a UDP socket sends nothing but makes the kernel pick the
/// outgoing interface, whose address is what the monitor will see.
fn local_ip_towards(monitor: &str) -> Option<String> {
    let rest = monitor.split("://").nth(1).unwrap_or(monitor);
    let authority = rest.split('/').next()?;
    let target = if authority.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) {
        authority.to_string()
    } else {
        format!("{authority}:80")
    };
    let sock = std::net::UdpSocket::bind("0.0.0.0:0").ok()?;
    sock.connect(target).ok()?;
    Some(sock.local_addr().ok()?.ip().to_string())
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub home: PathBuf,
    pub identity: Identity,
    pub seed: u64,
    pub salts: SaltTriple,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TickAction {
    Stay,
    Advance { to: String },
    Finish,
}

#[derive(Debug, Clone)]
pub struct TickOutcome {
    pub action: TickAction,
    pub prompt: String,
    /// Text to show the learner: the new level, or the closing banner.
    pub announcement: Option<RenderedText>,
}

/// One learner's run through one challenge. All state that must survive a
/// restart lives in the progress record; this struct is rebuilt from it on
/// every engine invocation.
#[derive(Debug, Clone)]
pub struct EngineSession {
    spec: ChallengeSpec,
    current_level: String,
    finished: bool,
    config: SessionConfig,
    last_timestamp: Option<DateTime<Utc>>,
}

impl EngineSession {
    /// Restores the session from the progress record in `config.home`.
    /// A missing record starts at the entry level. An unreadable or
    /// unrecognised record also starts there and yields a warning.
    pub fn open(spec: ChallengeSpec, config: SessionConfig) -> Result<(Self, Option<String>), EngineError> {
        let entry = spec.entry_level().name.clone();
        let home = config.home.to_string_lossy().into_owned();
        let path = progress_path(&config.home, spec.challenge_name());

        let (current_level, finished, warning) = match load_progress(&path) {
            Ok(None) => (entry, false, None),
            Ok(Some(record)) => match resolve_level_from_hash(&record, &spec, &config.salts, &home) {
                Ok(Some(level)) => (level, false, None),
                Ok(None) => {
                    let wanted = record.digest();
                    let done = spec.levels().iter().filter(|l| l.is_leaf()).find(|l| {
                        compute_progress_hash(&config.salts, spec.challenge_name(), &finished_marker(&l.name), &home)
                            == wanted
                    });
                    match done {
                        Some(leaf) => (leaf.name.clone(), true, None),
                        None => (
                            entry,
                            false,
                            Some("progress record matches no level; starting over".to_string()),
                        ),
                    }
                }
                Err(e) => (entry, false, Some(format!("{e}; starting over"))),
            },
            Err(ProgressError::Io(e)) => return Err(e.into()),
            Err(e) => (entry, false, Some(format!("{e}; starting over"))),
        };

        let session = Self {
            spec,
            current_level,
            finished,
            config,
            last_timestamp: None,
        };
        if warning.is_some() {
            session.save()?;
        }
        Ok((session, warning))
    }

    pub fn spec(&self) -> &ChallengeSpec {
        &self.spec
    }

    pub fn current_level(&self) -> &Level {
        self.spec
            .level(&self.current_level)
            .expect("current level always names a level of the challenge")
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn progress_file(&self) -> PathBuf {
        progress_path(&self.config.home, self.spec.challenge_name())
    }

    /// Prompt for the shell, naming the challenge and the current level.
    pub fn prompt(&self) -> String {
        let tag = prompt_tag(self.spec.challenge_name(), &self.current_level, self.finished);
        format!("{} \\u@\\h:\\w\\$ ", escape_ps1(&tag))
    }

    fn save(&self) -> Result<(), EngineError> {
        let level = if self.finished {
            finished_marker(&self.current_level)
        } else {
            self.current_level.clone()
        };
        let home = self.config.home.to_string_lossy();
        let digest = compute_progress_hash(&self.config.salts, self.spec.challenge_name(), &level, &home);
        save_progress(&self.progress_file(), &digest)?;
        Ok(())
    }

    fn event(&mut self, event_type: EventType, level: &str, command: &str) -> Event {
        // Strictly increasing within a process so events emitted together
        // keep their order after sorting by timestamp.
        let mut ts = Utc::now();
        if let Some(last) = self.last_timestamp {
            if ts <= last {
                ts = last + TimeDelta::microseconds(1);
            }
        }
        self.last_timestamp = Some(ts);
        let id = &self.config.identity;
        Event {
            event_id: Uuid::now_v7(),
            event_type,
            user: id.user.clone(),
            host: id.host.clone(),
            ip: id.ip.clone(),
            lab_id: id.lab_id.clone(),
            level_id: level.to_string(),
            command_text: command.to_string(),
            timestamp: ts,
            extra: BTreeMap::new(),
        }
    }

    /// Begins (or resumes) the session: records progress, writes the current
    /// level file, emits `start` and returns the text to show.
    pub fn start(&mut self, sink: &mut dyn EventSink) -> Result<RenderedText, EngineError> {
        if load_progress(&self.progress_file()).ok().flatten().is_none() {
            self.save()?;
        }
        self.write_current_level_file()?;
        let level = self.current_level.clone();
        let e = self.event(EventType::Start, &level, "");
        sink.emit(&e);
        Ok(if self.finished {
            render_level(&self.closing_text())
        } else {
            render_level(&self.current_level().body)
        })
    }

    /// One evaluation step, run before each prompt. `last_command` is the
    /// command just entered, or `None` when nothing new was run.
    pub fn tick(
        &mut self,
        last_command: Option<&str>,
        runner: &dyn TestRunner,
        sink: &mut dyn EventSink,
    ) -> Result<TickOutcome, EngineError> {
        if self.finished {
            return Ok(TickOutcome {
                action: TickAction::Stay,
                prompt: self.prompt(),
                announcement: None,
            });
        }
        // Only commands are judged; a bare prompt redraw changes nothing.
        let Some(command) = last_command else {
            return Ok(TickOutcome {
                action: TickAction::Stay,
                prompt: self.prompt(),
                announcement: None,
            });
        };
        let level = self.current_level().clone();

        if !runner.passes(&level.test) {
            let e = self.event(EventType::Command, &level.name, command);
            sink.emit(&e);
            return Ok(TickOutcome {
                action: TickAction::Stay,
                prompt: self.prompt(),
                announcement: None,
            });
        }

        let mut rng = level_rng(self.config.seed, &level.name);
        let next = select_next_level(&level, &mut rng).map(str::to_string);
        let mut passed = self.event(EventType::Passed, &level.name, command);
        let outcome = match next {
            Some(to) => {
                passed.extra.insert(EXTRA_NEXT_LEVEL.to_string(), to.clone());
                self.current_level = to.clone();
                self.save()?;
                self.write_current_level_file()?;
                sink.emit(&passed);
                TickOutcome {
                    action: TickAction::Advance { to },
                    prompt: self.prompt(),
                    announcement: Some(render_level(&self.current_level().body)),
                }
            }
            None => {
                self.finished = true;
                self.save()?;
                self.write_current_level_file()?;
                sink.emit(&passed);
                let exit = self.event(EventType::Exit, &level.name, "");
                sink.emit(&exit);
                TickOutcome {
                    action: TickAction::Finish,
                    prompt: self.prompt(),
                    announcement: Some(render_level(&self.closing_text())),
                }
            }
        };
        Ok(outcome)
    }

    /// Emits `exit` for a shell that ends before the adventure is finished.
    /// Finished sessions already sent theirs.
    pub fn leave(&mut self, sink: &mut dyn EventSink) {
        if !self.finished {
            let level = self.current_level.clone();
            let e = self.event(EventType::Exit, &level, "");
            sink.emit(&e);
        }
    }

    pub fn closing_text(&self) -> String {
        format!(
            "**Congratulations!** You have finished the `{}` adventure.\nType `exit` to leave the session.",
            self.spec.challenge_name()
        )
    }

    /// The current level text, without delays.
    pub fn print_again(&self, out: &mut dyn Write, ansi: bool) -> io::Result<()> {
        render_level(&self.current_level().body).write_to(out, ansi)?;
        writeln!(out)
    }

    /// Emits a `help` event and tells the learner it was sent.
    pub fn request_help(&mut self, sink: &mut dyn EventSink, out: &mut dyn Write) -> io::Result<()> {
        let level = self.current_level.clone();
        let e = self.event(EventType::Help, &level, "");
        sink.emit(&e);
        writeln!(out, "Help requested. An instructor has been notified and will be with you shortly.")
    }

    pub fn current_level_file(&self) -> PathBuf {
        self.config.home.join(CURRENT_LEVEL_FILE)
    }

    /// Atomically replaces `$HOME/ta_current_level.txt` with the level body.
    pub fn write_current_level_file(&self) -> io::Result<()> {
        let path = self.current_level_file();
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.current_level().body.as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// `[challenge:level]`, or `[challenge:level done]` once finished.
pub fn prompt_tag(challenge: &str, level: &str, finished: bool) -> String {
    if finished {
        format!("[{challenge}:{level} done]")
    } else {
        format!("[{challenge}:{level}]")
    }
}

/// Reads the tag written by [`prompt_tag`] back out of a prompt:
/// `(challenge, level, finished)`.
pub fn parse_prompt_tag(prompt: &str) -> Option<(String, String, bool)> {
    let start = prompt.find('[')?;
    let end = start + prompt[start..].find(']')?;
    let inner = &prompt[start + 1..end];
    let (challenge, rest) = inner.rsplit_once(':')?;
    let (level, finished) = match rest.strip_suffix(" done") {
        Some(l) => (l, true),
        None => (rest, false),
    };
    Some((challenge.to_string(), level.to_string(), finished))
}

/// Keeps bash from expanding anything inside the tag.
fn escape_ps1(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '$' => out.push_str("\\$"),
            '`' => out.push_str("\\`"),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::parse_challenge;
    use std::fs;
    use crate::engine::events::MemorySink;
    use std::cell::Cell;

    const SAMPLE: &str = include_str!("../../assets/sample_challenge.gta");

    /// Test double whose verdict is set by the test.
    struct Scripted<'a>(&'a Cell<bool>);

    impl TestRunner for Scripted<'_> {
        fn passes(&self, _test: &str) -> bool {
            self.0.get()
        }
    }

    fn config(home: &Path) -> SessionConfig {
        SessionConfig {
            home: home.to_path_buf(),
            identity: Identity {
                user: "u".into(),
                host: "h".into(),
                ip: "127.0.0.1".into(),
                lab_id: "lab".into(),
            },
            seed: 7,
            salts: SaltTriple::new(b"x", b"y", b"z").unwrap(),
        }
    }

    fn session(home: &Path) -> EngineSession {
        let spec = parse_challenge("sample", SAMPLE).unwrap();
        EngineSession::open(spec, config(home)).unwrap().0
    }

    #[test]
    fn shell_tests_by_exit_status() {
        assert!(evaluate_test("true"));
        assert!(!evaluate_test("false"));
        assert!(evaluate_test("test -d /tmp"));
        assert!(!evaluate_test("definitely-not-a-command-xyz"));
    }

    #[test]
    fn walk_sample_challenge() {
        let home = tempfile::tempdir().unwrap();
        let mut s = session(home.path());
        let mut sink = MemorySink::default();
        let verdict = Cell::new(false);
        let runner = Scripted(&verdict);

        let first = s.start(&mut sink).unwrap();
        assert!(first.plain_text().contains("/tmp"));
        assert_eq!(fs::read_to_string(s.current_level_file()).unwrap().trim_end(), s.current_level().body);

        let out = s.tick(Some("cd /temp"), &runner, &mut sink).unwrap();
        assert_eq!(out.action, TickAction::Stay);
        assert!(out.announcement.is_none());
        assert!(out.prompt.starts_with("[sample:lvl1] "));

        // A prompt without a new command is never judged, even when the
        // test would pass.
        verdict.set(true);
        assert_eq!(s.tick(None, &runner, &mut sink).unwrap().action, TickAction::Stay);
        verdict.set(false);
        s.tick(None, &runner, &mut sink).unwrap();

        verdict.set(true);
        let out = s.tick(Some("cd /tmp"), &runner, &mut sink).unwrap();
        assert_eq!(out.action, TickAction::Advance { to: "lvl2".into() });
        assert!(out.prompt.starts_with("[sample:lvl2] "));
        assert_eq!(fs::read_to_string(s.current_level_file()).unwrap().trim_end(), s.current_level().body);

        s.tick(Some("touch ~/treasure.txt"), &runner, &mut sink).unwrap();
        let out = s.tick(Some("cd ~"), &runner, &mut sink).unwrap();
        assert_eq!(out.action, TickAction::Finish);
        assert!(out.prompt.starts_with("[sample:lvl3 done] "));
        assert!(out.announcement.unwrap().plain_text().contains("Congratulations"));

        // Nothing happens after the end.
        let out = s.tick(Some("ls"), &runner, &mut sink).unwrap();
        assert_eq!(out.action, TickAction::Stay);
        s.leave(&mut sink);

        let kinds: Vec<_> = sink.events.iter().map(|e| (e.event_type, e.level_id.as_str())).collect();
        assert_eq!(
            kinds,
            vec![
                (EventType::Start, "lvl1"),
                (EventType::Command, "lvl1"),
                (EventType::Passed, "lvl1"),
                (EventType::Passed, "lvl2"),
                (EventType::Passed, "lvl3"),
                (EventType::Exit, "lvl3"),
            ]
        );
        assert_eq!(sink.events[1].command_text, "cd /temp");
        assert_eq!(sink.events[2].extra.get(EXTRA_NEXT_LEVEL).map(String::as_str), Some("lvl2"));
        assert!(!sink.events[4].extra.contains_key(EXTRA_NEXT_LEVEL));
        assert!(sink.events.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn restart_resumes_from_record() {
        let home = tempfile::tempdir().unwrap();
        let mut sink = MemorySink::default();
        let yes = Cell::new(true);
        {
            let mut s = session(home.path());
            s.start(&mut sink).unwrap();
            s.tick(Some("cd /tmp"), &Scripted(&yes), &mut sink).unwrap();
        }
        let s = session(home.path());
        assert_eq!(s.current_level().name, "lvl2");
        assert!(!s.is_finished());
    }

    #[test]
    fn finished_state_survives_restart() {
        let home = tempfile::tempdir().unwrap();
        let mut sink = MemorySink::default();
        let yes = Cell::new(true);
        let mut s = session(home.path());
        s.start(&mut sink).unwrap();
        for _ in 0..3 {
            s.tick(Some("x"), &Scripted(&yes), &mut sink).unwrap();
        }
        let again = session(home.path());
        assert!(again.is_finished());
        assert_eq!(again.current_level().name, "lvl3");
    }

    #[test]
    fn corrupted_record_restarts_with_warning() {
        let home = tempfile::tempdir().unwrap();
        let path = progress_path(home.path(), "sample");
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, "not a hash\n").unwrap();
        let spec = parse_challenge("sample", SAMPLE).unwrap();
        let (s, warning) = EngineSession::open(spec, config(home.path())).unwrap();
        assert!(warning.is_some());
        assert_eq!(s.current_level().name, "lvl1");
        // The record was repaired.
        let (_, warning) = EngineSession::open(s.spec().clone(), s.config().clone()).unwrap();
        assert!(warning.is_none());
    }

    #[test]
    fn help_and_print_again() {
        let home = tempfile::tempdir().unwrap();
        let mut s = session(home.path());
        let mut sink = MemorySink::default();
        let mut out = Vec::new();
        s.request_help(&mut sink, &mut out).unwrap();
        s.request_help(&mut sink, &mut out).unwrap();
        assert_eq!(sink.events.len(), 2);
        assert!(sink.events.iter().all(|e| e.event_type == EventType::Help && e.level_id == "lvl1"));
        assert!(String::from_utf8(out).unwrap().contains("Help requested"));

        let mut out = Vec::new();
        s.print_again(&mut out, false).unwrap();
        let expected = render_level(&s.current_level().body).plain_text();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{expected}\n"));
    }

    #[test]
    fn prompt_tags_roundtrip_and_escape() {
        assert_eq!(
            parse_prompt_tag("[ch:lvl2] \\u@\\h:\\w\\$ "),
            Some(("ch".into(), "lvl2".into(), false))
        );
        assert_eq!(parse_prompt_tag("x [a:b done] y"), Some(("a".into(), "b".into(), true)));
        assert_eq!(parse_prompt_tag("$ "), None);
        assert_eq!(escape_ps1("a$b`c\\"), "a\\$b\\`c\\\\");
    }
}
