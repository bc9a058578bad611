//! Walkthrough testing: drive a scripted shell session through a challenge
//! and check that every scripted command moves the engine to another level.
//!
//! The harness talks to a plain non-interactive bash over pipes. After each
//! command it calls the same prompt hook the learner's shell uses and prints
//! the resulting prompt behind a sentinel, so advancement is read from what
//! a human would see.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::challenge::{validate_dag, ChallengeSpec};
use crate::engine::parse_prompt_tag;
use crate::security::{
    compute_progress_hash, finished_marker, resolve_level_from_hash, ProgressRecord, SaltTriple,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkthroughSpec {
    pub start_level: String,
    pub finish_level: String,
    /// Level name to the command that should solve it.
    pub tests: BTreeMap<String, String>,
}

impl WalkthroughSpec {
    pub fn from_yaml(text: &str) -> Result<Self, serde_yaml::Error> {
        serde_yaml::from_str(text)
    }

    /// Problems that make the walkthrough unusable with `spec`.
    pub fn check(&self, spec: &ChallengeSpec) -> Vec<String> {
        let mut problems = Vec::new();
        for (what, level) in [("start_level", &self.start_level), ("finish_level", &self.finish_level)] {
            if !spec.contains(level) {
                problems.push(format!("{what} `{level}` is not a level of `{}`", spec.challenge_name()));
            }
        }
        for level in self.tests.keys() {
            if !spec.contains(level) {
                problems.push(format!("tests names unknown level `{level}`"));
            }
        }
        problems
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What the harness needs inside a sandbox.
#[derive(Debug, Clone)]
pub struct SessionFiles {
    /// Engine binary on the host.
    pub engine: PathBuf,
    pub challenge_name: String,
    /// Plain challenge text; written as `<challenge_name>.gta`.
    pub challenge_source: String,
}

/// A running sandboxed bash reading commands from its stdin. Paths are as
/// seen from inside the sandbox.
pub struct SandboxShell {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    pub engine: String,
    pub challenge: String,
    pub home: String,
    _scratch: Option<tempfile::TempDir>,
}

impl SandboxShell {
    fn new(
        mut child: Child,
        engine: String,
        challenge: String,
        home: String,
        scratch: Option<tempfile::TempDir>,
    ) -> Self {
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            engine,
            challenge,
            home,
            _scratch: scratch,
        }
    }

    fn send(&mut self, script: &str) -> io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or_else(|| io::Error::other("shell stdin closed"))?;
        stdin.write_all(script.as_bytes())?;
        stdin.flush()
    }
}

impl Drop for SandboxShell {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub trait Sandbox: Sync {
    fn name(&self) -> &str;
    /// Starts a fresh shell with a clean home directory and the engine
    /// and challenge available.
    fn launch(&self, files: &SessionFiles) -> Result<SandboxShell, SandboxError>;
}

/// Runs bash on the host with `HOME` pointing at a fresh temporary directory.
#[derive(Debug, Clone, Default)]
pub struct LocalSandbox;

impl Sandbox for LocalSandbox {
    fn name(&self) -> &str {
        "local"
    }

    fn launch(&self, files: &SessionFiles) -> Result<SandboxShell, SandboxError> {
        let scratch = tempfile::tempdir()?;
        let home = scratch.path().join("home");
        fs::create_dir(&home)?;
        let challenge = scratch.path().join(format!("{}.gta", files.challenge_name));
        fs::write(&challenge, &files.challenge_source)?;
        let engine = fs::canonicalize(&files.engine)
            .map_err(|e| SandboxError::Unavailable(format!("engine {}: {e}", files.engine.display())))?;

        let child = Command::new("bash")
            .args(["--noprofile", "--norc"])
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/bin:/bin".into()))
            .env("HOME", &home)
            .env("USER", "walker")
            .env("LANG", "C")
            .env("TERM", "dumb")
            .current_dir(&home)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SandboxError::Unavailable(format!("bash: {e}")))?;
        Ok(SandboxShell::new(
            child,
            engine.to_string_lossy().into_owned(),
            challenge.to_string_lossy().into_owned(),
            home.to_string_lossy().into_owned(),
            Some(scratch),
        ))
    }
}

/// Runs bash inside a throwaway container (`docker run --rm -i`). The engine
/// binary and the challenge are bind-mounted read-only, so the engine must be
/// built for the container's platform.
#[derive(Debug, Clone)]
pub struct ContainerSandbox {
    pub runtime: String,
    pub image: String,
}

impl Default for ContainerSandbox {
    fn default() -> Self {
        Self {
            runtime: "docker".into(),
            image: "ubuntu:22.04".into(),
        }
    }
}

impl Sandbox for ContainerSandbox {
    fn name(&self) -> &str {
        "container"
    }

    fn launch(&self, files: &SessionFiles) -> Result<SandboxShell, SandboxError> {
        let scratch = tempfile::tempdir()?;
        let file_name = format!("{}.gta", files.challenge_name);
        fs::write(scratch.path().join(&file_name), &files.challenge_source)?;
        let engine = fs::canonicalize(&files.engine)
            .map_err(|e| SandboxError::Unavailable(format!("engine {}: {e}", files.engine.display())))?;
        let home = "/home/walker";
        let child = Command::new(&self.runtime)
            .args(["run", "--rm", "-i", "--network", "host"])
            .arg("-v")
            .arg(format!("{}:/opt/ta/ta:ro", engine.display()))
            .arg("-v")
            .arg(format!("{}:/opt/ta/challenge:ro", scratch.path().display()))
            .args(["-e", &format!("HOME={home}"), "-e", "USER=walker", "-w", "/"])
            .arg(&self.image)
            .args(["bash", "--noprofile", "--norc", "-c", &format!("mkdir -p {home} && cd {home} && exec bash --noprofile --norc")])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SandboxError::Unavailable(format!("{}: {e}", self.runtime)))?;
        Ok(SandboxShell::new(
            child,
            "/opt/ta/ta".into(),
            format!("/opt/ta/challenge/{file_name}"),
            home.into(),
            Some(scratch),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct WalkOptions {
    pub seed: u64,
    pub step_timeout: Duration,
    /// Extra variables exported into the session, e.g. `TA_MONITOR_URL`.
    pub env: Vec<(String, String)>,
    /// Salts the engine was built with; used to check progress records.
    pub salts: SaltTriple,
}

impl WalkOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            step_timeout: Duration::from_secs(30),
            env: Vec::new(),
            salts: SaltTriple::embedded(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailReason {
    InvalidChallenge(Vec<String>),
    InvalidWalkthrough(Vec<String>),
    Sandbox(String),
    /// The session did not open at `start_level`.
    WrongStart { found: String },
    /// Random branching led to a level the walkthrough has no command for.
    UncoveredLevel,
    /// The command ran but the engine stayed on the level.
    NoAdvance,
    /// The adventure ended on a leaf other than `finish_level`.
    FinishedElsewhere,
    /// The stored progress record does not resolve to the prompt's level.
    ProgressMismatch { record: Option<String> },
    /// The shell died or stopped answering.
    ShellLost(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail {
        level: String,
        command: Option<String>,
        reason: FailReason,
    },
}

#[derive(Debug, Clone)]
pub struct WalkthroughReport {
    pub seed: u64,
    pub verdict: Verdict,
    /// Levels shown in the prompt, in order.
    pub visited: Vec<String>,
    pub transcript: String,
    pub elapsed: Duration,
}

impl WalkthroughReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

struct Step {
    level: String,
    finished: bool,
    record: Option<String>,
}

struct Driver {
    shell: SandboxShell,
    sentinel: String,
    timeout: Duration,
    transcript: String,
    challenge_name: String,
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl Driver {
    fn report_script(&self) -> String {
        let progress = format!("\"$HOME/.ta/progress/\"{}", quote(&self.challenge_name));
        format!(
            "printf '\\n%s %s\\n' {s}PROMPT \"$PS1\"; printf '%s %s\\n' {s}PROGRESS \"$(cat {progress} 2>/dev/null)\"\n",
            s = quote(&self.sentinel)
        )
    }

    /// Reads output until the prompt and progress report lines arrive.
    fn collect(&mut self) -> Result<Step, String> {
        let deadline = Instant::now() + self.timeout;
        let prompt_key = format!("{}PROMPT ", self.sentinel);
        let progress_key = format!("{}PROGRESS", self.sentinel);
        let mut prompt = None;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.shell.lines.recv_timeout(left) {
                Ok(line) => line,
                Err(RecvTimeoutError::Timeout) => return Err("no answer before the step timeout".into()),
                Err(RecvTimeoutError::Disconnected) => return Err("shell exited".into()),
            };
            if let Some(p) = line.strip_prefix(&prompt_key) {
                prompt = Some(p.to_string());
            } else if let Some(r) = line.strip_prefix(&progress_key) {
                let prompt = prompt.take().ok_or("progress before prompt")?;
                let (_, level, finished) =
                    parse_prompt_tag(&prompt).ok_or_else(|| format!("prompt without level tag: {prompt}"))?;
                self.transcript.push_str(&format!("{prompt}\n"));
                let record = r.trim();
                return Ok(Step {
                    level,
                    finished,
                    record: (!record.is_empty()).then(|| record.to_string()),
                });
            } else {
                self.transcript.push_str(&line);
                self.transcript.push('\n');
            }
        }
    }

    fn run(&mut self, script: &str) -> Result<Step, String> {
        self.shell.send(script).map_err(|e| e.to_string())?;
        self.collect()
    }
}

fn check_record(
    record: &Option<String>,
    step: &Step,
    spec: &ChallengeSpec,
    salts: &SaltTriple,
    home: &str,
) -> Result<(), FailReason> {
    let mismatch = || FailReason::ProgressMismatch { record: record.clone() };
    let text = record.as_deref().ok_or_else(mismatch)?;
    let parsed = ProgressRecord::parse(text, "").map_err(|_| mismatch())?;
    if step.finished {
        let want = compute_progress_hash(salts, spec.challenge_name(), &finished_marker(&step.level), home);
        return if parsed.digest() == want { Ok(()) } else { Err(mismatch()) };
    }
    match resolve_level_from_hash(&parsed, spec, salts, home) {
        Ok(Some(level)) if level == step.level => Ok(()),
        _ => Err(mismatch()),
    }
}

/// Plays `walkthrough` against `spec` inside `sandbox` with the given seed.
pub fn run_walkthrough(
    spec: &ChallengeSpec,
    walkthrough: &WalkthroughSpec,
    sandbox: &dyn Sandbox,
    engine: &Path,
    options: &WalkOptions,
) -> WalkthroughReport {
    let started = Instant::now();
    let mut visited = Vec::new();
    let (verdict, transcript) = walk(spec, walkthrough, sandbox, engine, options, &mut visited);
    WalkthroughReport {
        seed: options.seed,
        verdict,
        visited,
        transcript,
        elapsed: started.elapsed(),
    }
}

fn walk(
    spec: &ChallengeSpec,
    walkthrough: &WalkthroughSpec,
    sandbox: &dyn Sandbox,
    engine: &Path,
    options: &WalkOptions,
    visited: &mut Vec<String>,
) -> (Verdict, String) {
    let entry = spec.entry_level().name.clone();
    let fail = |level: &str, command: Option<&str>, reason| Verdict::Fail {
        level: level.to_string(),
        command: command.map(str::to_string),
        reason,
    };

    let findings: Vec<String> = validate_dag(spec).iter().map(|f| f.to_string()).collect();
    if !findings.is_empty() {
        return (fail(&entry, None, FailReason::InvalidChallenge(findings)), String::new());
    }
    let problems = walkthrough.check(spec);
    if !problems.is_empty() {
        return (fail(&entry, None, FailReason::InvalidWalkthrough(problems)), String::new());
    }

    let files = SessionFiles {
        engine: engine.to_path_buf(),
        challenge_name: spec.challenge_name().to_string(),
        challenge_source: spec.to_source(),
    };
    let shell = match sandbox.launch(&files) {
        Ok(s) => s,
        Err(e) => return (fail(&entry, None, FailReason::Sandbox(e.to_string())), String::new()),
    };
    let home = shell.home.clone();
    let mut driver = Driver {
        sentinel: format!("__TA_WALK_{}__", uuid::Uuid::new_v4().simple()),
        timeout: options.step_timeout,
        transcript: String::new(),
        challenge_name: spec.challenge_name().to_string(),
        shell,
    };

    let mut setup = String::from("exec 2>&1\n");
    let mut env: Vec<(String, String)> = vec![
        ("TA_BIN".into(), driver.shell.engine.clone()),
        ("TA_CHALLENGE".into(), driver.shell.challenge.clone()),
        ("TA_SEED".into(), options.seed.to_string()),
        ("TA_NO_TYPEWRITER".into(), "1".into()),
        ("TA_NO_USER_RC".into(), "1".into()),
        ("TA_LAB_ID".into(), "walkthrough".into()),
    ];
    env.extend(options.env.iter().cloned());
    for (k, v) in &env {
        setup.push_str(&format!("export {k}={}\n", quote(v)));
    }
    setup.push_str("cd \"$HOME\"\n. /dev/stdin <<'__TA_RC__'\n");
    setup.push_str(crate::engine::SHELL_RC);
    setup.push_str("__TA_RC__\n\"$TA_BIN\" start\n__ta_prompt_hook\n");
    setup.push_str(&driver.report_script());

    let mut step = match driver.run(&setup) {
        Ok(s) => s,
        Err(e) => return (fail(&entry, None, FailReason::ShellLost(e)), driver.transcript),
    };
    visited.push(step.level.clone());
    if step.level != walkthrough.start_level {
        return (
            fail(&step.level, None, FailReason::WrongStart { found: step.level.clone() }),
            driver.transcript,
        );
    }
    if let Err(reason) = check_record(&step.record, &step, spec, &options.salts, &home) {
        return (fail(&step.level, None, reason), driver.transcript);
    }

    // A DAG walk takes at most one step per level.
    for _ in 0..=spec.levels().len() {
        if step.finished {
            let verdict = if step.level == walkthrough.finish_level {
                Verdict::Pass
            } else {
                fail(&step.level, None, FailReason::FinishedElsewhere)
            };
            return (verdict, driver.transcript);
        }
        if step.level == walkthrough.finish_level && !walkthrough.tests.contains_key(&step.level) {
            return (Verdict::Pass, driver.transcript);
        }
        let Some(command) = walkthrough.tests.get(&step.level).cloned() else {
            return (fail(&step.level, None, FailReason::UncoveredLevel), driver.transcript);
        };
        driver.transcript.push_str(&format!("$ {command}\n"));
        let script = format!(
            "eval {q} </dev/null\nTA_LAST_COMMAND={q}\n__ta_prompt_hook\n{report}",
            q = quote(&command),
            report = driver.report_script()
        );
        let next = match driver.run(&script) {
            Ok(s) => s,
            Err(e) => return (fail(&step.level, Some(&command), FailReason::ShellLost(e)), driver.transcript),
        };
        if next.level == step.level && !next.finished {
            return (fail(&step.level, Some(&command), FailReason::NoAdvance), driver.transcript);
        }
        if let Err(reason) = check_record(&next.record, &next, spec, &options.salts, &home) {
            return (fail(&next.level, Some(&command), reason), driver.transcript);
        }
        if next.level != step.level {
            visited.push(next.level.clone());
        }
        step = next;
    }
    (
        fail(&step.level, None, FailReason::ShellLost("walk did not terminate".into())),
        driver.transcript,
    )
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<WalkthroughReport>,
    /// Every level shown in any run.
    pub visited: BTreeSet<String>,
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.runs.iter().all(WalkthroughReport::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &WalkthroughReport> {
        self.runs.iter().filter(|r| !r.passed())
    }
}

/// Runs the walkthrough once per seed, a few sandboxes at a time.
pub fn seed_sweep(
    spec: &ChallengeSpec,
    walkthrough: &WalkthroughSpec,
    sandbox: &dyn Sandbox,
    engine: &Path,
    base: &WalkOptions,
    seeds: &[u64],
) -> SweepReport {
    let workers = thread::available_parallelism().map_or(2, |n| n.get()).min(8);
    let mut runs = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(workers) {
        let batch: Vec<WalkthroughReport> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let mut options = base.clone();
                    options.seed = seed;
                    scope.spawn(move || run_walkthrough(spec, walkthrough, sandbox, engine, &options))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("walkthrough thread panicked")).collect()
        });
        runs.extend(batch);
    }
    let visited = runs.iter().flat_map(|r| r.visited.iter().cloned()).collect();
    SweepReport { runs, visited }
}

/// Parses `1..50`, `1..=50`, `3` or `1,2,7` into a list of seeds.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed list `{text}`");
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            // Both ends are included: `1..50` reads as "seeds 1 to 50".
            let b = b.strip_prefix('=').unwrap_or(b);
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(format!("empty seed list `{text}`"));
    }
    Ok(out)
}
