//! Subcommands that run inside the learner's shell.

use std::env;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{anyhow, Context, Result};
use ta_core::engine::{
    flush_queue, session_seed, typewriter_print, EngineSession, EventSink, FlushPolicy, Identity, NeverSkip,
    NullSink, RenderedText, SessionConfig, ShellTestRunner, SkipSignal, SpoolSink, TerminalSkip, SHELL_RC,
};
use ta_core::loader::load_challenge;
use ta_core::security::SaltTriple;

pub const DEFAULT_LAB: &str = "default";

/// Session settings passed from `ta run` to the hook subcommands.
pub struct SessionEnv {
    pub challenge: PathBuf,
    pub home: PathBuf,
    pub bin: PathBuf,
    pub monitor_url: Option<String>,
    pub lab_id: String,
    pub seed: Option<u64>,
    pub typewriter: bool,
}

fn var(name: &str) -> Option<String> {
    env::var(name).ok().filter(|v| !v.is_empty())
}

fn home() -> Result<PathBuf> {
    var("HOME").map(PathBuf::from).ok_or_else(|| anyhow!("HOME is not set"))
}

impl SessionEnv {
    pub fn from_env() -> Result<Self> {
        let challenge = var("TA_CHALLENGE")
            .map(PathBuf::from)
            .ok_or_else(|| anyhow!("TA_CHALLENGE is not set; start a session with `ta run`"))?;
        let seed = match var("TA_SEED") {
            Some(s) => Some(s.parse().with_context(|| format!("TA_SEED `{s}` is not a number"))?),
            None => None,
        };
        Ok(Self {
            challenge,
            home: home()?,
            bin: var("TA_BIN").map(PathBuf::from).unwrap_or(env::current_exe()?),
            monitor_url: var("TA_MONITOR_URL"),
            lab_id: var("TA_LAB_ID").unwrap_or_else(|| DEFAULT_LAB.into()),
            seed,
            typewriter: var("TA_NO_TYPEWRITER").is_none(),
        })
    }

    pub fn open(&self) -> Result<(EngineSession, Option<String>)> {
        let spec = load_challenge(&self.challenge, None)?;
        let identity = Identity::detect(&self.lab_id, self.monitor_url.as_deref());
        let seed = self.seed.unwrap_or_else(|| session_seed(&identity.user, spec.challenge_name()));
        let config = SessionConfig {
            home: self.home.clone(),
            identity,
            seed,
            salts: SaltTriple::embedded(),
        };
        Ok(EngineSession::open(spec, config)?)
    }

    pub fn sink(&self) -> Box<dyn EventSink> {
        match &self.monitor_url {
            Some(url) => Box::new(SpoolSink::new(&self.home, Some((self.bin.clone(), url.clone())))),
            None => Box::new(NullSink),
        }
    }
}

/// Prints level text, with the typewriter effect when writing to a terminal.
fn show(text: &RenderedText, out: &mut dyn Write, interactive: bool, typewriter: bool) -> Result<()> {
    writeln!(out)?;
    let mut skip: Box<dyn SkipSignal> = match (interactive && typewriter).then(TerminalSkip::open) {
        Some(Ok(tty)) => Box::new(tty),
        _ => Box::new(NeverSkip),
    };
    typewriter_print(text, out, skip.as_mut(), interactive && typewriter, interactive)?;
    writeln!(out)?;
    writeln!(out)?;
    Ok(())
}

fn warn(warning: Option<String>) {
    if let Some(w) = warning {
        eprintln!("ta: warning: {w}");
    }
}

pub fn start(env: &SessionEnv) -> Result<EngineSession> {
    let (mut session, warning) = env.open()?;
    warn(warning);
    let text = session.start(env.sink().as_mut())?;
    let stdout = io::stdout();
    show(&text, &mut stdout.lock(), stdout.is_terminal(), env.typewriter)?;
    Ok(session)
}

pub fn tick(command: Option<&str>) -> Result<()> {
    let env = SessionEnv::from_env()?;
    let (mut session, warning) = env.open()?;
    warn(warning);
    let outcome = session.tick(command, &ShellTestRunner::default(), env.sink().as_mut())?;
    if let Some(text) = &outcome.announcement {
        let stderr = io::stderr();
        show(text, &mut stderr.lock(), stderr.is_terminal(), env.typewriter)?;
    }
    print!("{}", outcome.prompt);
    io::stdout().flush()?;
    Ok(())
}

/// Prompt shown when the engine itself fails, so the shell stays usable.
pub fn fallback_prompt() -> &'static str {
    "[ta error] \\u@\\h:\\w\\$ "
}

pub fn print_again() -> Result<()> {
    let env = SessionEnv::from_env()?;
    let (session, _) = env.open()?;
    let stdout = io::stdout();
    let ansi = stdout.is_terminal();
    session.print_again(&mut stdout.lock(), ansi)?;
    Ok(())
}

pub fn help_request() -> Result<()> {
    let env = SessionEnv::from_env()?;
    let (mut session, _) = env.open()?;
    session.request_help(env.sink().as_mut(), &mut io::stdout())?;
    Ok(())
}

pub fn flush(monitor_url: Option<String>) -> Result<()> {
    let url = monitor_url
        .or_else(|| var("TA_MONITOR_URL"))
        .ok_or_else(|| anyhow!("no monitor URL given"))?;
    flush_queue(&home()?, &url, &FlushPolicy::default())?;
    Ok(())
}

pub struct RunOptions {
    pub challenge: PathBuf,
    pub monitor_url: Option<String>,
    pub no_typewriter: bool,
    pub lab_id: Option<String>,
    pub seed: Option<u64>,
    pub rcfile: Option<PathBuf>,
    pub shell: String,
}

/// Opens a session and hands the terminal to an instrumented bash.
pub fn run(opts: RunOptions) -> Result<i32> {
    let challenge = std::path::absolute(&opts.challenge)?;
    let bin = env::current_exe()?;
    let env = SessionEnv {
        challenge: challenge.clone(),
        home: home()?,
        bin: bin.clone(),
        monitor_url: opts.monitor_url.clone(),
        lab_id: opts.lab_id.clone().unwrap_or_else(|| DEFAULT_LAB.into()),
        seed: opts.seed,
        typewriter: !opts.no_typewriter,
    };
    let mut session = start(&env)?;
    let rcfile = match &opts.rcfile {
        Some(p) => std::path::absolute(p)?,
        None => write_rc(&env.home)?,
    };

    let mut cmd = Command::new(&opts.shell);
    cmd.arg("--rcfile").arg(&rcfile).arg("-i");
    cmd.env("TA_CHALLENGE", &challenge).env("TA_BIN", &bin).env("TA_LAB_ID", &env.lab_id);
    set_or_clear(&mut cmd, "TA_MONITOR_URL", opts.monitor_url.as_deref());
    set_or_clear(&mut cmd, "TA_SEED", opts.seed.map(|s| s.to_string()).as_deref());
    set_or_clear(&mut cmd, "TA_NO_TYPEWRITER", opts.no_typewriter.then_some("1"));
    let status = cmd.status().with_context(|| format!("cannot start {}", opts.shell))?;

    // The hooks moved the session on; reload it before reporting the exit.
    if let Ok((reloaded, _)) = env.open() {
        session = reloaded;
    }
    session.leave(env.sink().as_mut());
    Ok(status.code().unwrap_or(1))
}

fn set_or_clear(cmd: &mut Command, key: &str, value: Option<&str>) {
    match value {
        Some(v) => cmd.env(key, v),
        None => cmd.env_remove(key),
    };
}

fn write_rc(home: &Path) -> Result<PathBuf> {
    let dir = home.join(".ta");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bashrc");
    std::fs::write(&path, SHELL_RC)?;
    Ok(path)
}
