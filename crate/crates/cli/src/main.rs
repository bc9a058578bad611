use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod author;
mod session;

#[derive(Parser)]
#[command(name = "ta", version, about = "Terminal adventures: interactive command-line exercises")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play a challenge in an instrumented bash session
    Run {
        /// Encrypted (.tac) or plain challenge file
        challenge: PathBuf,
        #[arg(long)]
        monitor_url: Option<String>,
        #[arg(long)]
        no_typewriter: bool,
        #[arg(long)]
        lab_id: Option<String>,
        /// Fixed branching seed (for testing)
        #[arg(long)]
        seed: Option<u64>,
        /// Shell configuration to use instead of the built-in one
        #[arg(long)]
        rcfile: Option<PathBuf>,
        #[arg(long, default_value = "bash")]
        shell: String,
    },
    /// Begin or resume the session named by TA_CHALLENGE and print the level
    Start,
    /// Evaluate the current level and print the prompt (run from the prompt hook)
    Tick {
        /// The command the learner just ran; omit when nothing new was run
        #[arg(long, allow_hyphen_values = true)]
        command: Option<String>,
    },
    /// Print the current level text again
    PrintAgain,
    /// Ask an instructor for help
    HelpRequest,
    /// Deliver queued events to the monitor
    FlushEvents {
        #[arg(long)]
        monitor_url: Option<String>,
    },
    /// Print the shell configuration used by `ta run`
    Shellrc,
    /// Expand, validate and encrypt a challenge
    Compile {
        /// Challenge file, template or directory of level files
        input: PathBuf,
        /// Variables file; treats the input as a template
        #[arg(long)]
        vars: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write plain text instead of an encrypted container
        #[arg(long)]
        plain: bool,
    },
    /// Check a challenge and list every problem found
    Validate {
        input: PathBuf,
        #[arg(long)]
        vars: Option<PathBuf>,
    },
    /// Build a self-extracting bundle, or verify one
    Bundle {
        #[arg(long, required_unless_present = "verify", requires = "out")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, conflicts_with = "manifest")]
        verify: Option<PathBuf>,
    },
    /// Prove a challenge can be completed by replaying a walkthrough
    Test {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long)]
        vars: Option<PathBuf>,
        #[arg(long)]
        walkthrough: PathBuf,
        /// Seeds to sweep, e.g. `1..50` or `3,7`
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "local")]
        sandbox: String,
        /// Container image for `--sandbox container`
        #[arg(long)]
        image: Option<String>,
        /// Print transcripts of failed runs
        #[arg(short, long)]
        verbose: bool,
    },
    /// Serve the classroom monitor API
    Monitor {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: std::net::SocketAddr,
        /// Where lab event logs are kept
        #[arg(long, default_value = "ta-monitor-data")]
        data_dir: PathBuf,
        /// Bearer token for instructor endpoints
        #[arg(long, env = "TA_MONITOR_TOKEN")]
        token: Option<String>,
        /// Minutes without activity before a student counts as stuck
        #[arg(long, default_value_t = 10)]
        idle_minutes: i64,
        /// Failed attempts on one level before a student counts as stuck
        #[arg(long, default_value_t = 10)]
        attempts: u32,
    },
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Run {
            challenge,
            monitor_url,
            no_typewriter,
            lab_id,
            seed,
            rcfile,
            shell,
        } => session::run(session::RunOptions {
            challenge,
            monitor_url,
            no_typewriter,
            lab_id,
            seed,
            rcfile,
            shell,
        }),
        Cmd::Start => session::start(&session::SessionEnv::from_env()?).map(|_| 0),
        Cmd::Tick { command } => {
            if let Err(e) = session::tick(command.as_deref()) {
                eprintln!("ta: {e:#}");
                print!("{}", session::fallback_prompt());
                return Ok(1);
            }
            Ok(0)
        }
        Cmd::PrintAgain => session::print_again().map(|_| 0),
        Cmd::HelpRequest => session::help_request().map(|_| 0),
        Cmd::FlushEvents { monitor_url } => session::flush(monitor_url).map(|_| 0),
        Cmd::Shellrc => {
            print!("{}", ta_core::engine::SHELL_RC);
            Ok(0)
        }
        Cmd::Compile { input, vars, out, plain } => author::compile(&input, vars.as_deref(), out, plain).map(|_| 0),
        Cmd::Validate { input, vars } => author::validate(&input, vars.as_deref()).map(|_| 0),
        Cmd::Bundle { manifest, out, verify } => match (manifest, out, verify) {
            (_, _, Some(archive)) => author::verify(&archive).map(|_| 0),
            (Some(manifest), Some(out), None) => author::bundle(&manifest, &out).map(|_| 0),
            _ => anyhow::bail!("give --manifest and --out, or --verify"),
        },
        Cmd::Test {
            challenge,
            vars,
            walkthrough,
            seeds,
            sandbox,
            image,
            verbose,
        } => author::test(author::TestOptions {
            challenge,
            vars,
            walkthrough,
            seeds,
            sandbox,
            image,
            verbose,
        })
        .map(|_| 0),
        Cmd::Monitor {
            listen,
            data_dir,
            token,
            idle_minutes,
            attempts,
        } => {
            if token.is_none() {
                eprintln!("warning: no --token given; instructor endpoints are open to anyone who can reach {listen}");
            }
            ta_monitor::run(ta_monitor::MonitorConfig {
                listen,
                data_dir,
                token,
                thresholds: ta_monitor::Thresholds {
                    idle: chrono::Duration::minutes(idle_minutes),
                    attempts,
                },
            })
            .map(|_| 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code.clamp(0, 255) as u8),
        Err(e) => {
            eprintln!("ta: {e:#}");
            ExitCode::from(1)
        }
    }
}
