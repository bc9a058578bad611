//! Subcommands for people writing and shipping challenges.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ta_core::challenge::{parse_challenge, validate_dag};
use ta_core::loader::{challenge_name_for, challenge_source, load_challenge, load_challenge_unchecked};
use ta_core::packager::{build_archive, verify_archive, ArchiveSummary, BundleManifest};
use ta_core::security::{encrypt_challenge, ChallengeKey};
use ta_core::tester::{
    parse_seeds, run_walkthrough, seed_sweep, ContainerSandbox, LocalSandbox, Sandbox, Verdict, WalkOptions,
    WalkthroughReport, WalkthroughSpec,
};

/// Expands, validates and writes a challenge, encrypted unless `plain`.
pub fn compile(input: &Path, vars: Option<&Path>, out: Option<PathBuf>, plain: bool) -> Result<PathBuf> {
    let spec = load_challenge(input, vars)?;
    // Directory challenges have no single source text, so re-serialize.
    let text = if input.is_dir() {
        spec.to_source()
    } else {
        challenge_source(input, vars, &ChallengeKey::embedded())?
    };
    parse_challenge(spec.challenge_name(), &text)?;
    let out = out.unwrap_or_else(|| {
        let ext = if plain { "gta" } else { "tac" };
        input.with_file_name(format!("{}.{ext}", challenge_name_for(input)))
    });
    if out == input {
        bail!("refusing to overwrite the input {}", input.display());
    }
    let bytes = if plain {
        text.into_bytes()
    } else {
        encrypt_challenge(text.as_bytes(), &ChallengeKey::embedded())
    };
    fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
    println!("{}: {} -> {}", spec.challenge_name(), spec, out.display());
    Ok(out)
}

/// Prints every finding; fails when there is at least one.
pub fn validate(input: &Path, vars: Option<&Path>) -> Result<()> {
    let spec = load_challenge_unchecked(input, vars)?;
    let findings = validate_dag(&spec);
    if findings.is_empty() {
        println!("{spec}: ok");
        return Ok(());
    }
    for f in &findings {
        println!("{}: {f}", spec.challenge_name());
    }
    bail!("{} problem(s) found", findings.len())
}

fn print_summary(s: &ArchiveSummary) {
    println!("challenge:  {}", s.challenge_name);
    println!("entrypoint: {}", s.entrypoint);
    println!("payload:    {} bytes, cksum {}", s.payload_len, s.checksum);
    for f in &s.files {
        println!("  {} {:>10}  {}", if f.executable { "x" } else { "-" }, f.size, f.path);
    }
}

pub fn bundle(manifest: &Path, out: &Path) -> Result<()> {
    let m = BundleManifest::load(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let summary = build_archive(&m, out)?;
    println!("wrote {}", out.display());
    print_summary(&summary);
    Ok(())
}

pub fn verify(archive: &Path) -> Result<()> {
    let summary = verify_archive(archive).with_context(|| format!("verifying {}", archive.display()))?;
    print_summary(&summary);
    Ok(())
}

fn describe(r: &WalkthroughReport) -> String {
    match &r.verdict {
        Verdict::Pass => format!("seed {}: pass via {}", r.seed, r.visited.join(" -> ")),
        Verdict::Fail { level, command, reason } => {
            let cmd = command.as_deref().map(|c| format!(" after `{c}`")).unwrap_or_default();
            format!("seed {}: FAIL at {level}{cmd}: {reason:?}", r.seed)
        }
    }
}

pub struct TestOptions {
    pub challenge: PathBuf,
    pub vars: Option<PathBuf>,
    pub walkthrough: PathBuf,
    pub seeds: Option<String>,
    pub sandbox: String,
    pub image: Option<String>,
    pub verbose: bool,
}

pub fn test(opts: TestOptions) -> Result<()> {
    let spec = load_challenge(&opts.challenge, opts.vars.as_deref())?;
    let text = fs::read_to_string(&opts.walkthrough).with_context(|| format!("reading {}", opts.walkthrough.display()))?;
    let walkthrough = WalkthroughSpec::from_yaml(&text).with_context(|| format!("parsing {}", opts.walkthrough.display()))?;
    let engine = std::env::current_exe()?;
    let sandbox: Box<dyn Sandbox> = match opts.sandbox.as_str() {
        "local" => Box::new(LocalSandbox),
        "container" => {
            let mut c = ContainerSandbox::default();
            if let Some(image) = opts.image {
                c.image = image;
            }
            Box::new(c)
        }
        other => bail!("unknown sandbox `{other}` (expected local or container)"),
    };

    let base = WalkOptions::with_seed(0);
    let runs = match &opts.seeds {
        None => {
            let seed = ta_core::engine::session_seed("walker", spec.challenge_name());
            vec![run_walkthrough(&spec, &walkthrough, sandbox.as_ref(), &engine, &WalkOptions::with_seed(seed))]
        }
        Some(list) => {
            let seeds = parse_seeds(list).map_err(anyhow::Error::msg)?;
            let sweep = seed_sweep(&spec, &walkthrough, sandbox.as_ref(), &engine, &base, &seeds);
            println!("levels visited: {}", sweep.visited.iter().cloned().collect::<Vec<_>>().join(", "));
            sweep.runs
        }
    };
    let mut failed = 0;
    for r in &runs {
        println!("{}", describe(r));
        if !r.passed() {
            failed += 1;
            if opts.verbose {
                println!("--- transcript ---\n{}--- end ---", r.transcript);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} walkthrough run(s) failed", runs.len());
    }
    Ok(())
}
