//! One check per headline requirement. Each prints a PASS or FAIL line with
//! the measured numbers; the test fails if any check fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ta_core::analytics::{
    conditional_affinities, cosine_distance, DEFAULT_RESTARTS, jaccard_distance, kmeans_restarts, tsne_project, vectorize, Distance,
    TsneParams,
};
use ta_core::challenge::{expand_template, generate_levels, parse_challenge, validate_dag, Level, TemplateVariables};
use ta_core::engine::{level_rng, render_level, select_next_level, typewriter_print, NeverSkip};
use ta_core::event::{Event, EventType};
use ta_core::loader::load_challenge;
use ta_core::packager::{build_archive, extract_archive, verify_archive, BundleEntry, BundleManifest};
use ta_core::security::{
    compute_progress_hash, decrypt_challenge, encrypt_challenge, load_progress, progress_path, resolve_level_from_hash,
    save_progress, ChallengeKey, ProgressRecord, SaltTriple,
};
use ta_core::tester::{run_walkthrough, LocalSandbox, Verdict, WalkOptions, WalkthroughSpec};
use ta_monitor::state::{grade_export, parse_scheme};
use ta_monitor::Monitor;
use ta_oracles::{brute_force_objective, partition_objective, reference_md5, replay_students, set_jaccard, ReplayEvent};

type Outcome = Result<String, String>;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets")
}

fn engine() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_ta"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn parse_and_walk() -> Outcome {
    let started = Instant::now();
    let path = assets().join("sample_challenge.gta");
    let spec = load_challenge(&path, None).map_err(|e| e.to_string())?;
    ensure(spec.levels().len() == 3, || format!("{} levels", spec.levels().len()))?;
    ensure(validate_dag(&spec).is_empty(), || "sample challenge has DAG findings".into())?;
    ensure(spec.entry_level().test.contains("/tmp"), || "first test is not about /tmp".into())?;
    let walkthrough = WalkthroughSpec::from_yaml(&fs::read_to_string(assets().join("sample_walkthrough.yaml")).unwrap())
        .map_err(|e| e.to_string())?;
    let good = run_walkthrough(&spec, &walkthrough, &LocalSandbox, &engine(), &WalkOptions::with_seed(1));
    ensure(good.passed(), || format!("walkthrough failed: {:?}", good.verdict))?;

    let mutated_text = fs::read_to_string(&path).unwrap().replacen("\"/tmp\"", "\"/temp\"", 1);
    let mutated = parse_challenge(spec.challenge_name(), &mutated_text).map_err(|e| e.to_string())?;
    let bad = run_walkthrough(&mutated, &walkthrough, &LocalSandbox, &engine(), &WalkOptions::with_seed(1));
    let failed_at = match &bad.verdict {
        Verdict::Fail { level, reason, .. } => format!("{level} ({reason:?})"),
        Verdict::Pass => return Err("mutated challenge still passes".into()),
    };
    ensure(failed_at.starts_with("lvl1 "), || format!("mutation failed at {failed_at}, expected lvl1"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "walk reached lvl3 in {:?}; /temp mutation fails at {failed_at}; total {elapsed:?} < 10 s",
        good.elapsed
    ))
}

fn templating() -> Outcome {
    let tpl = fs::read_to_string(assets().join("sample_challenge_template.tpl")).unwrap();
    let vars = TemplateVariables::from_yaml(&fs::read_to_string(assets().join("template_variables.yaml")).unwrap())
        .map_err(|e| e.to_string())?;
    let expanded = expand_template(&tpl, &vars).map_err(|e| e.to_string())?;
    let spec = parse_challenge("template", &expanded).map_err(|e| e.to_string())?;
    let variants: Vec<&str> = spec.levels().iter().map(|l| l.name.as_str()).filter(|n| n.starts_with("lvl2")).collect();
    ensure(variants == ["lvl21", "lvl22", "lvl23"], || format!("lvl2 variants {variants:?}"))?;
    let generated = generate_levels(&["/var", "/usr", "/etc"], "lvl2{i}").map_err(|e| e.to_string())?;
    ensure(generated == ["lvl21", "lvl22", "lvl23"], || format!("generate_levels gave {generated:?}"))?;
    ensure(expanded.contains("next: ['lvl21', 'lvl22', 'lvl23']"), || "rendered list differs".into())?;
    ensure(spec.entry_level().next == ["lvl21", "lvl22", "lvl23"], || "entry successors differ".into())?;
    Ok("three lvl2 variants; generate_levels -> ['lvl21', 'lvl22', 'lvl23']".into())
}

fn typewriter_timing() -> Outcome {
    // Five 20-character sentences: 100 characters, 5 sentence ends.
    let body = format!("{:<19}.", "Look around you").repeat(5);
    let rendered = render_level(&body);
    let plain = rendered.plain_text();
    let ends = plain.chars().filter(|c| matches!(c, '.' | '!' | '?')).count();
    ensure(plain.chars().count() == 100 && ends == 5, || format!("{} chars, {ends} ends", plain.len()))?;
    let expected = 50 * 95 + 500 * 5;
    ensure(rendered.total_delay_ms() == expected, || format!("planned {} ms", rendered.total_delay_ms()))?;

    let mut sink = Vec::new();
    let t = Instant::now();
    typewriter_print(&rendered, &mut sink, &mut NeverSkip, true, false).unwrap();
    let paced = t.elapsed().as_secs_f64() * 1000.0;
    ensure((paced - expected as f64).abs() <= expected as f64 * 0.10, || format!("paced {paced:.0} ms"))?;
    ensure(String::from_utf8(sink).unwrap() == plain, || "paced output differs".into())?;

    let mut sink = Vec::new();
    let mut pressed = false;
    let t = Instant::now();
    let mut skip = || {
        let was = pressed;
        pressed = true;
        was
    };
    typewriter_print(&rendered, &mut sink, &mut skip, true, false).unwrap();
    let skipped = t.elapsed();
    let t = Instant::now();
    typewriter_print(&rendered, &mut Vec::new(), &mut NeverSkip, false, false).unwrap();
    let off = t.elapsed();
    ensure(skipped < Duration::from_millis(100), || format!("skip took {skipped:?}"))?;
    ensure(off < Duration::from_millis(100), || format!("no-typewriter took {off:?}"))?;
    ensure(String::from_utf8(sink).unwrap() == plain, || "skipped output differs".into())?;
    Ok(format!("{paced:.0} ms vs {expected} ms (±10%); skip {skipped:?}; no-typewriter {off:?}"))
}

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let len = rng.gen_range(1..=max);
    (0..len).map(|_| rng.gen_range(' '..='~')).collect()
}

fn progress_hash() -> Outcome {
    let started = Instant::now();
    let salts = SaltTriple::embedded();
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    let home_str = home.to_str().unwrap();
    let tpl = fs::read_to_string(assets().join("sample_challenge_template.tpl")).unwrap();
    let vars = TemplateVariables::from_yaml(&fs::read_to_string(assets().join("template_variables.yaml")).unwrap()).unwrap();
    let challenges = [
        load_challenge(&assets().join("sample_challenge.gta"), None).unwrap(),
        parse_challenge("template", &expand_template(&tpl, &vars).unwrap()).unwrap(),
    ];
    let mut roundtrips = 0;
    let mut tampers = 0;
    for spec in &challenges {
        let path = progress_path(home, spec.challenge_name());
        for level in spec.levels() {
            save_progress(&path, &compute_progress_hash(&salts, spec.challenge_name(), &level.name, home_str))
                .map_err(|e| e.to_string())?;
            let record = load_progress(&path).map_err(|e| e.to_string())?.ok_or("record vanished")?;
            let found = resolve_level_from_hash(&record, spec, &salts, home_str).map_err(|e| e.to_string())?;
            ensure(found.as_deref() == Some(level.name.as_str()), || format!("{} resolved to {found:?}", level.name))?;
            roundtrips += 1;

            // Every alternative byte at every position, checked on the
            // parsed text; one alternative per position also goes through disk.
            let original = fs::read(&path).unwrap();
            for i in 0..original.len() {
                for b in 0..=255u8 {
                    if b == original[i] {
                        continue;
                    }
                    let mut bytes = original.clone();
                    bytes[i] = b;
                    let resolved = if b == original[i] ^ 0x01 {
                        fs::write(&path, &bytes).unwrap();
                        match load_progress(&path) {
                            Ok(Some(r)) => resolve_level_from_hash(&r, spec, &salts, home_str).ok().flatten(),
                            _ => None,
                        }
                    } else {
                        match std::str::from_utf8(&bytes).ok().map(|t| ProgressRecord::parse(t, &path)) {
                            Some(Ok(r)) => resolve_level_from_hash(&r, spec, &salts, home_str).ok().flatten(),
                            _ => None,
                        }
                    };
                    ensure(resolved.is_none(), || format!("tamper at byte {i} -> {b:#x} resolved to {resolved:?}"))?;
                    tampers += 1;
                }
            }
            fs::write(&path, &original).unwrap();
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in 0..1000 {
        let parts: Vec<String> = (0..3).map(|i| format!("{i}{}", random_text(&mut rng, 24))).collect();
        let salts = SaltTriple::new(parts[0].as_bytes(), parts[1].as_bytes(), parts[2].as_bytes()).unwrap();
        let (challenge, level, home) = (random_text(&mut rng, 30), random_text(&mut rng, 20), random_text(&mut rng, 60));
        let ours = compute_progress_hash(&salts, &challenge, &level, &home);
        let message = [&parts[0], &challenge, &parts[1], &level, &parts[2], &home].map(|s| s.as_str()).concat();
        ensure(ours == reference_md5(message.as_bytes()), || format!("tuple {n} digest differs"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{roundtrips} level roundtrips, {tampers} single-byte tampers rejected, 1000 tuples match reference MD5, {elapsed:?} < 5 s"
    ))
}

fn crypto_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for size in [16usize, 24, 32] {
        for _ in 0..100 {
            let mut key = vec![0u8; size];
            rng.fill(&mut key[..]);
            let key = ChallengeKey::new(&key).map_err(|e| e.to_string())?;
            let mut payload = vec![0u8; rng.gen_range(0..4096)];
            rng.fill(&mut payload[..]);
            let sealed = encrypt_challenge(&payload, &key);
            ensure(decrypt_challenge(&sealed, &key).as_deref() == Ok(&payload[..]), || format!("{size}-byte roundtrip"))?;

            let mut other = vec![0u8; size];
            rng.fill(&mut other[..]);
            let wrong = ChallengeKey::new(&other).unwrap();
            ensure(decrypt_challenge(&sealed, &wrong).is_err(), || format!("{size}-byte wrong key decrypted"))?;
            let other_size = ChallengeKey::new(&vec![1u8; if size == 32 { 16 } else { size + 8 }]).unwrap();
            ensure(decrypt_challenge(&sealed, &other_size).is_err(), || "wrong key size decrypted".into())?;
            checked += 1;
        }
    }
    Ok(format!("{checked} payloads at 16/24/32-byte keys; every wrong key errors"))
}

fn branch_fairness() -> Outcome {
    let level = Level {
        name: "lvl1".into(),
        test: "true".into(),
        next: vec!["lvl21".into(), "lvl22".into(), "lvl23".into()],
        body: String::new(),
    };
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for seed in 0..30_000u64 {
        let pick = select_next_level(&level, &mut level_rng(seed, &level.name)).ok_or("no successor chosen")?;
        *counts.entry(pick.to_string()).or_default() += 1;
    }
    ensure(counts.len() == 3 && counts.values().all(|c| c.abs_diff(10_000) <= 500), || format!("{counts:?}"))?;
    Ok(format!("{counts:?} over 30000 seeded draws"))
}

const KINDS: [EventType; 7] = [
    EventType::Start,
    EventType::Command,
    EventType::Command,
    EventType::Passed,
    EventType::Exit,
    EventType::Help,
    EventType::Ack,
];

fn random_event(rng: &mut ChaCha8Rng, lab: &str) -> Event {
    let kind = *KINDS.choose(rng).unwrap();
    let mut extra = BTreeMap::new();
    if kind == EventType::Passed && rng.gen_bool(0.7) {
        extra.insert("next_level".to_string(), format!("lvl{}", rng.gen_range(1..5)));
    }
    Event {
        event_id: uuid::Uuid::from_u128(rng.gen()),
        event_type: kind,
        user: format!("u{}", rng.gen_range(0..4)),
        host: "pc".into(),
        ip: "10.0.0.9".into(),
        lab_id: lab.into(),
        level_id: format!("lvl{}", rng.gen_range(1..5)),
        command_text: ["", "ls", "cd /tmp", "cat notes"].choose(rng).unwrap().to_string(),
        timestamp: chrono::DateTime::from_timestamp(1_700_000_000 + rng.gen_range(0..40), 0).unwrap(),
        extra,
    }
}

fn reduce(e: &Event) -> ReplayEvent {
    ReplayEvent {
        id: e.event_id.as_u128(),
        at: e.timestamp.timestamp(),
        kind: e.event_type.as_str(),
        user: e.user.clone(),
        level: e.level_id.clone(),
        command: e.command_text.clone(),
        next_level: e.extra.get("next_level").cloned(),
    }
}

fn event_fold() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let monitor = Monitor::in_memory();
    for n in 0..1000 {
        let lab = format!("lab{n}");
        let events: Vec<Event> = (0..rng.gen_range(0..80)).map(|_| random_event(&mut rng, &lab)).collect();
        let mut arrivals = events.clone();
        for _ in 0..rng.gen_range(0..5) {
            if let Some(e) = events.choose(&mut rng) {
                arrivals.push(e.clone());
            }
        }
        arrivals.shuffle(&mut rng);
        for e in arrivals {
            monitor.ingest(e).map_err(|e| e.to_string())?;
        }
        let expected = replay_students(&events.iter().map(reduce).collect::<Vec<_>>());
        let live = monitor.snapshot(&lab);
        ensure(live.len() == expected.len(), || format!("sequence {n}: roster size"))?;
        for s in &live {
            let x = &expected[&s.user];
            let same = s.current_level == x.level
                && s.unsuccessful_attempts == x.attempts
                && s.last_command == x.last_command
                && s.last_activity.map(|t| t.timestamp()) == x.last_activity
                && s.help_requested == x.help
                && s.finished == x.finished
                && s.levels_passed == x.passed;
            ensure(same, || format!("sequence {n}, {}: live {s:?} vs replay {x:?}", s.user))?;
        }
    }

    // Five students on a 3-level lab worth 1 + 2 + 3 points.
    let scheme = parse_scheme("lvl1:1,lvl2:2,lvl3:3").unwrap();
    let mut log = Vec::new();
    let mut t = 0;
    let mut push = |log: &mut Vec<Event>, kind: EventType, user: &str, level: &str, next: Option<&str>| {
        t += 1;
        log.push(Event {
            event_id: uuid::Uuid::from_u128(t as u128),
            event_type: kind,
            user: user.into(),
            host: String::new(),
            ip: String::new(),
            lab_id: "grades".into(),
            level_id: level.into(),
            command_text: String::new(),
            timestamp: chrono::DateTime::from_timestamp(1_700_000_000 + t, 0).unwrap(),
            extra: next.map(|n| [("next_level".to_string(), n.to_string())].into()).unwrap_or_default(),
        });
    };
    for (user, passes, exit) in [("ada", 3, true), ("bo", 2, false), ("cy", 1, true), ("di", 0, false), ("ed", 3, false)] {
        push(&mut log, EventType::Start, user, "lvl1", None);
        for (i, (lvl, next)) in [("lvl1", Some("lvl2")), ("lvl2", Some("lvl3")), ("lvl3", None)].into_iter().enumerate() {
            if i < passes {
                push(&mut log, EventType::Command, user, lvl, None);
                push(&mut log, EventType::Passed, user, lvl, next);
            }
        }
        if exit {
            push(&mut log, EventType::Exit, user, if passes == 3 { "lvl3" } else { "lvl2" }, None);
        }
    }
    let m = Monitor::in_memory();
    for e in log.iter().rev() {
        m.ingest(e.clone()).unwrap();
    }
    let csv = grade_export(&m.log("grades"), &scheme).map_err(|e| e.to_string())?;
    let expected = "user,levels_passed,points,finished\nada,3,6,true\nbo,2,3,false\ncy,1,1,false\ndi,0,0,false\ned,3,6,false\n";
    ensure(csv == expected, || format!("grades:\n{csv}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 shuffled sequences with duplicates equal replay; 5-student grades exact; {elapsed:?} < 30 s"))
}

fn token_sets(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let vocab = ["ls", "-la", "cd", "/tmp", "grep", "awk", "-c", "log", "cat", "wc"];
    loop {
        let commands: Vec<String> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=4);
                vocab.choose_multiple(rng, k).cloned().collect::<Vec<_>>().join(" ")
            })
            .collect();
        let vectors: Vec<Vec<f64>> = vectorize(&commands).unwrap().vectors.into_iter().map(|v| v.vector).collect();
        let mut distinct = vectors.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        if distinct.len() >= 3 {
            return vectors;
        }
    }
}

fn oracle_distance(distance: Distance) -> fn(&[f64], &[f64]) -> f64 {
    fn jac(a: &[f64], b: &[f64]) -> f64 {
        let set = |v: &[f64]| -> std::collections::BTreeSet<String> {
            v.iter().enumerate().filter(|(_, x)| **x >= 0.5).map(|(i, _)| i.to_string()).collect()
        };
        let (sa, sb) = (set(a), set(b));
        set_jaccard(&sa.iter().map(String::as_str).collect(), &sb.iter().map(String::as_str).collect())
    }
    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm(a) == 0.0 || norm(b) == 0.0 {
            1.0
        } else {
            (1.0 - dot / (norm(a) * norm(b))).clamp(0.0, 1.0)
        }
    }
    match distance {
        Distance::Jaccard => jac,
        Distance::Cosine => cos,
    }
}

fn analytics() -> Outcome {
    let started = Instant::now();
    let s = 1.0 - 1.0 / 2f64.sqrt();
    let unit = [
        ("jaccard identity", jaccard_distance(&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0]), 0.0),
        ("jaccard disjoint", jaccard_distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 1.0]), 1.0),
        ("jaccard {ls,-la} vs {ls}", jaccard_distance(&[1.0, 1.0], &[0.0, 1.0]), 0.5),
        ("cosine identity", cosine_distance(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]), 0.0),
        ("cosine orthogonal", cosine_distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 1.0),
        ("cosine [1,1,0] vs [1,0,0]", cosine_distance(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]), s),
    ];
    for (name, got, want) in unit {
        ensure((got - want).abs() <= 1e-12, || format!("{name}: {got} vs {want}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut cases, mut optimal, mut flagged) = (0, 0, Vec::new());
    for case in 0..60 {
        let n = rng.gen_range(4..=8);
        let points = token_sets(&mut rng, n);
        for distance in [Distance::Jaccard, Distance::Cosine] {
            for k in 1..=3 {
                let oracle = oracle_distance(distance);
                let (best, _) = brute_force_objective(&points, k, oracle);
                let c = kmeans_restarts(&points, k, distance, 100, case, DEFAULT_RESTARTS).map_err(|e| e.to_string())?;
                let ours = partition_objective(&points, &c.assignments, k, oracle);
                cases += 1;
                if (ours - best).abs() <= 1e-9 {
                    optimal += 1;
                } else {
                    ensure(ours > best, || format!("case {case}: beat the brute force?"))?;
                    flagged.push(format!("case {case} {distance} k={k}: {ours:.4} vs optimum {best:.4}"));
                }
            }
        }
    }
    for f in &flagged {
        eprintln!("    local optimum flagged: {f}");
    }

    let generic: Vec<Vec<f64>> = (0..15).map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let d2: Vec<Vec<f64>> = generic
        .iter()
        .map(|a| generic.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()).collect())
        .collect();
    let mut worst_entropy = 0.0f64;
    for perp in [2.0, 3.0, 4.0] {
        let (rows, _) = conditional_affinities(&d2, perp);
        for row in rows {
            let h: f64 = -row.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>();
            worst_entropy = worst_entropy.max((h - perp.log2()).abs());
        }
    }
    ensure(worst_entropy <= 1e-3, || format!("entropy off by {worst_entropy}"))?;

    let solutions = token_sets(&mut rng, 12);
    let mut kl_rises = 0;
    for (data, perp) in [(&generic, 4.0), (&solutions, 3.0)] {
        let params = TsneParams { perplexity: perp, ..TsneParams::default() };
        let p = tsne_project(data, &params, 5).map_err(|e| e.to_string())?;
        let tail = &p.kl_trace[p.kl_trace.len() - 50..];
        kl_rises += tail.windows(2).filter(|w| w[1] > w[0]).count();
    }
    ensure(kl_rises == 0, || format!("KL rose {kl_rises} times over the final 50 iterations"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "unit distances exact; k-means optimal in {optimal}/{cases} cases, {} local optima flagged; max entropy error {worst_entropy:.1e}; KL monotone over final 50; {elapsed:?}",
        flagged.len()
    ))
}

fn write_file(dir: &Path, name: &str, data: &[u8], exec: bool) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, data).unwrap();
    if exec {
        fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    }
    p
}

fn packager() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    fs::create_dir(&src).unwrap();
    let run = write_file(&src, "start.sh", b"#!/bin/sh\necho \"ran with $# args: $*\"\ncat data/notes.txt\nexit 3\n", true);
    let blob: Vec<u8> = (0..70_001u32).map(|i| (i.wrapping_mul(2654435761) >> 11) as u8).collect();
    let bin = write_file(&src, "ta", &blob, true);
    let notes = write_file(&src, "notes.txt", b"remember /tmp\n", false);
    let manifest = BundleManifest {
        challenge_name: "demo".into(),
        entrypoint: "start.sh".into(),
        args: vec!["play".into()],
        entries: vec![
            BundleEntry { path: "start.sh".into(), source: run, executable: true },
            BundleEntry { path: "ta".into(), source: bin, executable: true },
            BundleEntry { path: "data/notes.txt".into(), source: notes, executable: false },
        ],
    };
    let archive = dir.path().join("demo.run");
    build_archive(&manifest, &archive).map_err(|e| e.to_string())?;
    verify_archive(&archive).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    extract_archive(&archive, &out).map_err(|e| e.to_string())?;
    for e in &manifest.entries {
        let got = out.join(&e.path);
        ensure(fs::read(&got).unwrap() == fs::read(&e.source).unwrap(), || format!("{} differs", e.path))?;
        let exec = fs::metadata(&got).unwrap().permissions().mode() & 0o111 != 0;
        ensure(exec == e.executable, || format!("{} exec bit", e.path))?;
    }

    let dash = ["/bin/dash", "/usr/bin/dash"].into_iter().find(|p| Path::new(p).exists()).ok_or("dash not installed")?;
    let output = Command::new(dash).arg(&archive).arg("extra").current_dir(dir.path()).output().unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    ensure(output.status.code() == Some(3), || format!("exit {:?}: {}", output.status, String::from_utf8_lossy(&output.stderr)))?;
    ensure(stdout.contains("ran with 2 args: play extra") && stdout.contains("remember /tmp"), || stdout.to_string())?;
    Ok(format!("build/verify/extract byte-identical with modes; stub ran under {dash} (exit 3 passed through)"))
}

struct MonitorProcess {
    child: std::process::Child,
    url: String,
}

impl Drop for MonitorProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_monitor(data: &Path) -> Result<MonitorProcess, String> {
    let mut child = Command::new(engine())
        .args(["monitor", "--listen", "127.0.0.1:0", "--token", "tk", "--data-dir"])
        .arg(data)
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
    let url = line
        .split_whitespace()
        .find(|w| w.starts_with("http://"))
        .ok_or_else(|| format!("monitor said {line:?}"))?
        .to_string();
    Ok(MonitorProcess { child, url })
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let monitor = start_monitor(&root.join("data"))?;

    let src = root.join("src");
    fs::create_dir(&src).unwrap();
    let tac = src.join("sample_challenge.tac");
    let status = Command::new(engine())
        .arg("compile")
        .arg(assets().join("sample_challenge.gta"))
        .arg("--out")
        .arg(&tac)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    ensure(status.success(), || "compile failed".into())?;
    let rc = Command::new(engine()).arg("shellrc").output().unwrap().stdout;
    let rc = write_file(&src, "ta-shellrc.sh", &rc, false);
    let manifest = BundleManifest {
        challenge_name: "sample_challenge".into(),
        entrypoint: "ta".into(),
        args: ["run", "sample_challenge.tac", "--rcfile", "ta-shellrc.sh", "--no-typewriter"].map(String::from).to_vec(),
        entries: vec![
            BundleEntry { path: "ta".into(), source: engine(), executable: true },
            BundleEntry { path: "sample_challenge.tac".into(), source: tac, executable: false },
            BundleEntry { path: "ta-shellrc.sh".into(), source: rc, executable: false },
        ],
    };
    let archive = root.join("sample_challenge.run");
    build_archive(&manifest, &archive).map_err(|e| e.to_string())?;

    let home = root.join("home");
    fs::create_dir(&home).unwrap();
    let mut shell = Command::new("sh")
        .arg(&archive)
        .args(["--monitor-url", &monitor.url, "--lab-id", "e2e"])
        .current_dir(&home)
        .env_clear()
        .env("PATH", std::env::var("PATH").unwrap_or_default())
        .env("HOME", &home)
        .env("USER", "walker")
        .env("TERM", "dumb")
        .env("TA_NO_USER_RC", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    shell
        .stdin
        .take()
        .unwrap()
        .write_all(b"cd /temp\ncd /tmp\ntouch ~/treasure.txt\ncd ~\n")
        .unwrap();
    let output = shell.wait_with_output().unwrap();
    ensure(output.status.success(), || format!("session exited {:?}: {}", output.status, String::from_utf8_lossy(&output.stderr)))?;

    let agent = ureq::Agent::new_with_config(
        ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(Duration::from_secs(5))).build(),
    );
    let deadline = Instant::now() + Duration::from_secs(10);
    let kinds = loop {
        let body = agent
            .get(format!("{}/api/v1/labs/e2e/students/walker/history", monitor.url))
            .header("authorization", "Bearer tk")
            .call()
            .map_err(|e| e.to_string())?
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        let events: Vec<serde_json::Value> = serde_json::from_str(&body).map_err(|e| e.to_string())?;
        let kinds: Vec<(String, String)> = events
            .iter()
            .map(|e| (e["type"].as_str().unwrap_or("").to_string(), e["level_id"].as_str().unwrap_or("").to_string()))
            .collect();
        if kinds.last().is_some_and(|(k, _)| k == "exit") || Instant::now() > deadline {
            break kinds;
        }
        std::thread::sleep(Duration::from_millis(100));
    };
    let shape: Vec<&str> = kinds.iter().map(|(k, _)| k.as_str()).collect();
    let well_formed = shape.first() == Some(&"start")
        && shape.last() == Some(&"exit")
        && shape[1..shape.len().saturating_sub(1)].iter().all(|k| *k == "command" || *k == "passed");
    ensure(well_formed, || format!("history {shape:?}"))?;
    let passed: Vec<&str> = kinds.iter().filter(|(k, _)| k == "passed").map(|(_, l)| l.as_str()).collect();
    ensure(passed == ["lvl1", "lvl2", "lvl3"], || format!("passed levels {passed:?}"))?;
    ensure(shape.contains(&"command"), || "the failed `cd /temp` was not reported".into())?;
    Ok(format!("bundled session via sh produced {}", shape.join(" ")))
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("parse-and-walk", parse_and_walk),
        ("templating", templating),
        ("typewriter timing", typewriter_timing),
        ("progress hash", progress_hash),
        ("crypto roundtrip", crypto_roundtrip),
        ("branch fairness", branch_fairness),
        ("event fold", event_fold),
        ("analytics", analytics),
        ("packager", packager),
        ("end-to-end", end_to_end),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        let line = match check() {
            Ok(detail) => format!("PASS  {name}: {detail}"),
            Err(why) => {
                failed.push(name);
                format!("FAIL  {name}: {why}")
            }
        };
        // Written past the test harness capture so the summary always shows.
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
