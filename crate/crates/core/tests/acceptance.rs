//! Acceptance suite. Runs as its own binary so every criterion prints a
//! PASS or FAIL line whether or not the run succeeds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use simulcast::apps::durs_gate;
use simulcast::astrolabous::{ast_dec, ast_enc, solve_witness, AstCiphertext};
use simulcast::crypto::{OracleMode, RandomOracle};
use simulcast::harness::{
    audit, compare_scenario, load_corpus, load_suite, corpus_dir, run_trials, run_world, stats, Family, StackName,
};
use simulcast::kernel::{Bytes, EntityKind, Input, ScenarioScript, Trace};
use simulcast::sbc::sbc_gate;
use simulcast::SimError;

struct Outcome {
    pass: bool,
    detail: String,
    /// A failure that matches a documented limitation exactly. Reported as
    /// FAIL but does not fail the binary.
    known: bool,
}

impl Outcome {
    fn pass(detail: impl Into<String>) -> Self {
        Self { pass: true, detail: detail.into(), known: false }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self { pass: false, detail: detail.into(), known: false }
    }

    fn check(ok: bool, detail: impl Into<String>) -> Self {
        Self { pass: ok, detail: detail.into(), known: false }
    }
}

fn suite(name: &str) -> Vec<(PathBuf, ScenarioScript)> {
    load_suite(name).unwrap_or_else(|e| panic!("suite {name}: {e}"))
}

fn world(script: &ScenarioScript, ideal: bool) -> Trace {
    let family = StackName::parse(&script.stack).unwrap().family;
    run_world(script, StackName { family, ideal }).unwrap_or_else(|e| panic!("{}: {e}", script.name))
}

fn hex_of(b: &Bytes) -> String {
    hex::encode(&b.0)
}

/// Parties that have been corrupted at or before event `seq`.
fn corrupted_by(trace: &Trace, seq: u64) -> BTreeSet<usize> {
    trace
        .events
        .iter()
        .take_while(|e| e.seq <= seq)
        .filter(|e| e.label == "corrupt" && e.actor.kind == EntityKind::Adversary)
        .filter_map(|e| e.payload["party"].as_u64().map(|p| p as usize))
        .collect()
}

fn corruption_round(trace: &Trace, party: usize) -> Option<u64> {
    trace
        .events
        .iter()
        .find(|e| e.label == "corrupt" && e.actor.kind == EntityKind::Adversary && e.payload["party"] == party)
        .map(|e| e.round)
}

fn never_corrupted(trace: &Trace) -> Vec<usize> {
    let bad = corrupted_by(trace, u64::MAX);
    let mut all: Vec<usize> = trace
        .events
        .iter()
        .filter(|e| e.label == "register")
        .filter_map(|e| e.actor.party_index())
        .collect();
    all.retain(|p| !bad.contains(p));
    all
}

/// Environment inputs as `(seq, round, party, input)`.
fn inputs(trace: &Trace) -> Vec<(u64, u64, usize, Input)> {
    trace
        .events
        .iter()
        .filter(|e| e.label == "input")
        .map(|e| {
            let input: Input = serde_json::from_value(e.payload["input"].clone()).expect("input payload");
            (e.seq, e.round, e.payload["party"].as_u64().unwrap() as usize, input)
        })
        .collect()
}

fn outputs(trace: &Trace, party: usize) -> Vec<(u64, Value)> {
    trace
        .events
        .iter()
        .filter(|e| e.label == "output" && e.actor.party_index() == Some(party))
        .map(|e| (e.round, e.payload.clone()))
        .collect()
}

/// Whether some string in `v` equals `needle`.
fn holds_value(v: &Value, needle: &str) -> bool {
    match v {
        Value::String(s) => s == needle,
        Value::Array(a) => a.iter().any(|x| holds_value(x, needle)),
        Value::Object(m) => m.values().any(|x| holds_value(x, needle)),
        _ => false,
    }
}

fn astrolabous_roundtrips() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut oracle = RandomOracle::new(OracleMode::Concrete, 1);
    let mut bad = 0;
    for i in 0..1000 {
        let len = rng.gen_range(0..96);
        let mut m = vec![0u8; len];
        rng.fill(&mut m[..]);
        let tau_dec = rng.gen_range(0..=5u32);
        let q = [1u32, 2, 4][rng.gen_range(0..3)];
        let c = ast_enc(&m, tau_dec, q, &mut rng, &mut oracle);
        let c = AstCiphertext::from_bytes(&c.to_bytes()).expect("ciphertext reparses");
        let (w, calls) = solve_witness(&c, &mut oracle).expect("well-formed ciphertext");
        let ok = calls == u64::from(q * tau_dec) && ast_dec(&c, &w).as_deref() == Ok(&m[..]);
        if !ok {
            bad += 1;
            eprintln!("roundtrip {i} failed: tau_dec {tau_dec}, q {q}, {calls} calls");
        }
    }
    let took = start.elapsed();
    Outcome::check(
        bad == 0 && took < Duration::from_secs(5),
        format!("1000 roundtrips, {bad} failures, {:.2}s (limit 5s)", took.as_secs_f64()),
    )
}

fn fbc_timing() -> Outcome {
    let mut problems = Vec::new();
    let mut checked = 0;
    for (_, script) in suite("fbc") {
        for ideal in [false, true] {
            let t = world(&script, ideal);
            let honest = never_corrupted(&t);
            let mut expected: BTreeMap<u64, Vec<String>> = BTreeMap::new();
            for (_, round, party, input) in inputs(&t) {
                let Input::Broadcast { msg } = input else { continue };
                if corruption_round(&t, party).is_some_and(|c| c <= round) {
                    continue;
                }
                expected.entry(round + 2).or_default().push(hex_of(&msg));
                checked += 1;
            }
            let seqs: Vec<Vec<(u64, Value)>> = honest.iter().map(|&p| outputs(&t, p)).collect();
            if seqs.windows(2).any(|w| w[0] != w[1]) {
                problems.push(format!("{}: honest parties disagree on outputs", script.name));
            }
            for (&p, outs) in honest.iter().zip(&seqs) {
                for (round, msgs) in &expected {
                    let got: Vec<&str> = outs
                        .iter()
                        .filter(|(r, _)| r == round)
                        .filter_map(|(_, o)| o["msg"].as_str())
                        .collect();
                    for m in msgs {
                        if !got.contains(&m.as_str()) {
                            problems.push(format!("{}: P{p} lacks {m} at round {round}", script.name));
                        }
                    }
                }
                for (r, o) in outs {
                    let m = o["msg"].as_str().unwrap_or_default();
                    let due = expected.iter().find(|(_, v)| v.iter().any(|x| x == m)).map(|(d, _)| *d);
                    if due.is_some_and(|d| *r < d) {
                        problems.push(format!("{}: P{p} got honest {m} early, at round {r}", script.name));
                    }
                }
            }
        }
    }
    match problems.first() {
        None => Outcome::pass(format!("{checked} honest broadcasts output exactly 2 rounds later in both worlds")),
        Some(p) => Outcome::fail(format!("{} problems, first: {p}", problems.len())),
    }
}

fn fbc_fairness() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (_, script) in suite("fbc").into_iter().filter(|(_, s)| s.name.contains("postlock")) {
        let original: Vec<String> = script
            .activations
            .iter()
            .filter_map(|a| match &a.input {
                Input::Broadcast { msg } => Some(hex_of(msg)),
                _ => None,
            })
            .collect();
        for stack in ["fbc", "fbc_ideal"] {
            let mut s = script.clone();
            s.stack = stack.into();
            let runs = run_trials(&s, 200, 4).expect("trials run");
            let good = runs
                .iter()
                .filter(|r| {
                    let lines: Vec<&str> = r.outputs.lines().collect();
                    !lines.is_empty()
                        && lines.iter().all(|l| {
                            let delivered: Vec<&str> = l.split(' ').skip(1).collect();
                            original.iter().all(|m| delivered.iter().any(|d| d.contains(m.as_str())))
                                && delivered.len() == original.len()
                        })
                })
                .count();
            ok &= good == 200;
            lines.push(format!("{}/{stack} {good}/200", script.name));
        }
    }
    Outcome::check(ok && lines.len() >= 4, lines.join(", "))
}

fn tle_equivalence() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, delta, alpha) in [("tle", 2, 2), ("tle_31", 3, 1)] {
        let scripts = suite(name);
        let mut equal = 0;
        for (_, s) in &scripts {
            let r = Family::Tle.resolve(s);
            ok &= (r.delta, r.alpha) == (delta, alpha);
            match compare_scenario(s) {
                Ok(rep) if rep.is_equal() => equal += 1,
                Ok(rep) => eprintln!("{}: {:?}", s.name, rep.first_divergence),
                Err(e) => eprintln!("{}: {e}", s.name),
            }
        }
        ok &= scripts.len() >= 12 && equal == scripts.len();
        notes.push(format!("({delta},{alpha}) {equal}/{} equal", scripts.len()));
    }
    Outcome::check(ok, notes.join(", "))
}

fn sequentiality_budget() -> Outcome {
    let corpus = load_corpus(&corpus_dir()).expect("corpus loads");
    let mut ciphertexts = 0;
    let mut violations = Vec::new();
    for (path, s) in &corpus {
        let family = StackName::parse(&s.stack).unwrap().family;
        if !matches!(family, Family::Fbc | Family::Tle) {
            continue;
        }
        let rep = audit(&world(s, false)).expect("audit runs");
        ciphertexts += rep.ciphertexts.len();
        let suite = path.parent().and_then(|p| p.file_name()).unwrap().to_string_lossy().to_string();
        for v in rep.violations {
            violations.push((suite.clone(), s.name.clone(), v));
        }
    }
    if violations.is_empty() {
        return Outcome::pass(format!("{ciphertexts} honest ciphertexts, no violations"));
    }
    // Over an ideal fair broadcast with (delta, alpha) = (3, 1) the
    // adversary reads the ciphertext at emission + delta - alpha and can
    // finish the chain two rounds ahead of the leak bound.
    let known = violations.iter().all(|(suite, _, v)| {
        suite == "tle_31"
            && v.kind == "adversary_early"
            && v.detail.contains(", 2 round(s) before")
    });
    let names: BTreeSet<&str> = violations.iter().map(|(_, n, _)| n.as_str()).collect();
    Outcome {
        pass: false,
        known,
        detail: format!(
            "{ciphertexts} honest ciphertexts, {} violations in {:?}{}",
            violations.len(),
            names,
            if known { "; adversary two rounds early at (delta, alpha) = (3, 1)" } else { "" }
        ),
    }
}

/// Rounds before which an honest SBC message must stay hidden.
fn sbc_bound(t: &Trace, script: &ScenarioScript, ideal: bool) -> Option<u64> {
    let r = Family::Sbc.resolve(script);
    let awake = t.events.iter().find(|e| e.label == "sbc_awake")?;
    let t_end = awake.payload["t_end"].as_u64()?;
    let tau_rel = awake.payload["tau_rel"].as_u64()?;
    Some(if ideal { t_end + r.delta - r.alpha } else { tau_rel - r.delay })
}

/// Honest message bytes visible to the adversary before `bound`.
fn sbc_leaks(t: &Trace, bound: u64, substring: bool) -> Vec<String> {
    let honest_msgs: Vec<(u64, usize, String)> = inputs(t)
        .into_iter()
        .filter_map(|(seq, _, p, i)| match i {
            Input::Broadcast { msg } => Some((seq, p, hex_of(&msg))),
            _ => None,
        })
        .collect();
    let mut found = Vec::new();
    for e in t.events.iter().filter(|e| e.adversary_visible() && e.round < bound && e.label != "directive") {
        let corrupted = corrupted_by(t, e.seq);
        let line = e.payload.to_string();
        for (seq, p, m) in &honest_msgs {
            if *seq > e.seq || corrupted.contains(p) {
                continue;
            }
            let hit = if substring { line.contains(m.as_str()) } else { holds_value(&e.payload, m) };
            if hit {
                found.push(format!("seq {} round {} shows P{p}'s {m}", e.seq, e.round));
            }
        }
    }
    found
}

fn sbc_simultaneity() -> Outcome {
    let mut leaks = Vec::new();
    let mut traces = 0;
    for (_, s) in suite("sbc") {
        for ideal in [false, true] {
            let t = world(&s, ideal);
            traces += 1;
            if let Some(bound) = sbc_bound(&t, &s, ideal) {
                leaks.extend(sbc_leaks(&t, bound, false).into_iter().map(|l| format!("{}: {l}", s.name)));
            }
        }
    }
    let text = |m: &str| Input::Broadcast { msg: Bytes::from_text(m) };
    let probe = ScenarioScript::new("sbc", 4, 99)
        .corrupt_at(0, 0, 3)
        .act(0, 0, text("probe message from the first party"))
        .act(1, 1, text("probe message from the second party"))
        .act(2, 2, text("probe message from the third party"))
        .corrupt_at(3, 0, 2);
    for ideal in [false, true] {
        let t = world(&probe, ideal);
        traces += 1;
        let bound = sbc_bound(&t, &probe, ideal).expect("probe wakes up");
        leaks.extend(sbc_leaks(&t, bound, true).into_iter().map(|l| format!("probe: {l}")));
        let first = hex::encode("probe message from the first party");
        let revealed = t
            .events
            .iter()
            .any(|e| e.adversary_visible() && e.round >= bound && e.payload.to_string().contains(&first));
        if !revealed {
            leaks.push(format!("probe: first message never reaches the adversary (ideal {ideal})"));
        }
    }
    let mut gate_errors = Vec::new();
    for (phi, delta, alpha, accept) in [
        (4, 3, Some(3), true),
        (5, 4, None, true),
        (3, 3, Some(3), false),
        (4, 2, Some(3), false),
        (4, 3, Some(2), false),
        (4, 3, Some(4), false),
    ] {
        let got = sbc_gate(phi, delta, alpha, 3);
        if got.is_ok() != accept || (!accept && !matches!(got, Err(SimError::Gate(_)))) {
            gate_errors.push(format!("({phi},{delta},{alpha:?})"));
        }
    }
    let mut s = ScenarioScript::new("sbc", 3, 1);
    s.params.phi = Some(3);
    if !matches!(run_world(&s, StackName::parse("sbc").unwrap()), Err(SimError::Gate(_))) {
        gate_errors.push("phi 3 accepted by the protocol stack".into());
    }
    Outcome::check(
        leaks.is_empty() && gate_errors.is_empty(),
        format!(
            "{traces} traces scanned, {} early exposures{}, gate mismatches {:?}",
            leaks.len(),
            leaks.first().map(|l| format!(" (first: {l})")).unwrap_or_default(),
            gate_errors
        ),
    )
}

fn corpus_equivalence() -> Outcome {
    let corpus = load_corpus(&corpus_dir()).expect("corpus loads");
    let mut divergent = Vec::new();
    let mut midround = 0;
    for (_, s) in &corpus {
        if s.name.contains("midround") {
            midround += 1;
        }
        match compare_scenario(s) {
            Ok(r) if r.is_equal() => {}
            Ok(_) => divergent.push(s.name.clone()),
            Err(e) => divergent.push(format!("{} ({e})", s.name)),
        }
    }
    Outcome::check(
        corpus.len() >= 48 && midround > 0 && divergent.is_empty(),
        format!("{} scripts ({midround} mid-round), divergent: {divergent:?}", corpus.len()),
    )
}

fn xor_of(batch: &[Value]) -> [u8; 32] {
    let mut acc = [0u8; 32];
    for m in batch {
        let b = hex::decode(m.as_str().unwrap()).unwrap();
        if b.len() == 32 {
            for (a, x) in acc.iter_mut().zip(b) {
                *a ^= x;
            }
        }
    }
    acc
}

fn durs() -> Outcome {
    let mut runs = 0;
    let mut mismatches = 0;
    for (_, s) in suite("durs") {
        for k in 0..20 {
            let mut s = s.clone();
            s.seed = s.seed.wrapping_add(k);
            let t = world(&s, false);
            runs += 1;
            let mut batch: BTreeMap<usize, Vec<Value>> = BTreeMap::new();
            for e in &t.events {
                let Some(p) = e.actor.party_index() else { continue };
                if e.label == "durs_batch" {
                    batch.insert(p, e.payload["msgs"].as_array().unwrap().clone());
                } else if e.label == "output" {
                    let want = batch.get(&p).map(|b| hex::encode(xor_of(b)));
                    if e.payload["urs"].as_str().map(String::from) != want {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let (_, basic) = suite("durs").into_iter().find(|(_, s)| s.name == "durs_basic").unwrap();
    let start = Instant::now();
    let rep = stats(&basic, 2000, 4).expect("stats run");
    let took = start.elapsed();
    let bias = rep.max_bias.unwrap_or(1.0);
    let bits = rep.bit_frequency.as_ref().map_or(0, Vec::len);
    let gate_ok = [(2, 4, 2, true), (1, 2, 1, true), (0, 4, 0, false), (4, 4, 0, false), (5, 4, 0, false), (3, 4, 2, false)]
        .iter()
        .all(|&(phi, delta, alpha, accept)| durs_gate(phi, delta, alpha).is_ok() == accept);
    Outcome::check(
        mismatches == 0 && bits == 256 && bias <= 0.05 && took < Duration::from_secs(60) && gate_ok,
        format!(
            "xor check over {runs} runs, {mismatches} mismatches; 2000 trials max bias {bias:.4} over {bits} bits in {:.1}s; gate {}",
            took.as_secs_f64(),
            if gate_ok { "ok" } else { "wrong" }
        ),
    )
}

/// Plurality count keeping each voter's `quota` most recent in-window
/// ballots.
fn expected_tally(s: &ScenarioScript, candidates: usize, quota: usize, phi: u64) -> Vec<u64> {
    let mut t_start = None;
    let mut ballots: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for a in &s.activations {
        match a.input {
            Input::Init => {
                t_start.get_or_insert(a.round);
            }
            Input::Vote { candidate } => {
                let Some(t0) = t_start else { continue };
                if a.round > t0 && a.round < t0 + phi && (candidate as usize) < candidates {
                    ballots.entry(a.party).or_default().push(candidate);
                }
            }
            _ => {}
        }
    }
    let mut res = vec![0; candidates];
    for votes in ballots.values() {
        for &c in votes.iter().rev().take(quota) {
            res[c as usize] += 1;
        }
    }
    res
}

fn voting() -> Outcome {
    let mut problems = Vec::new();
    for (_, s) in suite("vote") {
        for ideal in [false, true] {
            let t = world(&s, ideal);
            let results: BTreeSet<String> = never_corrupted(&t)
                .into_iter()
                .flat_map(|p| outputs(&t, p))
                .map(|(_, o)| o["res"].to_string())
                .collect();
            if results.len() != 1 {
                problems.push(format!("{}: honest results {results:?}", s.name));
            }
            let r = Family::Vote.resolve(&s);
            if ["vote_double", "vote_quota2", "vote_after_close", "vote_not_open", "vote_basic"].contains(&s.name.as_str()) {
                let want = serde_json::to_string(&expected_tally(&s, r.candidates as usize, r.quota, r.phi)).unwrap();
                if results.iter().any(|x| *x != want) {
                    problems.push(format!("{}: got {results:?}, want {want}", s.name));
                }
            }
        }
    }
    Outcome::check(
        problems.is_empty(),
        match problems.first() {
            None => "honest results agree; quota and window rules match the reference tally".to_string(),
            Some(p) => format!("{} problems, first: {p}", problems.len()),
        },
    )
}

fn determinism() -> Outcome {
    let corpus = load_corpus(&corpus_dir()).expect("corpus loads");
    let dir = std::env::temp_dir().join(format!("simulcast-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut differing = Vec::new();
    for (_, s) in &corpus {
        for ideal in [false, true] {
            let a = dir.join("a.jsonl");
            let b = dir.join("b.jsonl");
            std::fs::write(&a, world(s, ideal).to_jsonl()).unwrap();
            std::fs::write(&b, world(s, ideal).to_jsonl()).unwrap();
            if std::fs::read(&a).unwrap() != std::fs::read(&b).unwrap() {
                differing.push(s.name.clone());
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Outcome::check(
        differing.is_empty(),
        format!("{} traces written twice, differing: {differing:?}", corpus.len() * 2),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("astrolabous roundtrips", astrolabous_roundtrips),
        ("fair broadcast timing", fbc_timing),
        ("fair broadcast post-lock fairness", fbc_fairness),
        ("time-lock equivalence at (2,2) and (3,1)", tle_equivalence),
        ("sequentiality budget", sequentiality_budget),
        ("simultaneous broadcast hiding and gate", sbc_simultaneity),
        ("corpus equivalence", corpus_equivalence),
        ("random string", durs),
        ("voting", voting),
        ("determinism", determinism),
    ];
    let mut unexpected = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        let status = match (o.pass, o.known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2} {status}: {name}: {}", i + 1, o.detail);
        if !o.pass && !o.known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
