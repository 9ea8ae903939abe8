//! One check per acceptance criterion. Each returns an outcome instead of
//! panicking so the acceptance runner can report every line.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use chrono::Duration;
use echoguard::agent::{Agent, Articulation, Confirmation, CycleResult, EmotionEntry, Feedback, LogSubmission, PartnerRef, Rating};
use echoguard::bench::{gen_corpus, run_eval, CorpusSpec, EvalMode};
use echoguard::config::Config;
use echoguard::detection::{self, Detector, EventFeatures, Mode};
use echoguard::embedding::{embed_hash, HashEmbedder};
use echoguard::graph::{Graph, NodeId};
use echoguard::query::{evaluate, parse};
use echoguard::reflection::{ExternalGenerator, GenerateRequest, PromptEngine};
use rand::seq::IndexedRandom;
use rand::Rng;

use super::embed_oracle;
use super::graphs::{epoch, random_query_graph, random_script};
use super::query_oracle::{brute_force, suite_params, StubSim, SUITE};
use super::scanner::scan;
use super::server::TestServer;
use super::sessions::{run_script, serialize, twenty_cycle_script, Step};

pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

fn detector(config: &Config) -> Detector {
    Detector::new(config.kg.clone(), Arc::new(HashEmbedder), config.detection.clone())
}

pub fn query_oracle() -> Outcome {
    let start = Instant::now();
    let queries: Vec<_> = SUITE.iter().map(|q| parse(q).expect("suite parses")).collect();
    let params = suite_params();
    let mut rng = super::rng(42);
    let (mut mismatches, mut bindings, mut first) = (0usize, 0usize, None);
    for graph_no in 0..200 {
        let g = random_query_graph(&mut rng);
        for (qi, q) in queries.iter().enumerate() {
            let got: Vec<BTreeMap<String, NodeId>> = match evaluate(q, &g, &StubSim, &params) {
                Ok(b) => b.into_iter().map(|b| b.iter().map(|(k, v)| (k.to_owned(), v)).collect()).collect(),
                Err(e) => {
                    mismatches += 1;
                    first.get_or_insert(format!("graph {graph_no} query {qi}: {e}"));
                    continue;
                }
            };
            let want = brute_force(q, &g, &params);
            bindings += want.len();
            if got != want {
                mismatches += 1;
                first.get_or_insert(format!("graph {graph_no} query {qi}: got {got:?}, want {want:?}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = mismatches == 0 && elapsed < StdDuration::from_secs(60);
    let mut detail = format!(
        "200 graphs x {} queries, {bindings} bindings, {mismatches} mismatches, {:.2}s",
        queries.len(),
        elapsed.as_secs_f64()
    );
    if let Some(f) = first {
        detail.push_str(&format!("; first: {f}"));
    }
    Outcome::new("query-engine oracle equivalence", passed, detail)
}

/// Results of the scripted session under every re-run path.
pub struct SessionReplays {
    pub live: Vec<String>,
    pub recomputed: Vec<String>,
    pub rerun: Vec<String>,
    pub reloaded: Vec<String>,
}

pub fn session_replays() -> SessionReplays {
    let script = twenty_cycle_script();
    let dir = tempfile::tempdir().unwrap();
    let agent = Agent::builder(Config::default()).data_dir(dir.path()).build().unwrap();
    let user = agent.create_user().unwrap();
    let live = serialize(&run_script(&agent, &user, &script));
    let log = agent.export_log(&user).unwrap();
    let recomputed = serialize(&agent.recompute_cycles(&user, &log).unwrap());

    let fresh = Agent::in_memory();
    let other = fresh.create_user().unwrap();
    let rerun = serialize(&run_script(&fresh, &other, &script));

    drop(agent);
    let reopened = Agent::builder(Config::default()).data_dir(dir.path()).build().unwrap();
    let reloaded = serialize(&reopened.cycles(&user).unwrap());
    SessionReplays {
        live,
        recomputed,
        rerun,
        reloaded,
    }
}

pub fn replay_determinism() -> Outcome {
    let mut rng = super::rng(7);
    let mut equal = 0;
    for _ in 0..50 {
        let g = random_script(&mut rng, 100);
        let mut buf = Vec::new();
        Graph::write_records(g.log(), &mut buf).unwrap();
        let replayed = Graph::replay(Graph::read_log(buf.as_slice()).unwrap()).unwrap();
        if g.last_seq() == 100 && replayed.structurally_eq(&g) && replayed.log() == g.log() {
            equal += 1;
        }
    }
    let s = session_replays();
    let cycles = s.live.len();
    let same = s.live == s.recomputed && s.live == s.rerun && s.live == s.reloaded;
    Outcome::new(
        "replay determinism",
        equal == 50 && cycles == 20 && same,
        format!("{equal}/50 scripts replay to an equal graph; {cycles}-cycle session byte-identical on recompute, re-run and reload: {same}"),
    )
}

/// An external generator that mostly returns prohibited text.
pub struct Adversary {
    calls: AtomicUsize,
}

impl Adversary {
    pub fn new() -> Self {
        Self {
            calls: AtomicUsize::new(0),
        }
    }
}

impl Default for Adversary {
    fn default() -> Self {
        Self::new()
    }
}

const ADVERSARIAL: [&str; 8] = [
    "You should leave them.",
    "Your partner is a narcissist, isn't that clear?",
    "Abusers act this way?",
    "Have you considered that you must   break up with him?",
    "This relationship is TOXIC.",
    "Is it time you report them?",
    "Are you the VICTIM here",
    "Would a divorce help?",
];

impl ExternalGenerator for Adversary {
    fn generate(&self, request: &GenerateRequest) -> Result<String, String> {
        let n = self.calls.fetch_add(1, Ordering::Relaxed);
        match n % 10 {
            9 => Err("generator timed out".into()),
            8 => Ok(format!("What stood out to you when you felt {}?", request.grounding.emotions.first().map_or("that", String::as_str))),
            i => Ok(ADVERSARIAL[i % ADVERSARIAL.len()].to_owned()),
        }
    }
}

const HOSTILE_PHRASES: [&str; 6] = [
    "you should leave him",
    "he's a narcissist",
    "break up with them already",
    "you're the abuser here",
    "the victims always say that",
    "you must do what i say",
];

const ROLES: [&str; 6] = ["partner", "boss", "toxic ex", "the abuser", "mother", "a manipulator"];

/// A random single-event graph and its detections.
pub fn random_detection_case(rng: &mut impl Rng, config: &Config, det: &Detector) -> (Graph, NodeId, Vec<detection::TacticDetection>) {
    let mut g = Graph::new();
    let user = echoguard::agent::user_node(&mut g).unwrap();
    let mut phrases: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(0..=3) {
        let p = match rng.random_range(0..3) {
            0 => {
                let bank = config.kg.banks().choose(rng).unwrap();
                bank.entries.choose(rng).unwrap().clone()
            }
            1 => (*HOSTILE_PHRASES.choose(rng).unwrap()).to_owned(),
            _ => format!("plain remark {}", rng.random_range(0..1000)),
        };
        if !phrases.contains(&p) {
            phrases.push(p);
        }
    }
    let mut emotions = Vec::new();
    let k = rng.random_range(1..=3);
    for term in config.kg.emotions().choose_multiple(rng, k) {
        emotions.push(EmotionEntry {
            term: term.name.clone(),
            intensity: rng.random_range(0..=100) as f64 / 100.0,
        });
    }
    let k = rng.random_range(0..=2);
    let tags: Vec<String> = config
        .kg
        .cognitions()
        .choose_multiple(rng, k)
        .cloned()
        .collect();
    let submission = LogSubmission {
        partner: PartnerRef::New {
            role_label: (*ROLES.choose(rng).unwrap()).to_owned(),
        },
        timestamp: epoch() + Duration::minutes(rng.random_range(0..10_000)),
        phrases,
        emotions,
        cognition_tags: tags,
        articulation: None,
        context_note: None,
    };
    let event = echoguard::agent::enrich(&mut g, &config.kg, user, &submission).unwrap();
    let detections = det.detect(event, &g, &BTreeMap::new(), Mode::Full).unwrap();
    (g, event, detections)
}

pub fn safety_closure() -> Outcome {
    let config = Config::default();
    let det = detector(&config);
    let plain = PromptEngine::new(config.kg.clone(), config.templates.clone(), config.lexicon.clone());
    let adversarial = PromptEngine::new(config.kg.clone(), config.templates.clone(), config.lexicon.clone())
        .with_external(Arc::new(Adversary::new()));
    let mut rng = super::rng(1000);
    let (mut prompts, mut violations, mut unquestioned, mut errors, mut rejected) = (0, 0, 0, 0, 0);
    let mut first = None;
    for i in 0..1000 {
        // Prompts are only ever generated for fired detections.
        let (g, event, fired) = loop {
            let (g, event, detections) = random_detection_case(&mut rng, &config, &det);
            let fired: Vec<_> = detections.into_iter().filter(|d| d.fired).collect();
            if !fired.is_empty() {
                break (g, event, fired);
            }
        };
        let d = fired.choose(&mut rng).unwrap();
        let engine = if i % 2 == 0 { &plain } else { &adversarial };
        match engine.generate(format!("p{i}"), d, event, &g, rng.random_range(0..10)) {
            Ok(p) => {
                prompts += 1;
                rejected += p.validation.rejected.len();
                let found = scan(&p.text);
                if !p.text.ends_with('?') {
                    unquestioned += 1;
                }
                if !found.is_empty() || !p.validation.passed {
                    violations += 1;
                    first.get_or_insert(format!("{:?} -> {found:?}", p.text));
                }
            }
            Err(e) => {
                errors += 1;
                first.get_or_insert(format!("generation failed: {e}"));
            }
        }
    }
    let mut detail = format!(
        "{prompts} prompts, {violations} with violations, {unquestioned} not ending in '?', {errors} failures, {rejected} candidates rejected along the way"
    );
    if let Some(f) = first {
        detail.push_str(&format!("; first: {f}"));
    }
    Outcome::new(
        "safety closure",
        prompts == 1000 && violations == 0 && unquestioned == 0,
        detail,
    )
}

/// The update rule folded over a feedback sequence, starting at 0.5.
pub fn calibration_oracle(seq: &[(Rating, Option<Confirmation>)]) -> f64 {
    let mut theta: f64 = 0.5;
    for (rating, confirmation) in seq {
        theta = if *rating == Rating::Helpful {
            f64::max(0.3, theta * 0.95)
        } else {
            f64::min(0.9, theta * 1.1)
        };
        if *confirmation == Some(Confirmation::Deny) {
            theta = f64::min(0.9, theta * 1.1);
        }
    }
    theta
}

pub fn random_feedback(rng: &mut impl Rng, len: usize) -> Vec<(Rating, Option<Confirmation>)> {
    let ratings = [Rating::Helpful, Rating::NotHelpful, Rating::Inaccurate];
    let confirmations = [None, Some(Confirmation::Confirm), Some(Confirmation::Deny)];
    // Runs of repeated feedback make the monotonicity checks bite.
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let item = (*ratings.choose(rng).unwrap(), *confirmations.choose(rng).unwrap());
        for _ in 0..rng.random_range(1..=6) {
            if out.len() < len {
                out.push(item);
            }
        }
    }
    out
}

fn first_prompt_cycle(agent: &Agent, user: &str) -> CycleResult {
    agent
        .run_cycle(
            user,
            &LogSubmission {
                partner: PartnerRef::New {
                    role_label: "partner".into(),
                },
                timestamp: epoch(),
                phrases: vec!["that never happened".into()],
                emotions: vec![EmotionEntry {
                    term: "fear".into(),
                    intensity: 0.7,
                }],
                cognition_tags: vec!["self_doubt".into()],
                articulation: Some(Articulation {
                    cause: None,
                    confidence: 0.5,
                }),
                context_note: None,
            },
        )
        .unwrap()
}

pub fn calibration() -> Outcome {
    let agent = Agent::in_memory();
    let mut rng = super::rng(10_000);
    let (mut out_of_range, mut non_monotone, mut oracle_mismatch, mut other_moved) = (0, 0, 0, 0);
    let mut max_err: f64 = 0.0;
    for _ in 0..10_000 {
        let user = agent.create_user().unwrap();
        let cycle = first_prompt_cycle(&agent, &user);
        let prompt = cycle.prompt.expect("clear-cut gaslighting prompts");
        let tactic = prompt.tactic_id.clone();
        let len = rng.random_range(1..=20);
        let seq = random_feedback(&mut rng, len);
        let mut trail = vec![0.5];
        for (rating, confirmation) in &seq {
            let state = agent
                .apply_feedback(
                    &user,
                    &Feedback {
                        prompt_id: prompt.id.clone(),
                        rating: *rating,
                        confirmation: *confirmation,
                    },
                )
                .unwrap();
            for (t, theta) in &state.thresholds {
                if !(0.3..=0.9).contains(theta) {
                    out_of_range += 1;
                }
                if *t != tactic && *theta != 0.5 {
                    other_moved += 1;
                }
            }
            trail.push(state.thresholds[&tactic]);
        }
        // Within a run of identical feedback the direction never flips.
        let mut i = 0;
        while i < seq.len() {
            let mut j = i;
            while j + 1 < seq.len() && seq[j + 1] == seq[i] {
                j += 1;
            }
            let lowering = seq[i].0 == Rating::Helpful && seq[i].1 != Some(Confirmation::Deny);
            for k in i..=j {
                let (a, b) = (trail[k], trail[k + 1]);
                if (lowering && b > a) || (!lowering && b < a) {
                    non_monotone += 1;
                }
            }
            i = j + 1;
        }
        let err = (trail.last().unwrap() - calibration_oracle(&seq)).abs();
        max_err = max_err.max(err);
        if err > 1e-12 {
            oracle_mismatch += 1;
        }
    }
    Outcome::new(
        "calibration properties",
        out_of_range == 0 && non_monotone == 0 && oracle_mismatch == 0 && other_moved == 0,
        format!(
            "10000 sequences: {out_of_range} out of range, {non_monotone} monotonicity breaks, {oracle_mismatch} oracle mismatches (max error {max_err:.1e}), {other_moved} untouched thresholds moved"
        ),
    )
}

/// Closed-form least-squares slope against 0-based index.
pub fn closed_form_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let x = i as f64;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn features(event: u64, pos: f64, neg: f64, shifted: bool) -> EventFeatures {
    EventFeatures {
        event: NodeId(event),
        max_positive: pos,
        max_negative: neg,
        standards_shifted: shifted,
    }
}

pub fn detection_math() -> Outcome {
    let mut rng = super::rng(1);
    let mut failures: Vec<String> = Vec::new();

    // Weighted confidence against a hand-composed sum.
    let mut conf_bad = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=6);
        let pairs: Vec<(f64, f64)> = (0..k).map(|_| (rng.random_range(0.01..5.0), rng.random_range(0.0..=1.0))).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, s) in &pairs {
            num += w * s;
            den += w;
        }
        if (detection::tactic_confidence(&pairs) - num / den).abs() > 1e-12 {
            conf_bad += 1;
        }
    }
    if conf_bad > 0 {
        failures.push(format!("{conf_bad} confidence mismatches"));
    }

    // Detector output composed from its own marker scores.
    let config = Config::default();
    let det = detector(&config);
    let mut compose_bad = 0;
    for _ in 0..200 {
        let (_, _, detections) = random_detection_case(&mut rng, &config, &det);
        for d in detections {
            let den: f64 = d.marker_scores.iter().map(|m| m.weight).sum();
            let num: f64 = d.marker_scores.iter().filter(|m| m.evaluated).map(|m| m.weight * m.score).sum();
            if (d.confidence - num / den).abs() > 1e-12 || d.fired != (d.confidence >= d.threshold_used) {
                compose_bad += 1;
            }
        }
    }
    if compose_bad > 0 {
        failures.push(format!("{compose_bad} detections disagree with their marker scores"));
    }

    // Awareness gap against the submitted numbers.
    let mut gap_bad = 0;
    for i in 0..500 {
        let mut g = Graph::new();
        let user = echoguard::agent::user_node(&mut g).unwrap();
        let k = rng.random_range(1..=3);
        let emotions: Vec<EmotionEntry> = config
            .kg
            .emotions()
            .choose_multiple(&mut rng, k)
            .map(|t| EmotionEntry {
                term: t.name.clone(),
                intensity: rng.random_range(0..=20) as f64 / 20.0,
            })
            .collect();
        let articulation = match rng.random_range(0..3) {
            0 => None,
            1 => Some(Articulation { cause: None, confidence: rng.random_range(0..=20) as f64 / 20.0 }),
            _ => Some(Articulation { cause: Some("c".into()), confidence: rng.random_range(0..=20) as f64 / 20.0 }),
        };
        let negative = |term: &str| config.kg.emotion(term).is_some_and(|e| e.valence.as_str() == "negative");
        let distress = emotions.iter().filter(|e| negative(&e.term)).map(|e| e.intensity).fold(0.0, f64::max);
        let articulated = articulation.as_ref().filter(|a| a.cause.is_some()).map_or(0.0, |a| a.confidence);
        let expected = distress - articulated >= 0.4;
        let sub = LogSubmission {
            partner: PartnerRef::New { role_label: "p".into() },
            timestamp: epoch() + Duration::minutes(i),
            phrases: Vec::new(),
            emotions,
            cognition_tags: Vec::new(),
            articulation,
            context_note: None,
        };
        let event = echoguard::agent::enrich(&mut g, &config.kg, user, &sub).unwrap();
        if det.awareness_gap(&g, event).unwrap().flagged != expected {
            gap_bad += 1;
        }
    }
    if gap_bad > 0 {
        failures.push(format!("{gap_bad} awareness-gap flags wrong"));
    }

    // Longitudinal statistics against closed forms.
    let params = detection::DetectionParams::default();
    let (mut alt_bad, mut slope_bad, mut repeat_bad, mut near_boundary) = (0, 0, 0, 0);
    for _ in 0..500 {
        let n = rng.random_range(0..=12);
        let events: Vec<EventFeatures> = (0..n)
            .map(|i| {
                let pick = |r: &mut rand_chacha::ChaCha8Rng| if r.random_bool(0.2) { 0.0 } else { r.random_range(0..=10) as f64 / 10.0 };
                features(i as u64 + 1, pick(&mut rng), pick(&mut rng), rng.random_bool(0.3))
            })
            .collect();

        let window = &events[events.len().saturating_sub(params.alternation_window)..];
        let signs: Vec<i8> = window
            .iter()
            .filter(|e| e.max_positive != e.max_negative)
            .map(|e| if e.max_positive > e.max_negative { 1 } else { -1 })
            .collect();
        let changes = (1..signs.len()).filter(|&i| signs[i] != signs[i - 1]).count();
        let rate = if signs.len() > 1 { changes as f64 / (signs.len() - 1) as f64 } else { 0.0 };
        let plus = signs.iter().filter(|s| **s == 1).count();
        let minus = signs.len() - plus;
        let fired = signs.len() >= 6 && rate >= 0.5 && plus >= 2 && minus >= 2;
        let r = detection::valence_alternation(&events, params.alternation_window, &params, 0.5);
        if r.statistic != rate || r.fired != fired || (signs.len() > 1 && (r.statistic * (signs.len() - 1) as f64).round() as usize != changes) {
            alt_bad += 1;
        }

        let window = &events[events.len().saturating_sub(params.escalation_window)..];
        let ys: Vec<f64> = window.iter().map(|e| e.max_negative).collect();
        let r = detection::escalation(&events, params.escalation_window, &params, 0.05);
        if ys.len() >= 2 {
            let slope = closed_form_slope(&ys);
            if (r.statistic - slope).abs() > 1e-9 {
                slope_bad += 1;
            }
            if (slope - 0.05).abs() < 1e-9 {
                near_boundary += 1;
            } else if r.fired != (ys.len() >= 4 && slope >= 0.05) {
                slope_bad += 1;
            }
        } else if r.fired {
            slope_bad += 1;
        }

        let window = &events[events.len().saturating_sub(params.repeat_window)..];
        let count = window.iter().filter(|e| e.standards_shifted).count();
        let r = detection::repeat_unmet(&events, params.repeat_window, 2.0);
        if r.statistic != count as f64 || r.fired != (count >= 2) {
            repeat_bad += 1;
        }
    }
    for (what, bad) in [("alternation", alt_bad), ("slope", slope_bad), ("repeat", repeat_bad)] {
        if bad > 0 {
            failures.push(format!("{bad} {what} mismatches"));
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "1000 confidence draws, 200 composed cases, 500 gap events, 500 longitudinal sequences agree ({near_boundary} slopes on the firing boundary skipped)"
        )
    } else {
        failures.join("; ")
    };
    Outcome::new("detection math", failures.is_empty(), detail)
}

pub fn embedding_golden() -> Outcome {
    let golden = embed_oracle::load_golden();
    let mut bad = Vec::new();
    let mut worst_norm: f64 = 0.0;
    for entry in &golden {
        let v = embed_hash(&entry.text);
        if embed_oracle::to_bits(v.as_slice()) != entry.bits {
            bad.push(entry.text.clone());
        }
        let norm = v.norm();
        if norm != 0.0 {
            worst_norm = worst_norm.max((norm - 1.0).abs());
        }
    }
    let passed = golden.len() == 20 && bad.is_empty() && worst_norm <= 1e-9;
    Outcome::new(
        "embedding determinism",
        passed,
        format!(
            "{} golden phrases, {} differ {bad:?}, worst |norm - 1| = {worst_norm:.1e}",
            golden.len(),
            bad.len()
        ),
    )
}

pub fn harness_separability() -> Outcome {
    let start = Instant::now();
    let config = Config::default();
    let det = detector(&config);
    let spec = CorpusSpec::new(42, 200, 0.3);
    let corpus = gen_corpus(&spec, &config);
    let full = run_eval(&corpus, &config, &det, EvalMode::Full, Some(42)).unwrap();
    let keyword = run_eval(&corpus, &config, &det, EvalMode::KeywordOnly, Some(42)).unwrap();
    let elapsed = start.elapsed();
    let passed = full.macro_f1 >= 0.90
        && full.foil_fpr <= 0.10
        && full.macro_f1 > keyword.macro_f1
        && elapsed < StdDuration::from_secs(120);
    Outcome::new(
        "harness separability",
        passed,
        format!(
            "full macro-F1 {:.4}, foil FPR {:.4}; keyword_only macro-F1 {:.4}; {:.2}s",
            full.macro_f1,
            full.foil_fpr,
            keyword.macro_f1,
            elapsed.as_secs_f64()
        ),
    )
}

/// The scripted session over HTTP, returning each cycle as received.
pub fn http_session(server: &TestServer, script: &[Step]) -> Vec<CycleResult> {
    let user = server.create_user();
    let mut out: Vec<CycleResult> = Vec::new();
    for step in script {
        match step {
            Step::Log(s) => out.push(TestServer::json(server.post(&format!("/v1/users/{user}/interactions"), s))),
            Step::Rate(rating, confirmation) => {
                if let Some(p) = out.last().and_then(|c| c.prompt.as_ref()) {
                    let fb = Feedback {
                        prompt_id: p.id.clone(),
                        rating: *rating,
                        confirmation: *confirmation,
                    };
                    let _: serde_json::Value = TestServer::json(server.post(&format!("/v1/users/{user}/feedback"), &fb));
                }
            }
        }
    }
    out
}

pub fn concurrent_submissions(n: usize) -> Vec<LogSubmission> {
    (0..n)
        .map(|i| LogSubmission {
            partner: PartnerRef::New {
                role_label: "partner".into(),
            },
            timestamp: epoch() + Duration::minutes(((i * 7919) % 97) as i64),
            phrases: vec![format!("message number {i}"), "that never happened".into()],
            emotions: vec![EmotionEntry {
                term: if i % 2 == 0 { "joy" } else { "fear" }.into(),
                intensity: 0.5 + (i % 5) as f64 / 10.0,
            }],
            cognition_tags: if i % 3 == 0 { vec!["self_doubt".into()] } else { Vec::new() },
            articulation: None,
            context_note: None,
        })
        .collect()
}

/// Fires `n` same-user submissions at once, then checks the log against a
/// sequential run in the order the server applied them.
pub fn concurrency_serializes(server: &TestServer, n: usize) -> Result<(), String> {
    let user = server.create_user();
    let subs = concurrent_submissions(n);
    let results: Vec<CycleResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = subs
            .iter()
            .map(|s| {
                let user = &user;
                scope.spawn(move || TestServer::json::<CycleResult>(server.post(&format!("/v1/users/{user}/interactions"), s)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let graph = server.agent.graph(&user).map_err(|e| e.to_string())?;
    let mut applied: Vec<(NodeId, usize)> = results
        .iter()
        .map(|c| {
            let text = graph
                .neighbors(c.event_id, Some(echoguard::graph::EdgeLabel::ContainsPhrase), echoguard::graph::Direction::Outgoing)
                .unwrap()
                .into_iter()
                .filter_map(|(_, n)| n.text("text").map(str::to_owned))
                .find(|t| t.starts_with("message number "))
                .expect("tagged phrase present");
            (c.event_id, text["message number ".len()..].parse().unwrap())
        })
        .collect();
    applied.sort();

    let sequential = Agent::in_memory();
    let other = sequential.create_user().unwrap();
    let mut expected = Vec::new();
    for (_, i) in &applied {
        expected.push(sequential.run_cycle(&other, &subs[*i]).map_err(|e| e.to_string())?);
    }
    let mut got = results;
    got.sort_by_key(|c| c.event_id);
    if !sequential.graph(&other).unwrap().structurally_eq(&graph) {
        return Err("final graph differs from the sequential order".into());
    }
    if got != expected {
        return Err("cycle results differ from the sequential order".into());
    }
    Ok(())
}

pub fn service_equivalence() -> Outcome {
    let server = TestServer::start(Agent::in_memory());
    let script = twenty_cycle_script();
    let over_http = serialize(&http_session(&server, &script));
    let local = Agent::in_memory();
    let user = local.create_user().unwrap();
    let in_process = serialize(&run_script(&local, &user, &script));
    let same = over_http == in_process;
    let concurrency = concurrency_serializes(&server, 16);
    Outcome::new(
        "service equivalence",
        same && concurrency.is_ok(),
        format!(
            "{} HTTP cycles equal in-process: {same}; 16 concurrent submissions serialize: {}",
            over_http.len(),
            match &concurrency {
                Ok(()) => "yes".to_owned(),
                Err(e) => e.clone(),
            }
        ),
    )
}

pub fn all() -> Vec<fn() -> Outcome> {
    vec![
        query_oracle,
        replay_determinism,
        safety_closure,
        calibration,
        detection_math,
        embedding_golden,
        harness_separability,
        service_equivalence,
    ]
}
