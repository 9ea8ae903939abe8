//! Synthetic vignette corpora and the evaluation harness.
//!
//! Modes:
//! - `full`: the hybrid engine over a graph holding the vignette's history.
//! - `keyword_only`: exact keyword matching in place of similarity, no
//!   longitudinal markers.
//! - `no_memory`: the hybrid engine over the main episode alone, as a flat
//!   per-interaction log would see it.
//!
//! Every vignette is evaluated in a fresh graph, so no vignette (foil or not)
//! can leak into another's history.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{add_partner, enrich, user_node, AgentError, Articulation, EmotionEntry, LogSubmission, PartnerRef};
use crate::config::Config;
use crate::detection::{Detector, Mode};
use crate::graph::Graph;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("unknown evaluation mode `{0}`")]
    Mode(String),
    #[error("{0}")]
    Agent(#[from] AgentError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    #[serde(rename = "self")]
    Me,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

/// The questionnaire answers that accompany a set of turns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    #[serde(default)]
    pub emotions: Vec<EmotionEntry>,
    #[serde(default)]
    pub cognition_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub turns: Vec<Turn>,
    pub overlay: Overlay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vignette {
    pub id: String,
    /// Earlier episodes with the same partner, oldest first.
    #[serde(default)]
    pub history: Vec<Episode>,
    pub turns: Vec<Turn>,
    pub overlay: Overlay,
    pub gold_tactics: Vec<String>,
    pub is_foil: bool,
}

impl Episode {
    /// The questionnaire form: the other speaker's turns become the logged
    /// phrases.
    pub fn submission(&self, partner: PartnerRef, timestamp: DateTime<Utc>) -> LogSubmission {
        LogSubmission {
            partner,
            timestamp,
            phrases: self
                .turns
                .iter()
                .filter(|t| t.speaker == Speaker::Other)
                .map(|t| t.text.clone())
                .take(crate::agent::MAX_PHRASES)
                .collect(),
            emotions: self.overlay.emotions.clone(),
            cognition_tags: self.overlay.cognition_tags.clone(),
            articulation: self.overlay.articulation.clone(),
            context_note: None,
        }
    }
}

impl Vignette {
    pub fn main_episode(&self) -> Episode {
        Episode {
            turns: self.turns.clone(),
            overlay: self.overlay.clone(),
        }
    }
}

/// Word substitutions used as paraphrase noise.
pub const SYNONYMS: &[(&str, &str)] = &[
    ("imagining", "picturing"),
    ("things", "stuff"),
    ("happened", "occurred"),
    ("remembering", "recalling"),
    ("wrong", "incorrectly"),
    ("said", "told you"),
    ("making", "inventing"),
    ("paranoid", "suspicious"),
    ("twist", "distort"),
    ("words", "statements"),
    ("remembers", "recalls"),
    ("done", "did"),
    ("everything", "all of it"),
    ("gave", "threw"),
    ("repay", "thank"),
    ("matter", "count"),
    ("sacrificed", "surrendered"),
    ("family", "household"),
    ("really", "truly"),
    ("loved", "cared for"),
    ("tonight", "this evening"),
    ("regret", "be sorry about"),
    ("walk", "storm"),
    ("everyone", "everybody"),
    ("secret", "private business"),
    ("still", "even now"),
    ("good", "great"),
    ("enough", "sufficient"),
    ("asked", "requested"),
    ("anymore", "these days"),
    ("fix", "repair"),
    ("supposed", "expected"),
    ("expected", "wanted"),
    ("fine", "okay"),
    ("week", "month"),
    ("overreacting", "overdoing it"),
    ("joke", "bit of fun"),
    ("sensitive", "touchy"),
    ("big", "huge"),
    ("deal", "issue"),
    ("fuss", "scene"),
    ("calm", "settle"),
    ("blowing", "puffing"),
    ("proportion", "scale"),
];

const FOIL_PHRASES: &[&str] = &[
    "i need some time to think before i answer",
    "i'd prefer we talk about this tomorrow",
    "i disagree but i hear what you're saying",
    "can we split the chores differently this week",
    "i felt hurt when plans changed at the last minute",
    "let's find a time that works for both of us",
    "i'm not comfortable with that plan",
    "thanks for telling me how you feel",
    "i'd like to go to the party with my friends",
    "could you let me know if you'll be late",
    "i want to keep my weekend free this time",
    "i appreciate you asking me first",
];

const WARM_PHRASES: &[&str] = &[
    "you mean the world to me",
    "let's go away this weekend just us",
    "i booked us a table at your favourite place",
    "i can't stop thinking about you",
    "you're the best part of my day",
];

const COLD_PHRASES: &[&str] = &[
    "whatever i'm going out",
    "not now",
    "i'll answer when i feel like it",
    "don't wait up",
    "i have better plans",
];

const SELF_TURNS: &[&str] = &["okay", "i see", "can we talk about it", "i wasn't sure what to say", "hmm"];

/// Generator settings. `noise` off means phrases are verbatim bank entries;
/// `tactics` restricts non-foil vignettes to the listed tactics.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n: usize,
    pub foil_rate: f64,
    pub noise: bool,
    pub tactics: Option<Vec<String>>,
}

impl CorpusSpec {
    pub fn new(seed: u64, n: usize, foil_rate: f64) -> Self {
        Self {
            seed,
            n,
            foil_rate,
            noise: true,
            tactics: None,
        }
    }

    pub fn foil_count(&self) -> usize {
        ((self.n as f64) * self.foil_rate.clamp(0.0, 1.0)).round() as usize
    }

    fn tactic_ids(&self, config: &Config) -> Vec<String> {
        match &self.tactics {
            Some(t) => t.clone(),
            None => config.kg.tactics().iter().map(|t| t.id.clone()).collect(),
        }
    }

    /// Vignette count per gold tactic (foils under `""`): round-robin over
    /// the tactic list after the foils are set aside.
    pub fn declared_distribution(&self, config: &Config) -> BTreeMap<String, usize> {
        let tactics = self.tactic_ids(config);
        let foils = self.foil_count();
        let mut out = BTreeMap::new();
        if foils > 0 {
            out.insert(String::new(), foils);
        }
        for i in 0..self.n - foils {
            *out.entry(tactics[i % tactics.len()].clone()).or_insert(0) += 1;
        }
        out
    }
}

/// Applies dropout and synonym substitution, changing at least one token.
pub fn paraphrase(text: &str, rng: &mut impl Rng) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let synonym = |t: &str| SYNONYMS.iter().find(|(w, _)| *w == t).map(|(_, s)| *s);
    let mut out: Vec<String> = Vec::new();
    for t in &tokens {
        if tokens.len() > 2 && rng.random::<f64>() < 0.15 {
            continue;
        }
        match synonym(t) {
            Some(s) if rng.random::<f64>() < 0.5 => out.push(s.to_owned()),
            _ => out.push((*t).to_owned()),
        }
    }
    if out.is_empty() {
        out = tokens.iter().map(|t| (*t).to_owned()).collect();
    }
    if out.join(" ") == text {
        if let Some(i) = out.iter().position(|t| synonym(t).is_some()) {
            out[i] = synonym(&out[i]).expect("checked").to_owned();
        } else if out.len() >= 3 {
            let i = rng.random_range(1..out.len());
            out.remove(i);
        } else {
            out.insert(0, "honestly".into());
        }
    }
    out.join(" ")
}

fn emotion(term: &str, intensity: f64) -> EmotionEntry {
    EmotionEntry {
        term: term.into(),
        intensity: (intensity * 100.0).round() / 100.0,
    }
}

fn tactic_cognition(tactic: &str) -> Option<&'static str> {
    match tactic {
        "gaslighting" => Some("self_doubt"),
        "guilt_induction" => Some("obligation"),
        "emotional_blackmail" => Some("fear_of_loss"),
        "moving_goalposts" => Some("standards_shifted"),
        "minimization" => Some("confusion"),
        _ => None,
    }
}

fn tactic_bank(tactic: &str) -> Option<&'static str> {
    match tactic {
        "gaslighting" => Some("reality_denial"),
        "guilt_induction" => Some("guilt"),
        "emotional_blackmail" => Some("conditional_threat"),
        "moving_goalposts" => Some("shifting_standards"),
        "minimization" => Some("minimization"),
        _ => None,
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    config: &'a Config,
    noise: bool,
}

impl Gen<'_> {
    fn self_turn(&mut self) -> Turn {
        Turn {
            speaker: Speaker::Me,
            text: (*SELF_TURNS.choose(&mut self.rng).expect("non-empty")).to_owned(),
        }
    }

    fn other(text: String) -> Turn {
        Turn {
            speaker: Speaker::Other,
            text,
        }
    }

    fn bank_turns(&mut self, bank: &str) -> Vec<Turn> {
        let entries = &self.config.kg.bank(bank).expect("generator banks exist").entries;
        let k = self.rng.random_range(1..=2);
        let picked: Vec<String> = entries.choose_multiple(&mut self.rng, k).cloned().collect();
        let mut turns = vec![self.self_turn()];
        for p in picked {
            let text = if self.noise { paraphrase(&p, &mut self.rng) } else { p };
            turns.push(Self::other(text));
            turns.push(self.self_turn());
        }
        turns
    }

    fn negative(&mut self) -> EmotionEntry {
        let term = *["fear", "sadness", "apprehension", "grief"].choose(&mut self.rng).expect("non-empty");
        let i = self.rng.random_range(0.6..0.95);
        emotion(term, i)
    }

    fn positive(&mut self) -> EmotionEntry {
        let term = *["joy", "trust", "serenity", "acceptance"].choose(&mut self.rng).expect("non-empty");
        let i = self.rng.random_range(0.6..0.95);
        emotion(term, i)
    }

    fn articulation(&mut self) -> Option<Articulation> {
        let c = self.rng.random_range(0.05..0.5);
        Some(Articulation {
            cause: Some("not sure why it bothered me".into()),
            confidence: (c * 100.0_f64).round() / 100.0,
        })
    }

    fn pooled_turns(&mut self, pool: &[&str]) -> Vec<Turn> {
        let text = (*pool.choose(&mut self.rng).expect("non-empty")).to_owned();
        vec![self.self_turn(), Self::other(text)]
    }

    fn tactic_vignette(&mut self, id: String, tactic: &str) -> Vignette {
        let mut history = Vec::new();
        let (turns, overlay) = if tactic == "intermittent_reinforcement" {
            let start_warm = self.rng.random::<bool>();
            for i in 0..5 {
                let warm = (i % 2 == 0) == start_warm;
                history.push(self.warm_or_cold(warm));
            }
            let main = self.warm_or_cold(!start_warm);
            (main.turns, main.overlay)
        } else {
            let bank = tactic_bank(tactic).expect("bank-backed tactic");
            let tag = tactic_cognition(tactic).expect("tag-backed tactic");
            if tactic == "moving_goalposts" {
                let earlier = self.rng.random_range(1..=2);
                for _ in 0..earlier {
                    let turns = self.bank_turns(bank);
                    let overlay = Overlay {
                        emotions: vec![self.negative()],
                        cognition_tags: vec![tag.to_owned()],
                        articulation: None,
                    };
                    history.push(Episode { turns, overlay });
                }
            }
            let turns = self.bank_turns(bank);
            let overlay = Overlay {
                emotions: vec![self.negative()],
                cognition_tags: vec![tag.to_owned()],
                articulation: self.articulation(),
            };
            (turns, overlay)
        };
        Vignette {
            id,
            history,
            turns,
            overlay,
            gold_tactics: vec![tactic.to_owned()],
            is_foil: false,
        }
    }

    fn warm_or_cold(&mut self, warm: bool) -> Episode {
        if warm {
            Episode {
                turns: self.pooled_turns(WARM_PHRASES),
                overlay: Overlay {
                    emotions: vec![self.positive()],
                    ..Overlay::default()
                },
            }
        } else {
            Episode {
                turns: self.pooled_turns(COLD_PHRASES),
                overlay: Overlay {
                    emotions: vec![self.negative()],
                    ..Overlay::default()
                },
            }
        }
    }

    fn foil(&mut self, id: String) -> Vignette {
        let k = self.rng.random_range(1..=2);
        let picked: Vec<&str> = FOIL_PHRASES.choose_multiple(&mut self.rng, k).copied().collect();
        let mut turns = vec![self.self_turn()];
        for p in picked {
            turns.push(Self::other(p.to_owned()));
        }
        let emotions = if self.rng.random::<bool>() {
            vec![self.positive()]
        } else {
            vec![emotion("interest", self.rng.random_range(0.2..0.6))]
        };
        Vignette {
            id,
            history: Vec::new(),
            turns,
            overlay: Overlay {
                emotions,
                cognition_tags: Vec::new(),
                articulation: Some(Articulation {
                    cause: Some("we disagreed about plans".into()),
                    confidence: 0.8,
                }),
            },
            gold_tactics: Vec::new(),
            is_foil: true,
        }
    }
}

/// Deterministic corpus for `spec`.
pub fn gen_corpus(spec: &CorpusSpec, config: &Config) -> Vec<Vignette> {
    let tactics = spec.tactic_ids(config);
    let foils = spec.foil_count().min(spec.n);
    let mut gen = Gen {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        config,
        noise: spec.noise,
    };
    let mut plan: Vec<Option<String>> = (0..spec.n - foils)
        .map(|i| Some(tactics[i % tactics.len()].clone()))
        .chain(std::iter::repeat_n(None, foils))
        .collect();
    plan.shuffle(&mut gen.rng);
    plan.into_iter()
        .enumerate()
        .map(|(i, slot)| {
            let id = format!("v{:04}", i + 1);
            match slot {
                Some(t) => gen.tactic_vignette(id, &t),
                None => gen.foil(id),
            }
        })
        .collect()
}

pub fn write_corpus<W: Write>(corpus: &[Vignette], mut w: W) -> std::io::Result<()> {
    for v in corpus {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<Vignette>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vignette = serde_json::from_str(&line).map_err(|e| BenchError::Corpus {
            line: i + 1,
            message: e.to_string(),
        })?;
        if v.is_foil && !v.gold_tactics.is_empty() {
            return Err(BenchError::Corpus {
                line: i + 1,
                message: "a foil cannot carry gold tactics".into(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Vignette>, BenchError> {
    read_corpus(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Full,
    KeywordOnly,
    NoMemory,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::Full, EvalMode::KeywordOnly, EvalMode::NoMemory];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Full => "full",
            EvalMode::KeywordOnly => "keyword_only",
            EvalMode::NoMemory => "no_memory",
        }
    }

    fn detect_mode(self) -> Mode {
        match self {
            EvalMode::Full | EvalMode::NoMemory => Mode::Full,
            EvalMode::KeywordOnly => Mode::KeywordOnly,
        }
    }

    fn uses_history(self) -> bool {
        self != EvalMode::NoMemory
    }
}

impl std::str::FromStr for EvalMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BenchError::Mode(s.to_owned()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TacticMetrics {
    pub tactic: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl TacticMetrics {
    fn from_counts(tactic: String, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            tactic,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// Nearest-rank percentile of an ascending sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            median_ms: percentile(&s, 50.0),
            p95_ms: percentile(&s, 95.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VignetteOutcome {
    pub id: String,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub is_foil: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub seed: Option<u64>,
    pub config_fingerprint: String,
    pub vignettes: usize,
    pub foils: usize,
    pub per_tactic: Vec<TacticMetrics>,
    pub micro_f1: f64,
    /// Mean F1 over tactics that have gold support or predictions.
    pub macro_f1: f64,
    pub foil_fpr: f64,
    pub latency: LatencySummary,
    pub outcomes: Vec<VignetteOutcome>,
}

/// Scores outcomes against their gold labels.
pub fn score_outcomes(tactics: &[String], outcomes: &[VignetteOutcome]) -> (Vec<TacticMetrics>, f64, f64, f64) {
    let per_tactic: Vec<TacticMetrics> = tactics
        .iter()
        .map(|t| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for o in outcomes {
                let gold = o.gold.contains(t);
                let pred = o.predicted.contains(t);
                match (gold, pred) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            TacticMetrics::from_counts(t.clone(), tp, fp, fn_)
        })
        .collect();
    let (tp, fp, fn_) = per_tactic
        .iter()
        .fold((0, 0, 0), |acc, m| (acc.0 + m.tp, acc.1 + m.fp, acc.2 + m.fn_));
    let micro = f1(ratio(tp, tp + fp), ratio(tp, tp + fn_));
    let counted: Vec<f64> = per_tactic
        .iter()
        .filter(|m| m.support() > 0 || m.fp > 0)
        .map(|m| m.f1)
        .collect();
    let macro_f1 = if counted.is_empty() {
        0.0
    } else {
        counted.iter().sum::<f64>() / counted.len() as f64
    };
    let foils: Vec<&VignetteOutcome> = outcomes.iter().filter(|o| o.is_foil).collect();
    let foil_fpr = ratio(foils.iter().filter(|o| !o.predicted.is_empty()).count(), foils.len());
    (per_tactic, micro, macro_f1, foil_fpr)
}

/// Builds the vignette's graph and returns the fired tactics plus the
/// detection wall time in milliseconds.
pub fn evaluate_vignette(
    vignette: &Vignette,
    detector: &Detector,
    config: &Config,
    mode: EvalMode,
) -> Result<(Vec<String>, f64), BenchError> {
    let base: DateTime<Utc> = DateTime::from_timestamp(1_704_067_200, 0).expect("valid epoch");
    let mut graph = Graph::new();
    let user = user_node(&mut graph)?;
    let partner = add_partner(&mut graph, "partner")?;
    let mut episodes: Vec<Episode> = if mode.uses_history() {
        vignette.history.clone()
    } else {
        Vec::new()
    };
    episodes.push(vignette.main_episode());
    let mut event = None;
    for (i, ep) in episodes.iter().enumerate() {
        let sub = ep.submission(PartnerRef::Id(partner), base + Duration::days(i as i64));
        sub.validate(&config.kg)?;
        event = Some(enrich(&mut graph, &config.kg, user, &sub)?);
    }
    let event = event.expect("main episode is always logged");
    let start = Instant::now();
    let detections = detector
        .detect(event, &graph, &BTreeMap::new(), mode.detect_mode())
        .map_err(AgentError::from)?;
    let elapsed = start.elapsed().as_secs_f64() * 1000.0;
    let predicted = detections
        .into_iter()
        .filter(|d| d.fired)
        .map(|d| d.tactic_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((predicted, elapsed))
}

pub fn run_eval(corpus: &[Vignette], config: &Config, detector: &Detector, mode: EvalMode, seed: Option<u64>) -> Result<EvalReport, BenchError> {
    let mut outcomes = Vec::with_capacity(corpus.len());
    let mut latencies = Vec::with_capacity(corpus.len());
    for v in corpus {
        let (predicted, ms) = evaluate_vignette(v, detector, config, mode)?;
        latencies.push(ms);
        outcomes.push(VignetteOutcome {
            id: v.id.clone(),
            gold: v.gold_tactics.clone(),
            predicted,
            is_foil: v.is_foil,
        });
    }
    let tactics: Vec<String> = config.kg.tactics().iter().map(|t| t.id.clone()).collect();
    let (per_tactic, micro_f1, macro_f1, foil_fpr) = score_outcomes(&tactics, &outcomes);
    Ok(EvalReport {
        mode,
        seed,
        config_fingerprint: config.fingerprint().to_owned(),
        vignettes: corpus.len(),
        foils: corpus.iter().filter(|v| v.is_foil).count(),
        per_tactic,
        micro_f1,
        macro_f1,
        foil_fpr,
        latency: LatencySummary::from_samples(&latencies),
        outcomes,
    })
}

/// Markdown report covering one or more modes.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    s.push_str("# EchoGuard detection benchmark\n\n");
    s.push_str(
        "Machine-evaluable baselines and ablations only; no human-subject condition is reproduced. \
         `full` is the hybrid graph and similarity engine with per-vignette memory, `keyword_only` \
         replaces similarity with exact keyword matching, and `no_memory` analyzes each interaction \
         in isolation as a flat log would.\n\n",
    );
    if let Some(r) = reports.first() {
        let seed = r.seed.map_or("n/a".to_owned(), |s| s.to_string());
        let _ = writeln!(s, "- config: `{}`", r.config_fingerprint);
        let _ = writeln!(s, "- seed: {seed}");
        let _ = writeln!(s, "- vignettes: {} ({} foils)\n", r.vignettes, r.foils);
    }
    s.push_str("## Summary\n\n| mode | macro F1 | micro F1 | foil FPR | median ms | p95 ms |\n|---|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | {:.4} | {:.3} | {:.3} |",
            r.mode.as_str(),
            r.macro_f1,
            r.micro_f1,
            r.foil_fpr,
            r.latency.median_ms,
            r.latency.p95_ms
        );
    }
    for r in reports {
        let _ = writeln!(s, "\n## Per-tactic metrics: {}\n", r.mode.as_str());
        s.push_str("| tactic | tp | fp | fn | precision | recall | F1 |\n|---|---|---|---|---|---|---|\n");
        for m in &r.per_tactic {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} |",
                m.tactic, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            );
        }
    }
    s
}

/// CSV with one row per (mode, tactic) plus aggregate rows.
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("mode,metric,tactic,tp,fp,fn,precision,recall,f1,value\n");
    for r in reports {
        let mode = r.mode.as_str();
        for m in &r.per_tactic {
            let _ = writeln!(
                s,
                "{mode},tactic,{},{},{},{},{},{},{},",
                m.tactic, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            );
        }
        for (metric, value) in [
            ("macro_f1", r.macro_f1),
            ("micro_f1", r.micro_f1),
            ("foil_fpr", r.foil_fpr),
            ("latency_median_ms", r.latency.median_ms),
            ("latency_p95_ms", r.latency.p95_ms),
        ] {
            let _ = writeln!(s, "{mode},{metric},,,,,,,,{value}");
        }
    }
    s
}
