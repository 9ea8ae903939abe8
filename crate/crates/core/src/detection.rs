//! Marker scoring, confidence fusion, longitudinal detectors and the
//! awareness-gap signature.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{best_match, normalize_tokens, Embedding, EmbeddingProvider};
use crate::graph::{Direction, EdgeId, EdgeLabel, Graph, GraphError, Node, NodeId, NodeLabel};
use crate::ontology::{LongitudinalDetector, MarkerDef, MarkerKind, Octant, SemanticKg, TacticDef, Valence};
use crate::query::{QueryError, SimilarityProvider};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("{0}")]
    NotFound(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl From<GraphError> for DetectError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::NotFound(m) => DetectError::NotFound(m),
            other => DetectError::Config(other.to_string()),
        }
    }
}

/// Tunable constants of the detectors. Every field has a default, so a
/// partial JSON object is a valid override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    /// g*: a gap at or above this value is flagged.
    pub gap_threshold: f64,
    pub alternation_window: usize,
    pub alternation_min_rate: f64,
    pub alternation_min_len: usize,
    /// Each sign must occur at least this often.
    pub alternation_min_each: usize,
    pub escalation_window: usize,
    pub escalation_min_slope: f64,
    pub escalation_min_len: usize,
    pub repeat_window: usize,
    pub repeat_min_count: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            gap_threshold: 0.4,
            alternation_window: 6,
            alternation_min_rate: 0.5,
            alternation_min_len: 6,
            alternation_min_each: 2,
            escalation_window: 8,
            escalation_min_slope: 0.05,
            escalation_min_len: 4,
            repeat_window: 6,
            repeat_min_count: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    ClearCutOnly,
    KeywordOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::ClearCutOnly => "clear_cut_only",
            Mode::KeywordOnly => "keyword_only",
        }
    }

    pub fn longitudinal(self) -> bool {
        self == Mode::Full
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "clear_cut_only" => Ok(Mode::ClearCutOnly),
            "keyword_only" => Ok(Mode::KeywordOnly),
            other => Err(DetectError::Usage(format!("unknown detection mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PhraseEvidence {
    pub phrase_node: NodeId,
    pub text: String,
    pub best_entry: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Evidence {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phrases: Vec<PhraseEvidence>,
}

impl Evidence {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MarkerScore {
    pub marker_id: String,
    pub kind: String,
    pub weight: f64,
    pub score: f64,
    /// False when the mode skipped this marker; its score is then 0.
    pub evaluated: bool,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Subgraph {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TacticDetection {
    pub tactic_id: String,
    pub confidence: f64,
    pub fired: bool,
    pub threshold_used: f64,
    pub marker_scores: Vec<MarkerScore>,
    pub evidence_subgraph: Subgraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AwarenessGapSignal {
    pub event_id: NodeId,
    pub distress: f64,
    pub articulation: f64,
    pub gap: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LongitudinalResult {
    pub detector: LongitudinalDetector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_id: Option<NodeId>,
    pub window_events: Vec<NodeId>,
    pub statistic: f64,
    pub fired: bool,
}

/// Weighted mean Σ wᵢ·sᵢ / Σ wᵢ over the tactic's markers.
pub fn tactic_confidence(weights_and_scores: &[(f64, f64)]) -> f64 {
    let total: f64 = weights_and_scores.iter().map(|(w, _)| w).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = weights_and_scores.iter().map(|(w, s)| w * s).sum();
    (weighted / total).clamp(0.0, 1.0)
}

/// Per-event affect summary used by the longitudinal detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFeatures {
    pub event: NodeId,
    pub max_positive: f64,
    pub max_negative: f64,
    pub standards_shifted: bool,
}

impl EventFeatures {
    pub fn extract(graph: &Graph, event: NodeId) -> Result<Self, DetectError> {
        let mut f = EventFeatures {
            event,
            max_positive: 0.0,
            max_negative: 0.0,
            standards_shifted: false,
        };
        for (edge, node) in graph.neighbors(event, Some(EdgeLabel::FeltEmotion), Direction::Outgoing)? {
            let intensity = edge.number("intensity").unwrap_or(0.0);
            match node.text("valence").and_then(Valence::parse) {
                Some(Valence::Positive) => f.max_positive = f.max_positive.max(intensity),
                Some(Valence::Negative) => f.max_negative = f.max_negative.max(intensity),
                _ => {}
            }
        }
        f.standards_shifted = graph
            .neighbors(event, Some(EdgeLabel::HasCognition), Direction::Outgoing)?
            .iter()
            .any(|(_, n)| n.text("name") == Some("standards_shifted"));
        Ok(f)
    }

    /// Distress is the strongest negative emotion.
    pub fn distress(&self) -> f64 {
        self.max_negative
    }

    /// +1, -1, or None for ties and events without valenced emotion.
    pub fn valence_sign(&self) -> Option<i8> {
        match self.max_positive.partial_cmp(&self.max_negative) {
            Some(std::cmp::Ordering::Greater) => Some(1),
            Some(std::cmp::Ordering::Less) => Some(-1),
            _ => None,
        }
    }
}

fn last_n(events: &[EventFeatures], n: usize) -> &[EventFeatures] {
    &events[events.len().saturating_sub(n)..]
}

pub fn valence_alternation(events: &[EventFeatures], window: usize, params: &DetectionParams, min_rate: f64) -> LongitudinalResult {
    let window = last_n(events, window);
    let signs: Vec<i8> = window.iter().filter_map(EventFeatures::valence_sign).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let rate = if signs.len() >= 2 {
        changes as f64 / (signs.len() - 1) as f64
    } else {
        0.0
    };
    let pos = signs.iter().filter(|s| **s > 0).count();
    let neg = signs.len() - pos;
    LongitudinalResult {
        detector: LongitudinalDetector::ValenceAlternation,
        partner_id: None,
        window_events: window.iter().map(|e| e.event).collect(),
        statistic: rate,
        fired: signs.len() >= params.alternation_min_len
            && rate >= min_rate
            && pos >= params.alternation_min_each
            && neg >= params.alternation_min_each,
    }
}

/// Least-squares slope of `ys` against 0-based index.
pub fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

pub fn escalation(events: &[EventFeatures], window: usize, params: &DetectionParams, min_slope: f64) -> LongitudinalResult {
    let window = last_n(events, window);
    let distress: Vec<f64> = window.iter().map(EventFeatures::distress).collect();
    let slope = ls_slope(&distress);
    LongitudinalResult {
        detector: LongitudinalDetector::Escalation,
        partner_id: None,
        window_events: window.iter().map(|e| e.event).collect(),
        statistic: slope,
        fired: distress.len() >= params.escalation_min_len && slope >= min_slope,
    }
}

pub fn repeat_unmet(events: &[EventFeatures], window: usize, min_count: f64) -> LongitudinalResult {
    let window = last_n(events, window);
    let count = window.iter().filter(|e| e.standards_shifted).count() as f64;
    LongitudinalResult {
        detector: LongitudinalDetector::RepeatUnmet,
        partner_id: None,
        window_events: window.iter().map(|e| e.event).collect(),
        statistic: count,
        fired: count >= min_count,
    }
}

/// Distress minus articulation for one event.
pub fn awareness_gap(graph: &Graph, event: NodeId, gap_threshold: f64) -> Result<AwarenessGapSignal, DetectError> {
    let distress = EventFeatures::extract(graph, event)?.distress();
    let articulation = graph
        .neighbors(event, Some(EdgeLabel::ArticulatedCause), Direction::Outgoing)?
        .first()
        .and_then(|(e, _)| e.number("confidence"))
        .unwrap_or(0.0);
    let gap = distress - articulation;
    Ok(AwarenessGapSignal {
        event_id: event,
        distress,
        articulation,
        gap,
        flagged: gap >= gap_threshold,
    })
}

/// The partner's events up to and including `event`, oldest first.
pub fn history_for(graph: &Graph, event: NodeId) -> Result<(Option<NodeId>, Vec<EventFeatures>), DetectError> {
    let partner = graph
        .neighbors(event, Some(EdgeLabel::AboutPartner), Direction::Outgoing)?
        .first()
        .map(|(_, n)| n.id);
    let user = graph
        .neighbors(event, Some(EdgeLabel::ParticipatedIn), Direction::Incoming)?
        .first()
        .map(|(_, n)| n.id);
    let (Some(partner), Some(user)) = (partner, user) else {
        return Ok((partner, vec![EventFeatures::extract(graph, event)?]));
    };
    let events = graph.events_for_partner(user, partner)?;
    let end = events.iter().position(|n| n.id == event).map_or(events.len(), |i| i + 1);
    let features = events[..end]
        .iter()
        .map(|n| EventFeatures::extract(graph, n.id))
        .collect::<Result<_, _>>()?;
    Ok((Some(partner), features))
}

fn keyword_hit(phrase_tokens: &[String], entry_tokens: &[String]) -> bool {
    !entry_tokens.is_empty()
        && phrase_tokens
            .windows(entry_tokens.len())
            .any(|w| w == entry_tokens)
}

/// Detection engine bound to one semantic KG and embedding provider. Bank
/// entry vectors are computed once at construction.
pub struct Detector {
    kg: Arc<SemanticKg>,
    provider: Arc<dyn EmbeddingProvider>,
    params: DetectionParams,
    bank_vectors: BTreeMap<String, Vec<Embedding>>,
    bank_tokens: BTreeMap<String, Vec<Vec<String>>>,
}

impl fmt::Debug for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detector")
            .field("provider", &self.provider.provider_id())
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl Detector {
    pub fn new(kg: Arc<SemanticKg>, provider: Arc<dyn EmbeddingProvider>, params: DetectionParams) -> Self {
        let bank_vectors = kg
            .banks()
            .iter()
            .map(|b| (b.id.clone(), provider.embed_batch(&b.entries)))
            .collect();
        let bank_tokens = kg
            .banks()
            .iter()
            .map(|b| (b.id.clone(), b.entries.iter().map(|e| normalize_tokens(e)).collect()))
            .collect();
        Self {
            kg,
            provider,
            params,
            bank_vectors,
            bank_tokens,
        }
    }

    pub fn kg(&self) -> &SemanticKg {
        &self.kg
    }

    pub fn params(&self) -> &DetectionParams {
        &self.params
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    /// Clipped best cosine of `text` against a bank, with the matched entry.
    pub fn phrase_similarity(&self, text: &str, bank: &str) -> Result<(f64, String), DetectError> {
        let def = self
            .kg
            .bank(bank)
            .ok_or_else(|| DetectError::Config(format!("unknown bank `{bank}`")))?;
        let m = best_match(&self.provider.embed(text), bank, &def.entries, &self.bank_vectors[bank])
            .map_err(|e| DetectError::Config(e.to_string()))?;
        Ok((m.score.max(0.0), m.best_entry))
    }

    fn score_phrase_bank(&self, graph: &Graph, event: NodeId, bank: &str, mode: Mode) -> Result<(f64, Evidence), DetectError> {
        let def = self
            .kg
            .bank(bank)
            .ok_or_else(|| DetectError::Config(format!("unknown bank `{bank}`")))?;
        let mut ev = Evidence::default();
        let mut best = 0.0f64;
        for (edge, node) in graph.neighbors(event, Some(EdgeLabel::ContainsPhrase), Direction::Outgoing)? {
            let Some(text) = node.text("text") else { continue };
            let (sim, entry) = match mode {
                Mode::Full => self.phrase_similarity(text, bank)?,
                Mode::ClearCutOnly | Mode::KeywordOnly => {
                    let tokens = normalize_tokens(text);
                    let hit = self.bank_tokens[bank].iter().position(|e| match mode {
                        Mode::ClearCutOnly => !e.is_empty() && *e == tokens,
                        _ => keyword_hit(&tokens, e),
                    });
                    match hit {
                        Some(i) => (1.0, def.entries[i].clone()),
                        None => (0.0, String::new()),
                    }
                }
            };
            if sim > 0.0 && sim >= def.sim_threshold {
                best = best.max(sim);
                ev.nodes.push(node.id);
                ev.edges.push(edge.id);
                ev.phrases.push(PhraseEvidence {
                    phrase_node: node.id,
                    text: text.to_owned(),
                    best_entry: entry,
                    similarity: sim,
                });
            }
        }
        Ok((best, ev))
    }

    fn run_longitudinal(
        &self,
        detector: LongitudinalDetector,
        partner: Option<NodeId>,
        history: &[EventFeatures],
        window: Option<usize>,
        threshold: Option<f64>,
    ) -> LongitudinalResult {
        let p = &self.params;
        let mut r = match detector {
            LongitudinalDetector::ValenceAlternation => valence_alternation(
                history,
                window.unwrap_or(p.alternation_window),
                p,
                threshold.unwrap_or(p.alternation_min_rate),
            ),
            LongitudinalDetector::Escalation => escalation(
                history,
                window.unwrap_or(p.escalation_window),
                p,
                threshold.unwrap_or(p.escalation_min_slope),
            ),
            LongitudinalDetector::RepeatUnmet => repeat_unmet(
                history,
                window.unwrap_or(p.repeat_window),
                threshold.unwrap_or(p.repeat_min_count as f64),
            ),
        };
        r.partner_id = partner;
        r
    }

    /// Scores one marker against one event. Longitudinal markers read the
    /// partner history ending at `event`.
    pub fn score_marker(&self, marker: &MarkerDef, event: NodeId, graph: &Graph, mode: Mode) -> Result<MarkerScore, DetectError> {
        let event_node = graph.require_node(event)?;
        if event_node.label != NodeLabel::InteractionEvent {
            return Err(DetectError::NotFound(format!("node {event} is not an interaction event")));
        }
        let evaluated = match mode {
            Mode::Full => true,
            Mode::ClearCutOnly => marker.clear_cut && !matches!(marker.kind, MarkerKind::Longitudinal { .. }),
            Mode::KeywordOnly => !matches!(marker.kind, MarkerKind::Longitudinal { .. }),
        };
        let mut out = MarkerScore {
            marker_id: marker.id.clone(),
            kind: marker.kind.name().to_owned(),
            weight: marker.weight,
            score: 0.0,
            evaluated,
            evidence: Evidence::default(),
        };
        if !evaluated {
            return Ok(out);
        }
        match &marker.kind {
            MarkerKind::Cognition { tag } => {
                for (edge, node) in graph.neighbors(event, Some(EdgeLabel::HasCognition), Direction::Outgoing)? {
                    if node.text("name") == Some(tag.as_str()) {
                        out.score = 1.0;
                        out.evidence.nodes.push(node.id);
                        out.evidence.edges.push(edge.id);
                    }
                }
            }
            MarkerKind::Emotion { octant, min_intensity } => {
                for (edge, node) in graph.neighbors(event, Some(EdgeLabel::FeltEmotion), Direction::Outgoing)? {
                    let intensity = edge.number("intensity").unwrap_or(0.0);
                    if emotion_octant(node) == Some(*octant) && intensity >= *min_intensity && intensity > 0.0 {
                        out.score = out.score.max(intensity);
                        out.evidence.nodes.push(node.id);
                        out.evidence.edges.push(edge.id);
                    }
                }
            }
            MarkerKind::PhraseBank { bank } => {
                let (score, evidence) = self.score_phrase_bank(graph, event, bank, mode)?;
                out.score = score;
                out.evidence = evidence;
            }
            MarkerKind::Longitudinal {
                detector,
                window,
                threshold,
            } => {
                let (partner, history) = history_for(graph, event)?;
                let r = self.run_longitudinal(*detector, partner, &history, *window, *threshold);
                if r.fired {
                    out.score = 1.0;
                    out.evidence.nodes = r.window_events;
                }
            }
        }
        Ok(out)
    }

    pub fn detect_tactic(
        &self,
        tactic: &TacticDef,
        event: NodeId,
        graph: &Graph,
        threshold: f64,
        mode: Mode,
    ) -> Result<TacticDetection, DetectError> {
        let marker_scores = tactic
            .markers
            .iter()
            .map(|m| self.score_marker(m, event, graph, mode))
            .collect::<Result<Vec<_>, _>>()?;
        let pairs: Vec<(f64, f64)> = marker_scores.iter().map(|m| (m.weight, m.score)).collect();
        let confidence = tactic_confidence(&pairs);
        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for m in &marker_scores {
            nodes.extend(m.evidence.nodes.iter().copied());
            edges.extend(m.evidence.edges.iter().copied());
        }
        Ok(TacticDetection {
            tactic_id: tactic.id.clone(),
            confidence,
            fired: confidence >= threshold,
            threshold_used: threshold,
            marker_scores,
            evidence_subgraph: Subgraph {
                nodes: nodes.into_iter().collect(),
                edges: edges.into_iter().collect(),
            },
        })
    }

    /// All tactics for one event, by confidence descending then tactic id.
    /// Thresholds missing from `thresholds` fall back to the tactic default.
    pub fn detect(
        &self,
        event: NodeId,
        graph: &Graph,
        thresholds: &BTreeMap<String, f64>,
        mode: Mode,
    ) -> Result<Vec<TacticDetection>, DetectError> {
        let mut out = self
            .kg
            .tactics()
            .iter()
            .map(|t| {
                let theta = thresholds.get(&t.id).copied().unwrap_or(t.default_threshold);
                self.detect_tactic(t, event, graph, theta, mode)
            })
            .collect::<Result<Vec<_>, _>>()?;
        sort_detections(&mut out);
        Ok(out)
    }

    /// Runs every longitudinal detector with its configured defaults.
    pub fn longitudinal(&self, event: NodeId, graph: &Graph) -> Result<Vec<LongitudinalResult>, DetectError> {
        let (partner, history) = history_for(graph, event)?;
        Ok(LongitudinalDetector::ALL
            .iter()
            .map(|d| self.run_longitudinal(*d, partner, &history, None, None))
            .collect())
    }

    pub fn awareness_gap(&self, graph: &Graph, event: NodeId) -> Result<AwarenessGapSignal, DetectError> {
        awareness_gap(graph, event, self.params.gap_threshold)
    }
}

pub fn sort_detections(detections: &mut [TacticDetection]) {
    detections.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.tactic_id.cmp(&b.tactic_id))
    });
}

fn emotion_octant(node: &Node) -> Option<Octant> {
    let name = node.text("octant")?;
    Octant::ALL.iter().copied().find(|o| o.as_str() == name)
}

/// Lets pattern queries call `sim(p, bank("id"))` with this engine's scores.
impl SimilarityProvider for Detector {
    fn has_bank(&self, bank: &str) -> bool {
        self.kg.bank(bank).is_some()
    }

    fn similarity(&self, node: &Node, bank: &str) -> Result<f64, QueryError> {
        let Some(text) = node.text("text") else {
            return Ok(0.0);
        };
        self.phrase_similarity(text, bank)
            .map(|(s, _)| s)
            .map_err(|e| QueryError::Config(e.to_string()))
    }
}

/// The pattern query equivalent to a per-event marker, if there is one.
/// Each binding's `e` is an event for which the marker scores above zero.
pub fn marker_query(marker: &MarkerDef, kg: &SemanticKg) -> Option<String> {
    let quote = |s: &str| serde_json::to_string(s).expect("string serializes");
    match &marker.kind {
        MarkerKind::Cognition { tag } => Some(format!(
            "MATCH (e:InteractionEvent)-[:has_cognition]->(c:Cognition {{name: {}}}) RETURN e",
            quote(tag)
        )),
        MarkerKind::PhraseBank { bank } => {
            let threshold = kg.bank(bank)?.sim_threshold;
            Some(format!(
                "MATCH (e:InteractionEvent)-[:contains_phrase]->(p:Phrase) WHERE sim(p, bank({})) >= {threshold:?} AND sim(p, bank({})) > 0.0 RETURN e",
                quote(bank),
                quote(bank)
            ))
        }
        // Edge intensities are not addressable from the query language.
        MarkerKind::Emotion { .. } | MarkerKind::Longitudinal { .. } => None,
    }
}
