//! Emotion and cognition vocabularies plus the semantic graph of tactics,
//! their indicator markers and phrase banks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attrs;
use crate::graph::{EdgeLabel, Graph, NodeId, NodeLabel};

const DEFAULT_CONFIG: &str = include_str!("../../../config/default_tactics.json");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid JSON at {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("{path}: duplicate id `{id}`")]
    DuplicateId { path: String, id: String },
    #[error("{path}: marker weight must be positive")]
    NonPositiveWeight { path: String },
    #[error("{path}: threshold {value} outside its allowed range {range}")]
    ThresholdOutOfRange { path: String, value: f64, range: &'static str },
    #[error("{path}: phrase bank has no entries")]
    EmptyBank { path: String },
    #[error("{path}: unknown cognition tag `{tag}`")]
    UnknownCognitionTag { path: String, tag: String },
    #[error("{path}: unknown phrase bank `{bank}`")]
    UnknownBank { path: String, bank: String },
    #[error("{path}: unknown emotion `{term}`")]
    UnknownEmotion { path: String, term: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Octant {
    Joy,
    Trust,
    Fear,
    Surprise,
    Sadness,
    Disgust,
    Anger,
    Anticipation,
}

impl Octant {
    pub const ALL: [Octant; 8] = [
        Octant::Joy,
        Octant::Trust,
        Octant::Fear,
        Octant::Surprise,
        Octant::Sadness,
        Octant::Disgust,
        Octant::Anger,
        Octant::Anticipation,
    ];

    pub fn valence(self) -> Valence {
        match self {
            Octant::Joy | Octant::Trust => Valence::Positive,
            Octant::Fear | Octant::Sadness | Octant::Disgust | Octant::Anger => Valence::Negative,
            Octant::Surprise | Octant::Anticipation => Valence::Ambiguous,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Octant::Joy => "joy",
            Octant::Trust => "trust",
            Octant::Fear => "fear",
            Octant::Surprise => "surprise",
            Octant::Sadness => "sadness",
            Octant::Disgust => "disgust",
            Octant::Anger => "anger",
            Octant::Anticipation => "anticipation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IntensityLevel {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Positive,
    Negative,
    Ambiguous,
}

impl Valence {
    pub fn as_str(self) -> &'static str {
        match self {
            Valence::Positive => "positive",
            Valence::Negative => "negative",
            Valence::Ambiguous => "ambiguous",
        }
    }

    pub fn parse(s: &str) -> Option<Valence> {
        match s {
            "positive" => Some(Valence::Positive),
            "negative" => Some(Valence::Negative),
            "ambiguous" => Some(Valence::Ambiguous),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct EmotionTerm {
    pub name: String,
    pub octant: Octant,
    pub intensity_level: IntensityLevel,
    pub valence: Valence,
}

/// The 24 terms of the wheel: three intensity levels per primary.
pub fn plutchik_terms() -> Vec<EmotionTerm> {
    const TABLE: [(Octant, [&str; 3]); 8] = [
        (Octant::Joy, ["serenity", "joy", "ecstasy"]),
        (Octant::Trust, ["acceptance", "trust", "admiration"]),
        (Octant::Fear, ["apprehension", "fear", "terror"]),
        (Octant::Surprise, ["distraction", "surprise", "amazement"]),
        (Octant::Sadness, ["pensiveness", "sadness", "grief"]),
        (Octant::Disgust, ["boredom", "disgust", "loathing"]),
        (Octant::Anger, ["annoyance", "anger", "rage"]),
        (Octant::Anticipation, ["interest", "anticipation", "vigilance"]),
    ];
    let levels = [IntensityLevel::Low, IntensityLevel::Medium, IntensityLevel::High];
    TABLE
        .iter()
        .flat_map(|(octant, names)| {
            names.iter().zip(levels).map(|(name, level)| EmotionTerm {
                name: (*name).to_owned(),
                octant: *octant,
                intensity_level: level,
                valence: octant.valence(),
            })
        })
        .collect()
}

pub const BUILTIN_COGNITIONS: [&str; 6] = [
    "self_doubt",
    "confusion",
    "obligation",
    "fear_of_loss",
    "standards_shifted",
    "worthlessness",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct PhraseBank {
    pub id: String,
    pub entries: Vec<String>,
    #[serde(default = "default_sim_threshold")]
    pub sim_threshold: f64,
}

fn default_sim_threshold() -> f64 {
    0.55
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum LongitudinalDetector {
    ValenceAlternation,
    Escalation,
    RepeatUnmet,
}

impl LongitudinalDetector {
    pub const ALL: [LongitudinalDetector; 3] = [
        LongitudinalDetector::ValenceAlternation,
        LongitudinalDetector::Escalation,
        LongitudinalDetector::RepeatUnmet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LongitudinalDetector::ValenceAlternation => "valence_alternation",
            LongitudinalDetector::Escalation => "escalation",
            LongitudinalDetector::RepeatUnmet => "repeat_unmet",
        }
    }
}

impl fmt::Display for LongitudinalDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkerKind {
    Cognition {
        tag: String,
    },
    Emotion {
        octant: Octant,
        #[serde(default)]
        min_intensity: f64,
    },
    PhraseBank {
        bank: String,
    },
    /// `window` and `threshold` override the detector's configured window and
    /// firing statistic (alternation rate, slope or repeat count).
    Longitudinal {
        detector: LongitudinalDetector,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
}

impl MarkerKind {
    pub fn name(&self) -> &'static str {
        match self {
            MarkerKind::Cognition { .. } => "cognition",
            MarkerKind::Emotion { .. } => "emotion",
            MarkerKind::PhraseBank { .. } => "phrase_bank",
            MarkerKind::Longitudinal { .. } => "longitudinal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct MarkerDef {
    pub id: String,
    #[serde(flatten)]
    pub kind: MarkerKind,
    pub weight: f64,
    #[serde(default)]
    pub clear_cut: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct TacticDef {
    pub id: String,
    pub display_name: String,
    pub markers: Vec<MarkerDef>,
    pub default_threshold: f64,
}

/// The serialized form of the ontology part of a config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotions: Option<Vec<EmotionTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitions: Option<Vec<String>>,
    pub banks: Vec<PhraseBank>,
    pub tactics: Vec<TacticDef>,
}

/// Validated, read-only tactic knowledge.
#[derive(Debug, Clone)]
pub struct SemanticKg {
    doc: OntologyDoc,
    emotions: Vec<EmotionTerm>,
    cognitions: Vec<String>,
    graph: Graph,
    tactic_nodes: BTreeMap<String, NodeId>,
}

impl PartialEq for SemanticKg {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = (String, &'a str)>) -> Result<(), ConfigError> {
    let mut seen = BTreeSet::new();
    for (path, id) in ids {
        if !seen.insert(id) {
            return Err(ConfigError::DuplicateId { path, id: id.to_owned() });
        }
    }
    Ok(())
}

impl SemanticKg {
    pub fn from_doc(doc: OntologyDoc) -> Result<Self, ConfigError> {
        let emotions = doc.emotions.clone().unwrap_or_else(plutchik_terms);
        let cognitions = doc
            .cognitions
            .clone()
            .unwrap_or_else(|| BUILTIN_COGNITIONS.iter().map(|s| (*s).to_owned()).collect());

        check_unique(emotions.iter().enumerate().map(|(i, e)| (format!("emotions[{i}].name"), e.name.as_str())))?;
        for (i, e) in emotions.iter().enumerate() {
            if e.valence != e.octant.valence() {
                return Err(ConfigError::Invalid {
                    path: format!("emotions[{i}].valence"),
                    message: format!("valence of the {} octant is fixed", e.octant.as_str()),
                });
            }
        }
        check_unique(cognitions.iter().enumerate().map(|(i, c)| (format!("cognitions[{i}]"), c.as_str())))?;

        check_unique(doc.banks.iter().enumerate().map(|(i, b)| (format!("banks[{i}].id"), b.id.as_str())))?;
        for (i, bank) in doc.banks.iter().enumerate() {
            if bank.entries.is_empty() {
                return Err(ConfigError::EmptyBank { path: format!("banks[{i}].entries") });
            }
            if !(bank.sim_threshold > 0.0 && bank.sim_threshold <= 1.0) {
                return Err(ConfigError::ThresholdOutOfRange {
                    path: format!("banks[{i}].sim_threshold"),
                    value: bank.sim_threshold,
                    range: "(0, 1]",
                });
            }
        }

        check_unique(doc.tactics.iter().enumerate().map(|(i, t)| (format!("tactics[{i}].id"), t.id.as_str())))?;
        for (ti, tactic) in doc.tactics.iter().enumerate() {
            let tpath = format!("tactics[{ti}]");
            if !(tactic.default_threshold > 0.0 && tactic.default_threshold < 1.0) {
                return Err(ConfigError::ThresholdOutOfRange {
                    path: format!("{tpath}.default_threshold"),
                    value: tactic.default_threshold,
                    range: "(0, 1)",
                });
            }
            if tactic.markers.is_empty() {
                return Err(ConfigError::Invalid {
                    path: format!("{tpath}.markers"),
                    message: "a tactic needs at least one marker".into(),
                });
            }
            check_unique(
                tactic
                    .markers
                    .iter()
                    .enumerate()
                    .map(|(mi, m)| (format!("{tpath}.markers[{mi}].id"), m.id.as_str())),
            )?;
            for (mi, marker) in tactic.markers.iter().enumerate() {
                let mpath = format!("{tpath}.markers[{mi}]");
                if !(marker.weight > 0.0 && marker.weight.is_finite()) {
                    return Err(ConfigError::NonPositiveWeight { path: format!("{mpath}.weight") });
                }
                match &marker.kind {
                    MarkerKind::Cognition { tag } => {
                        if !cognitions.iter().any(|c| c == tag) {
                            return Err(ConfigError::UnknownCognitionTag {
                                path: format!("{mpath}.tag"),
                                tag: tag.clone(),
                            });
                        }
                    }
                    MarkerKind::Emotion { min_intensity, .. } => {
                        if !(0.0..=1.0).contains(min_intensity) {
                            return Err(ConfigError::ThresholdOutOfRange {
                                path: format!("{mpath}.min_intensity"),
                                value: *min_intensity,
                                range: "[0, 1]",
                            });
                        }
                    }
                    MarkerKind::PhraseBank { bank } => {
                        if !doc.banks.iter().any(|b| &b.id == bank) {
                            return Err(ConfigError::UnknownBank {
                                path: format!("{mpath}.bank"),
                                bank: bank.clone(),
                            });
                        }
                    }
                    MarkerKind::Longitudinal { window, threshold, .. } => {
                        if window.is_some_and(|w| w < 2) {
                            return Err(ConfigError::Invalid {
                                path: format!("{mpath}.window"),
                                message: "window must hold at least 2 events".into(),
                            });
                        }
                        if threshold.is_some_and(|t| !t.is_finite()) {
                            return Err(ConfigError::Invalid {
                                path: format!("{mpath}.threshold"),
                                message: "threshold must be finite".into(),
                            });
                        }
                    }
                }
            }
        }

        let (graph, tactic_nodes) = materialize(&doc.tactics);
        Ok(SemanticKg {
            doc,
            emotions,
            cognitions,
            graph,
            tactic_nodes,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: OntologyDoc = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        Self::from_doc(doc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn doc(&self) -> &OntologyDoc {
        &self.doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("ontology serializes")
    }

    pub fn tactics(&self) -> &[TacticDef] {
        &self.doc.tactics
    }

    pub fn tactic(&self, id: &str) -> Option<&TacticDef> {
        self.doc.tactics.iter().find(|t| t.id == id)
    }

    pub fn banks(&self) -> &[PhraseBank] {
        &self.doc.banks
    }

    pub fn bank(&self, id: &str) -> Option<&PhraseBank> {
        self.doc.banks.iter().find(|b| b.id == id)
    }

    pub fn emotions(&self) -> &[EmotionTerm] {
        &self.emotions
    }

    pub fn emotion(&self, name: &str) -> Option<&EmotionTerm> {
        self.emotions.iter().find(|e| e.name == name)
    }

    pub fn cognitions(&self) -> &[String] {
        &self.cognitions
    }

    pub fn is_cognition(&self, tag: &str) -> bool {
        self.cognitions.iter().any(|c| c == tag)
    }

    /// Read-only graph of `Tactic -indicated_by-> Marker`.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn tactic_node(&self, id: &str) -> Option<NodeId> {
        self.tactic_nodes.get(id).copied()
    }
}

fn materialize(tactics: &[TacticDef]) -> (Graph, BTreeMap<String, NodeId>) {
    let mut graph = Graph::new();
    let mut ids = BTreeMap::new();
    for tactic in tactics {
        let tnode = graph
            .add_node(
                NodeLabel::Tactic,
                attrs! {
                    "id" => tactic.id.as_str(),
                    "display_name" => tactic.display_name.as_str(),
                    "default_threshold" => tactic.default_threshold,
                },
            )
            .expect("tactic node is schema-valid");
        ids.insert(tactic.id.clone(), tnode);
        for marker in &tactic.markers {
            let mnode = graph
                .add_node(
                    NodeLabel::Marker,
                    attrs! {
                        "id" => marker.id.as_str(),
                        "kind" => marker.kind.name(),
                        "weight" => marker.weight,
                        "clear_cut" => marker.clear_cut,
                    },
                )
                .expect("marker node is schema-valid");
            graph
                .add_edge(tnode, mnode, EdgeLabel::IndicatedBy, attrs! {"weight" => marker.weight})
                .expect("both endpoints exist");
        }
    }
    (graph, ids)
}

/// The shipped six-tactic ontology.
pub fn default_config() -> SemanticKg {
    SemanticKg::from_json(DEFAULT_CONFIG).expect("shipped config is valid")
}

/// Loads and validates an ontology config file.
pub fn load_config(path: &Path) -> Result<SemanticKg, ConfigError> {
    SemanticKg::load(path)
}
