//! Reflective prompt generation: grounding, templates, and the lexicon
//! validator every emitted prompt has to pass.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::TacticDetection;
use crate::embedding::fnv1a64;
use crate::graph::{Direction, EdgeLabel, Graph, NodeId};
use crate::ontology::{ConfigError, SemanticKg};

const DEFAULT_TEMPLATES: &str = include_str!("../../../config/templates.json");

pub const PLACEHOLDERS: [&str; 4] = ["phrase", "emotion", "partner_role", "tactic_hint"];

/// Used for `{partner_role}` when the partner has no role label.
pub const DEFAULT_PARTNER_ROLE: &str = "the other person";

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("cannot ground a detection without evidence")]
    Ungrounded,
    #[error("missing value for placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("no template produced a valid prompt")]
    Exhausted,
    #[error("{0}")]
    Graph(#[from] crate::graph::GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Lexicon {
    pub diagnostic_terms: Vec<String>,
    pub directive_phrases: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| (*s).to_owned()).collect();
        Self {
            diagnostic_terms: own(&[
                "abuser",
                "abusive",
                "narcissist",
                "sociopath",
                "manipulator",
                "toxic",
                "victim",
                "gaslighter",
            ]),
            directive_phrases: own(&[
                "you should",
                "you must",
                "you need to leave",
                "break up",
                "divorce",
                "leave him",
                "leave her",
                "leave them",
                "report them",
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Diagnostic { term: String },
    Directive { phrase: String },
    NotAQuestion,
    TooLong { max: usize },
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

fn squash_whitespace(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Lexicon {
    /// Canonical lowercase, trimmed, non-empty lists.
    pub fn canonical(&self) -> Result<Lexicon, ConfigError> {
        let fix = |xs: &[String], path: &str| -> Result<Vec<String>, ConfigError> {
            let out: Vec<String> = xs.iter().map(|s| squash_whitespace(s)).filter(|s| !s.is_empty()).collect();
            if out.is_empty() {
                return Err(ConfigError::Invalid {
                    path: path.to_owned(),
                    message: "list must not be empty".into(),
                });
            }
            Ok(out)
        };
        Ok(Lexicon {
            diagnostic_terms: fix(&self.diagnostic_terms, "lexicon.diagnostic_terms")?,
            directive_phrases: fix(&self.directive_phrases, "lexicon.directive_phrases")?,
        })
    }

    pub fn version(&self) -> String {
        let body = serde_json::to_string(self).expect("lexicon serializes");
        format!("lex-{:016x}", fnv1a64(body.as_bytes()))
    }

    /// Every violation in `text`, sorted and deduplicated. Empty means pass.
    pub fn violations(&self, text: &str) -> Vec<Violation> {
        let mut out = BTreeSet::new();
        let tokens = words(text);
        for term in &self.diagnostic_terms {
            let term_tokens = words(term);
            let Some((last, head)) = term_tokens.split_last() else { continue };
            let forms = [last.clone(), format!("{last}s"), format!("{last}es")];
            let hit = tokens.windows(term_tokens.len()).any(|w| {
                let (w_last, w_head) = w.split_last().expect("window is non-empty");
                w_head == head && forms.contains(w_last)
            });
            if hit {
                out.insert(Violation::Diagnostic { term: term.clone() });
            }
        }
        let squashed = squash_whitespace(text);
        for phrase in &self.directive_phrases {
            if squashed.contains(phrase.as_str()) {
                out.insert(Violation::Directive { phrase: phrase.clone() });
            }
        }
        if !text.trim_end().ends_with('?') {
            out.insert(Violation::NotAQuestion);
        }
        out.into_iter().collect()
    }
}

pub fn validate(text: &str, lexicon: &Lexicon) -> Result<(), Vec<Violation>> {
    let v = lexicon.violations(text);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceBand {
    Low,
    Medium,
    High,
}

impl ConfidenceBand {
    pub fn of(confidence: f64) -> Self {
        if confidence >= 0.75 {
            ConfidenceBand::High
        } else if confidence >= 0.5 {
            ConfidenceBand::Medium
        } else {
            ConfidenceBand::Low
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GroundingPayload {
    pub tactic_id: String,
    pub tactic_display_name: String,
    pub confidence_band: ConfidenceBand,
    /// Up to three, strongest first.
    pub emotions: Vec<String>,
    /// Up to three, best-scoring first.
    pub phrases: Vec<String>,
    pub partner_role: String,
    pub event_timestamp: DateTime<Utc>,
}

impl GroundingPayload {
    fn value(&self, placeholder: &str) -> Option<String> {
        match placeholder {
            "phrase" => self.phrases.first().cloned(),
            "emotion" => self.emotions.first().cloned(),
            "partner_role" => Some(self.partner_role.clone()),
            "tactic_hint" => Some(self.tactic_display_name.to_lowercase()),
            _ => None,
        }
    }
}

/// Collects the payload from the detection's evidence and the event's own
/// logged emotions.
pub fn build_grounding(
    detection: &TacticDetection,
    event: NodeId,
    graph: &Graph,
    kg: &SemanticKg,
) -> Result<GroundingPayload, ReflectError> {
    if detection.evidence_subgraph.nodes.is_empty() && detection.evidence_subgraph.edges.is_empty() {
        return Err(ReflectError::Ungrounded);
    }
    let node = graph.require_node(event)?;

    let mut phrases: Vec<(f64, NodeId, &str)> = detection
        .marker_scores
        .iter()
        .flat_map(|m| &m.evidence.phrases)
        .map(|p| (p.similarity, p.phrase_node, p.text.as_str()))
        .collect();
    phrases.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut seen = BTreeSet::new();
    phrases.retain(|p| seen.insert(p.1));

    let mut emotions: Vec<(f64, NodeId, String)> = graph
        .neighbors(event, Some(EdgeLabel::FeltEmotion), Direction::Outgoing)?
        .into_iter()
        .filter_map(|(e, n)| Some((e.number("intensity")?, n.id, n.text("name")?.to_owned())))
        .collect();
    emotions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut seen = BTreeSet::new();
    emotions.retain(|e| seen.insert(e.2.clone()));

    let partner_role = graph
        .neighbors(event, Some(EdgeLabel::AboutPartner), Direction::Outgoing)?
        .first()
        .and_then(|(_, n)| n.text("role").map(str::to_owned))
        .unwrap_or_else(|| DEFAULT_PARTNER_ROLE.to_owned());

    Ok(GroundingPayload {
        tactic_id: detection.tactic_id.clone(),
        tactic_display_name: kg
            .tactic(&detection.tactic_id)
            .map_or_else(|| detection.tactic_id.clone(), |t| t.display_name.clone()),
        confidence_band: ConfidenceBand::of(detection.confidence),
        emotions: emotions.into_iter().take(3).map(|e| e.2).collect(),
        phrases: phrases.into_iter().take(3).map(|p| p.2.to_owned()).collect(),
        partner_role,
        event_timestamp: node.timestamp().unwrap_or_default(),
    })
}

/// `{name}` placeholders in order of appearance.
fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        out.push(&rest[open + 1..open + close]);
        rest = &rest[open + close + 1..];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    /// A tactic id, or `*` for templates usable with any tactic.
    pub tactic: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn is_wildcard(&self) -> bool {
        self.tactic == "*"
    }

    pub fn required(&self) -> BTreeSet<&str> {
        placeholders(&self.text).into_iter().collect()
    }
}

/// Substitutes every placeholder; nothing else about the text changes.
pub fn render(template: &PromptTemplate, payload: &GroundingPayload) -> Result<String, ReflectError> {
    let mut out = String::with_capacity(template.text.len() + 64);
    let mut rest = template.text.as_str();
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        let name = &rest[open + 1..open + close];
        let value = payload
            .value(name)
            .ok_or_else(|| ReflectError::MissingPlaceholder(name.to_owned()))?;
        out.push_str(&rest[..open]);
        out.push_str(&value);
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TemplateFile {
    templates: Vec<PromptTemplate>,
}

/// Templates grouped by tactic, validated against a lexicon at load.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    by_tactic: BTreeMap<String, Vec<PromptTemplate>>,
    wildcards: Vec<PromptTemplate>,
}

impl TemplateSet {
    pub fn new(templates: Vec<PromptTemplate>, lexicon: &Lexicon, kg: &SemanticKg) -> Result<Self, ConfigError> {
        let mut ids = BTreeSet::new();
        let mut by_tactic: BTreeMap<String, Vec<PromptTemplate>> = BTreeMap::new();
        let mut wildcards = Vec::new();
        for (i, t) in templates.into_iter().enumerate() {
            let path = format!("templates[{i}]");
            if !ids.insert(t.id.clone()) {
                return Err(ConfigError::DuplicateId { path: format!("{path}.id"), id: t.id });
            }
            if let Some(p) = placeholders(&t.text).into_iter().find(|p| !PLACEHOLDERS.contains(p)) {
                return Err(ConfigError::Invalid {
                    path: format!("{path}.text"),
                    message: format!("unknown placeholder {{{p}}}"),
                });
            }
            if let Err(v) = validate(&t.text, lexicon) {
                return Err(ConfigError::Invalid {
                    path: format!("{path}.text"),
                    message: format!("template fails validation: {v:?}"),
                });
            }
            if t.is_wildcard() {
                wildcards.push(t);
            } else if kg.tactic(&t.tactic).is_some() {
                by_tactic.entry(t.tactic.clone()).or_default().push(t);
            } else {
                return Err(ConfigError::Invalid {
                    path: format!("{path}.tactic"),
                    message: format!("unknown tactic `{}`", t.tactic),
                });
            }
        }
        for tactic in kg.tactics() {
            let n = by_tactic.get(&tactic.id).map_or(0, Vec::len);
            if n < 2 {
                return Err(ConfigError::Invalid {
                    path: "templates".into(),
                    message: format!("tactic `{}` needs at least 2 templates, found {n}", tactic.id),
                });
            }
        }
        if wildcards.len() < 2 || !wildcards.iter().any(|w| w.required().is_empty()) {
            return Err(ConfigError::Invalid {
                path: "templates".into(),
                message: "need at least 2 wildcard templates, one without placeholders".into(),
            });
        }
        Ok(Self { by_tactic, wildcards })
    }

    pub fn from_json(text: &str, lexicon: &Lexicon, kg: &SemanticKg) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: TemplateFile = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        Self::new(file.templates, lexicon, kg)
    }

    pub fn load(path: &Path, lexicon: &Lexicon, kg: &SemanticKg) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?, lexicon, kg)
    }

    pub fn builtin(lexicon: &Lexicon, kg: &SemanticKg) -> Result<Self, ConfigError> {
        Self::from_json(DEFAULT_TEMPLATES, lexicon, kg)
    }

    pub fn for_tactic(&self, tactic: &str) -> &[PromptTemplate] {
        self.by_tactic.get(tactic).map_or(&[], Vec::as_slice)
    }

    pub fn wildcards(&self) -> &[PromptTemplate] {
        &self.wildcards
    }

    pub fn all(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.by_tactic.values().flatten().chain(&self.wildcards)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GenerateRequest {
    pub system_constraints: String,
    pub grounding: GroundingPayload,
    pub max_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GenerateReply {
    pub text: String,
}

/// A text generator outside the process, such as a hosted language model.
pub trait ExternalGenerator: Send + Sync {
    fn generate(&self, request: &GenerateRequest) -> Result<String, String>;
}

/// Client for `POST /generate`.
pub struct HttpGenerator {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(base_url: &str, timeout: Duration) -> reqwest::Result<Self> {
        Ok(Self {
            url: format!("{}/generate", base_url.trim_end_matches('/')),
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
        })
    }
}

impl ExternalGenerator for HttpGenerator {
    fn generate(&self, request: &GenerateRequest) -> Result<String, String> {
        self.client
            .post(&self.url)
            .json(request)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<GenerateReply>())
            .map(|r| r.text)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectionReason {
    Violations { violations: Vec<Violation> },
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Rejection {
    pub attempt: u32,
    #[serde(flatten)]
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationRecord {
    pub lexicon_version: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReflectivePrompt {
    pub id: String,
    pub tactic_id: String,
    pub text: String,
    /// Template id, or `external` for generator output.
    pub template_id: String,
    pub grounding: GroundingPayload,
    pub validation: ValidationRecord,
}

pub const EXTERNAL_TEMPLATE_ID: &str = "external";
pub const MAX_EXTERNAL_ATTEMPTS: u32 = 3;

/// Builds and validates prompts. The template path is the default and the
/// fallback for the optional external generator.
pub struct PromptEngine {
    kg: Arc<SemanticKg>,
    templates: TemplateSet,
    lexicon: Lexicon,
    lexicon_version: String,
    external: Option<Arc<dyn ExternalGenerator>>,
    max_length: usize,
}

impl PromptEngine {
    pub fn new(kg: Arc<SemanticKg>, templates: TemplateSet, lexicon: Lexicon) -> Self {
        let lexicon_version = lexicon.version();
        Self {
            kg,
            templates,
            lexicon,
            lexicon_version,
            external: None,
            max_length: 400,
        }
    }

    pub fn with_external(mut self, generator: Arc<dyn ExternalGenerator>) -> Self {
        self.external = Some(generator);
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn system_constraints(&self) -> String {
        format!(
            "Write one short reflective question grounded only in the supplied data. \
             Describe communication, never label people. Do not use these terms: {}. \
             Do not give directives such as: {}. End with a question mark.",
            self.lexicon.diagnostic_terms.join(", "),
            self.lexicon.directive_phrases.join(", ")
        )
    }

    fn check(&self, text: &str) -> Vec<Violation> {
        let mut v = self.lexicon.violations(text);
        if text.chars().count() > self.max_length {
            v.push(Violation::TooLong { max: self.max_length });
        }
        v
    }

    /// Template path: tactic templates starting at `rotation`, then wildcards.
    fn render_templates(&self, tactic: &str, payload: &GroundingPayload, rotation: u64) -> Result<(String, String), ReflectError> {
        let own = self.templates.for_tactic(tactic);
        let start = if own.is_empty() { 0 } else { (rotation % own.len() as u64) as usize };
        let rotated = own[start..].iter().chain(&own[..start]);
        for t in rotated.chain(self.templates.wildcards()) {
            let Ok(text) = render(t, payload) else { continue };
            if self.check(&text).is_empty() {
                return Ok((t.id.clone(), text));
            }
        }
        Err(ReflectError::Exhausted)
    }

    /// One validated prompt for a fired detection.
    pub fn generate(
        &self,
        prompt_id: String,
        detection: &TacticDetection,
        event: NodeId,
        graph: &Graph,
        rotation: u64,
    ) -> Result<ReflectivePrompt, ReflectError> {
        let grounding = build_grounding(detection, event, graph, &self.kg)?;
        let mut rejected = Vec::new();
        if let Some(generator) = &self.external {
            let request = GenerateRequest {
                system_constraints: self.system_constraints(),
                grounding: grounding.clone(),
                max_length: self.max_length,
            };
            for attempt in 1..=MAX_EXTERNAL_ATTEMPTS {
                match generator.generate(&request) {
                    Ok(text) => {
                        let text = text.trim().to_owned();
                        let violations = self.check(&text);
                        if violations.is_empty() {
                            return Ok(ReflectivePrompt {
                                id: prompt_id,
                                tactic_id: detection.tactic_id.clone(),
                                text,
                                template_id: EXTERNAL_TEMPLATE_ID.into(),
                                grounding,
                                validation: ValidationRecord {
                                    lexicon_version: self.lexicon_version.clone(),
                                    passed: true,
                                    rejected,
                                },
                            });
                        }
                        rejected.push(Rejection {
                            attempt,
                            reason: RejectionReason::Violations { violations },
                        });
                    }
                    Err(e) => {
                        tracing::warn!(error = %e, attempt, "external generator failed");
                        rejected.push(Rejection {
                            attempt,
                            reason: RejectionReason::Unreachable,
                        });
                    }
                }
            }
        }
        let (template_id, text) = self.render_templates(&detection.tactic_id, &grounding, rotation)?;
        Ok(ReflectivePrompt {
            id: prompt_id,
            tactic_id: detection.tactic_id.clone(),
            text,
            template_id,
            grounding,
            validation: ValidationRecord {
                lexicon_version: self.lexicon_version.clone(),
                passed: true,
                rejected,
            },
        })
    }
}
