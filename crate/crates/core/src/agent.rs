//! The Log-Analyze-Reflect loop and per-user state.
//!
//! Each user owns one episodic graph. Everything the agent remembers about a
//! user, including thresholds, rotation counters and feedback, is written
//! into that graph as attributes of the user node, so the graph log alone
//! reproduces the user's state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::detection::{AwarenessGapSignal, DetectError, Detector, LongitudinalResult, Mode, TacticDetection};
use crate::embedding::{EmbeddingProvider, HashEmbedder};
use crate::graph::{
    AttrTarget, Attrs, Direction, EdgeLabel, Graph, GraphError, LogRecord, Mutation, NodeId, NodeLabel,
};
use crate::ontology::{ConfigError, SemanticKg};
use crate::reflection::{ExternalGenerator, PromptEngine, ReflectError, ReflectivePrompt};

pub const MAX_PHRASES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl AgentError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        AgentError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<GraphError> for AgentError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::NotFound(m) => AgentError::NotFound(m),
            GraphError::Io(e) => AgentError::Io(e.to_string()),
            other => AgentError::Internal(other.to_string()),
        }
    }
}

impl From<DetectError> for AgentError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::NotFound(m) => AgentError::NotFound(m),
            other => AgentError::Internal(other.to_string()),
        }
    }
}

impl From<ReflectError> for AgentError {
    fn from(e: ReflectError) -> Self {
        AgentError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for AgentError {
    fn from(e: std::io::Error) -> Self {
        AgentError::Io(e.to_string())
    }
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;

/// Threshold update rule and the tier boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    /// Multiplier applied on `not_helpful` and `inaccurate`.
    pub raise: f64,
    /// Multiplier applied on `helpful`.
    pub lower: f64,
    pub min_threshold: f64,
    pub max_threshold: f64,
    /// Interactions after which a user counts as returning.
    pub returning_after: u64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            raise: 1.1,
            lower: 0.95,
            min_threshold: 0.3,
            max_threshold: 0.9,
            returning_after: 3,
        }
    }
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: &str, message: &str| {
            Err(ConfigError::Invalid {
                path: format!("calibration.{path}"),
                message: message.into(),
            })
        };
        if !(self.raise >= 1.0 && self.raise.is_finite()) {
            return bad("raise", "must be at least 1");
        }
        if !(self.lower > 0.0 && self.lower <= 1.0) {
            return bad("lower", "must be in (0, 1]");
        }
        if !(0.0 < self.min_threshold && self.min_threshold <= self.max_threshold && self.max_threshold < 1.0) {
            return bad("min_threshold", "need 0 < min_threshold <= max_threshold < 1");
        }
        Ok(())
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(self.min_threshold, self.max_threshold)
    }

    /// One feedback step for the prompted tactic's threshold.
    pub fn step(&self, theta: f64, rating: Rating, confirmation: Option<Confirmation>) -> f64 {
        let up = |t: f64| (t * self.raise).min(self.max_threshold);
        let mut t = match rating {
            Rating::NotHelpful | Rating::Inaccurate => up(theta),
            Rating::Helpful => (theta * self.lower).max(self.min_threshold),
        };
        if confirmation == Some(Confirmation::Deny) {
            t = up(t);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    New,
    Returning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Helpful,
    NotHelpful,
    Inaccurate,
}

impl Rating {
    pub fn as_str(self) -> &'static str {
        match self {
            Rating::Helpful => "helpful",
            Rating::NotHelpful => "not_helpful",
            Rating::Inaccurate => "inaccurate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Rating::Helpful, Rating::NotHelpful, Rating::Inaccurate]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Confirmation {
    Confirm,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    pub prompt_id: String,
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation: Option<Confirmation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct UserState {
    pub user_id: String,
    pub thresholds: BTreeMap<String, f64>,
    pub interaction_count: u64,
    pub tier: Tier,
    pub rotation: BTreeMap<String, u64>,
    pub feedback: BTreeMap<String, Rating>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PartnerRef {
    /// An existing partner node.
    Id(NodeId),
    /// Reuses the partner with this role label, or creates one.
    New { role_label: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EmotionEntry {
    pub term: String,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Articulation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    pub confidence: f64,
}

/// One filled-in questionnaire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LogSubmission {
    pub partner: PartnerRef,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub phrases: Vec<String>,
    #[serde(default)]
    pub emotions: Vec<EmotionEntry>,
    #[serde(default)]
    pub cognition_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_note: Option<String>,
}

fn unit_range(field: String, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AgentError::invalid(field, "must be within [0, 1]"))
    }
}

impl LogSubmission {
    /// Checks everything that can be checked without a graph. Messages never
    /// repeat submitted text.
    pub fn validate(&self, kg: &SemanticKg) -> Result<()> {
        if self.phrases.is_empty() && self.emotions.is_empty() {
            return Err(AgentError::invalid("phrases", "at least one phrase or emotion is required"));
        }
        if self.phrases.len() > MAX_PHRASES {
            return Err(AgentError::invalid("phrases", format!("at most {MAX_PHRASES} phrases")));
        }
        for (i, p) in self.phrases.iter().enumerate() {
            if p.trim().is_empty() {
                return Err(AgentError::invalid(format!("phrases[{i}]"), "must not be empty"));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.emotions.iter().enumerate() {
            if kg.emotion(&e.term).is_none() {
                return Err(AgentError::invalid(format!("emotions[{i}].term"), "unknown emotion term"));
            }
            if !seen.insert(e.term.as_str()) {
                return Err(AgentError::invalid(format!("emotions[{i}].term"), "duplicate emotion term"));
            }
            unit_range(format!("emotions[{i}].intensity"), e.intensity)?;
        }
        let mut seen = BTreeSet::new();
        for (i, t) in self.cognition_tags.iter().enumerate() {
            if !kg.is_cognition(t) {
                return Err(AgentError::invalid(format!("cognition_tags[{i}]"), "unknown cognition tag"));
            }
            if !seen.insert(t.as_str()) {
                return Err(AgentError::invalid(format!("cognition_tags[{i}]"), "duplicate cognition tag"));
            }
        }
        if let Some(a) = &self.articulation {
            unit_range("articulation.confidence".into(), a.confidence)?;
        }
        if let PartnerRef::New { role_label } = &self.partner {
            if role_label.trim().is_empty() {
                return Err(AgentError::invalid("partner.new.role_label", "must not be empty"));
            }
        }
        Ok(())
    }
}

fn find_by_text(graph: &Graph, label: NodeLabel, key: &str, value: &str) -> Option<NodeId> {
    graph
        .nodes_by_label(label)
        .iter()
        .copied()
        .find(|id| graph.node(*id).and_then(|n| n.text(key)) == Some(value))
}

/// The single `User` node of an episodic graph, created if absent.
pub fn user_node(graph: &mut Graph) -> Result<NodeId> {
    if let Some(id) = graph.nodes_by_label(NodeLabel::User).first() {
        return Ok(*id);
    }
    Ok(graph.add_node(NodeLabel::User, Attrs::new())?)
}

fn partner_node(graph: &Graph, partner: NodeId) -> Result<NodeId> {
    match graph.node(partner) {
        Some(n) if n.label == NodeLabel::OtherPerson => Ok(partner),
        _ => Err(AgentError::NotFound(format!("partner {partner} not found"))),
    }
}

/// Adds a partner with a role label that is unique within the graph.
pub fn add_partner(graph: &mut Graph, role_label: &str) -> Result<NodeId> {
    let role = role_label.trim();
    if role.is_empty() {
        return Err(AgentError::invalid("role_label", "must not be empty"));
    }
    if find_by_text(graph, NodeLabel::OtherPerson, "role", role).is_some() {
        return Err(AgentError::Conflict("a partner with this role label already exists".into()));
    }
    Ok(graph.add_node(NodeLabel::OtherPerson, crate::attrs! { "role" => role })?)
}

/// Writes one submission into the graph as an event with its phrases,
/// emotions, cognitions and articulated cause. The submission must already
/// be valid; nothing is written if the partner reference does not resolve.
pub fn enrich(graph: &mut Graph, kg: &SemanticKg, user: NodeId, submission: &LogSubmission) -> Result<NodeId> {
    let existing_partner = match &submission.partner {
        PartnerRef::Id(id) => Some(partner_node(graph, *id)?),
        PartnerRef::New { role_label } => find_by_text(graph, NodeLabel::OtherPerson, "role", role_label.trim()),
    };
    let partner = match (existing_partner, &submission.partner) {
        (Some(p), _) => p,
        (None, PartnerRef::New { role_label }) => add_partner(graph, role_label)?,
        (None, PartnerRef::Id(_)) => unreachable!("resolved above"),
    };

    let mut attrs = crate::attrs! { "timestamp" => submission.timestamp };
    if let Some(note) = &submission.context_note {
        attrs.insert("context_note".into(), note.clone().into());
    }
    let event = graph.add_node(NodeLabel::InteractionEvent, attrs)?;
    graph.add_edge(user, event, EdgeLabel::ParticipatedIn, Attrs::new())?;
    graph.add_edge(event, partner, EdgeLabel::AboutPartner, Attrs::new())?;

    for (i, text) in submission.phrases.iter().enumerate() {
        let phrase = graph.add_node(NodeLabel::Phrase, crate::attrs! { "text" => text.as_str() })?;
        graph.add_edge(event, phrase, EdgeLabel::ContainsPhrase, crate::attrs! { "position" => i as f64 })?;
    }
    for entry in &submission.emotions {
        let term = kg
            .emotion(&entry.term)
            .ok_or_else(|| AgentError::invalid("emotions", "unknown emotion term"))?;
        let node = match find_by_text(graph, NodeLabel::Emotion, "name", &term.name) {
            Some(id) => id,
            None => graph.add_node(
                NodeLabel::Emotion,
                crate::attrs! {
                    "name" => term.name.as_str(),
                    "valence" => term.valence.as_str(),
                    "octant" => term.octant.as_str(),
                    "intensity_level" => serde_json::to_value(term.intensity_level)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                },
            )?,
        };
        graph.add_edge(event, node, EdgeLabel::FeltEmotion, crate::attrs! { "intensity" => entry.intensity })?;
    }
    for tag in &submission.cognition_tags {
        let node = match find_by_text(graph, NodeLabel::Cognition, "name", tag) {
            Some(id) => id,
            None => graph.add_node(NodeLabel::Cognition, crate::attrs! { "name" => tag.as_str() })?,
        };
        graph.add_edge(event, node, EdgeLabel::HasCognition, Attrs::new())?;
    }
    if let Some(Articulation {
        cause: Some(cause),
        confidence,
    }) = &submission.articulation
    {
        graph.add_edge(
            event,
            user,
            EdgeLabel::ArticulatedCause,
            crate::attrs! { "cause" => cause.as_str(), "confidence" => *confidence },
        )?;
    }
    let count = graph.node(user).and_then(|n| n.number(ATTR_COUNT)).unwrap_or(0.0) + 1.0;
    graph.set_node_attr(user, ATTR_COUNT, count)?;
    Ok(event)
}

const ATTR_COUNT: &str = "interaction_count";
const THRESHOLD_PREFIX: &str = "threshold.";
const ROTATION_PREFIX: &str = "rotation.";
const FEEDBACK_PREFIX: &str = "feedback.";

/// Reads the user's adaptive state out of the user node.
pub fn read_state(graph: &Graph, user: NodeId, user_id: &str, kg: &SemanticKg, cal: &CalibrationParams) -> UserState {
    let node = graph.node(user).expect("user node exists");
    let interaction_count = node.number(ATTR_COUNT).unwrap_or(0.0) as u64;
    let mut thresholds: BTreeMap<String, f64> =
        kg.tactics().iter().map(|t| (t.id.clone(), cal.clamp(t.default_threshold))).collect();
    let mut rotation = BTreeMap::new();
    let mut feedback = BTreeMap::new();
    for (key, value) in &node.attrs {
        if let Some(t) = key.strip_prefix(THRESHOLD_PREFIX) {
            if let Some(v) = value.as_number() {
                thresholds.insert(t.to_owned(), v);
            }
        } else if let Some(t) = key.strip_prefix(ROTATION_PREFIX) {
            if let Some(v) = value.as_number() {
                rotation.insert(t.to_owned(), v as u64);
            }
        } else if let Some(p) = key.strip_prefix(FEEDBACK_PREFIX) {
            if let Some(r) = value.as_text().and_then(Rating::parse) {
                feedback.insert(p.to_owned(), r);
            }
        }
    }
    UserState {
        user_id: user_id.to_owned(),
        thresholds,
        interaction_count,
        tier: if interaction_count >= cal.returning_after {
            Tier::Returning
        } else {
            Tier::New
        },
        rotation,
        feedback,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Analysis {
    pub event_id: NodeId,
    pub tier: Tier,
    pub mode: Mode,
    pub awareness_gap: AwarenessGapSignal,
    pub detections: Vec<TacticDetection>,
    /// Standalone longitudinal statistics; empty for new users.
    pub longitudinal: Vec<LongitudinalResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CycleResult {
    pub event_id: NodeId,
    pub tier: Tier,
    pub mode: Mode,
    pub awareness_gap: AwarenessGapSignal,
    pub detections: Vec<TacticDetection>,
    pub longitudinal: Vec<LongitudinalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<ReflectivePrompt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EventSummary {
    pub event_id: NodeId,
    pub partner_id: NodeId,
    pub partner_role: String,
    pub timestamp: DateTime<Utc>,
    pub distress: f64,
    pub emotions: Vec<String>,
    pub fired_tactics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PartnerSummary {
    pub partner_id: NodeId,
    pub role_label: String,
}

pub fn prompt_id_for(event: NodeId) -> String {
    format!("prm-{}", event.0)
}

fn event_for_prompt(prompt_id: &str) -> Option<NodeId> {
    prompt_id.strip_prefix("prm-")?.parse().ok().map(NodeId)
}

struct Session {
    graph: Graph,
    user: NodeId,
    persisted_seq: u64,
    cycles: BTreeMap<NodeId, CycleResult>,
    dir: Option<PathBuf>,
}

impl Session {
    fn persist(&mut self) -> Result<()> {
        let Some(dir) = &self.dir else {
            self.persisted_seq = self.graph.last_seq();
            return Ok(());
        };
        let fresh = self.graph.records_after(self.persisted_seq);
        if fresh.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new().create(true).append(true).open(dir.join(GRAPH_FILE))?;
        let mut w = BufWriter::new(file);
        Graph::write_records(fresh, &mut w)?;
        w.flush()?;
        w.get_ref().sync_data()?;
        self.persisted_seq = self.graph.last_seq();
        Ok(())
    }

    fn persist_cycle(&self, cycle: &CycleResult) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut file = OpenOptions::new().create(true).append(true).open(dir.join(CYCLES_FILE))?;
        let line = serde_json::to_string(cycle).map_err(|e| AgentError::Internal(e.to_string()))?;
        writeln!(file, "{line}")?;
        file.sync_data()?;
        Ok(())
    }
}

const GRAPH_FILE: &str = "graph.jsonl";
const CYCLES_FILE: &str = "cycles.jsonl";

fn check_user_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(AgentError::invalid("user_id", "must be 1-64 characters of [A-Za-z0-9_-]"))
    }
}

/// Builder for [`Agent`].
pub struct AgentBuilder {
    config: Config,
    data_dir: Option<PathBuf>,
    provider: Arc<dyn EmbeddingProvider>,
    generator: Option<Arc<dyn ExternalGenerator>>,
}

impl AgentBuilder {
    pub fn data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    pub fn provider(mut self, provider: Arc<dyn EmbeddingProvider>) -> Self {
        self.provider = provider;
        self
    }

    pub fn generator(mut self, generator: Arc<dyn ExternalGenerator>) -> Self {
        self.generator = Some(generator);
        self
    }

    /// Loads every user found under the data directory.
    pub fn build(self) -> Result<Agent> {
        let kg = self.config.kg.clone();
        let detector = Detector::new(kg.clone(), self.provider, self.config.detection.clone());
        let mut prompts = PromptEngine::new(kg, self.config.templates.clone(), self.config.lexicon.clone());
        if let Some(g) = self.generator {
            prompts = prompts.with_external(g);
        }
        let agent = Agent {
            config: self.config,
            detector,
            prompts,
            data_dir: self.data_dir,
            users: RwLock::new(BTreeMap::new()),
        };
        agent.load_users()?;
        Ok(agent)
    }
}

/// The orchestrator. Calls for one user are serialized; distinct users run
/// in parallel.
pub struct Agent {
    config: Config,
    detector: Detector,
    prompts: PromptEngine,
    data_dir: Option<PathBuf>,
    users: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl Agent {
    pub fn builder(config: Config) -> AgentBuilder {
        AgentBuilder {
            config,
            data_dir: None,
            provider: Arc::new(HashEmbedder),
            generator: None,
        }
    }

    /// In-memory agent with the shipped configuration.
    pub fn in_memory() -> Self {
        Self::builder(Config::default()).build().expect("in-memory agent has no i/o")
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn prompts(&self) -> &PromptEngine {
        &self.prompts
    }

    fn users_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("users"))
    }

    fn load_users(&self) -> Result<()> {
        let Some(dir) = self.users_dir() else { return Ok(()) };
        if !dir.exists() {
            return Ok(());
        }
        let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        let mut users = self.users.write().expect("user map lock");
        for entry in entries {
            let Some(id) = entry.file_name().to_str().map(str::to_owned) else { continue };
            if check_user_id(&id).is_err() || !entry.path().is_dir() {
                continue;
            }
            let session = Self::load_session(&entry.path())?;
            users.insert(id, Arc::new(Mutex::new(session)));
        }
        Ok(())
    }

    fn load_session(dir: &Path) -> Result<Session> {
        let log = dir.join(GRAPH_FILE);
        let mut graph = if log.exists() {
            Graph::load_log(&log)?
        } else {
            Graph::new()
        };
        let persisted_seq = graph.last_seq();
        let user = user_node(&mut graph)?;
        let mut cycles = BTreeMap::new();
        let path = dir.join(CYCLES_FILE);
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let c: CycleResult = serde_json::from_str(&line)
                    .map_err(|e| AgentError::Internal(format!("{}:{}: {e}", path.display(), i + 1)))?;
                cycles.insert(c.event_id, c);
            }
        }
        let mut session = Session {
            persisted_seq,
            graph,
            user,
            cycles,
            dir: Some(dir.to_owned()),
        };
        // A user node created just now has to reach the file as well.
        session.persist()?;
        Ok(session)
    }

    fn session(&self, user_id: &str) -> Result<Arc<Mutex<Session>>> {
        self.users
            .read()
            .expect("user map lock")
            .get(user_id)
            .cloned()
            .ok_or_else(|| AgentError::NotFound("user not found".into()))
    }

    fn with_session<T>(&self, user_id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let session = self.session(user_id)?;
        let mut guard = session.lock().map_err(|_| AgentError::Internal("user lock poisoned".into()))?;
        f(&mut guard)
    }

    /// Creates a user with a fresh random id.
    pub fn create_user(&self) -> Result<String> {
        let id = uuid::Uuid::new_v4().to_string();
        self.create_user_with_id(&id)?;
        Ok(id)
    }

    /// Creates a user under a caller-chosen id.
    pub fn create_user_with_id(&self, user_id: &str) -> Result<()> {
        check_user_id(user_id)?;
        let mut users = self.users.write().expect("user map lock");
        if users.contains_key(user_id) {
            return Err(AgentError::Conflict("user already exists".into()));
        }
        let dir = match self.users_dir() {
            Some(d) => {
                let d = d.join(user_id);
                fs::create_dir_all(&d)?;
                Some(d)
            }
            None => None,
        };
        let mut graph = Graph::new();
        let user = user_node(&mut graph)?;
        let mut session = Session {
            graph,
            user,
            persisted_seq: 0,
            cycles: BTreeMap::new(),
            dir,
        };
        session.persist()?;
        users.insert(user_id.to_owned(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    pub fn ensure_user(&self, user_id: &str) -> Result<()> {
        match self.create_user_with_id(user_id) {
            Err(AgentError::Conflict(_)) => Ok(()),
            other => other,
        }
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users.read().expect("user map lock").keys().cloned().collect()
    }

    pub fn add_partner(&self, user_id: &str, role_label: &str) -> Result<NodeId> {
        self.with_session(user_id, |s| {
            let id = add_partner(&mut s.graph, role_label)?;
            s.persist()?;
            Ok(id)
        })
    }

    pub fn partners(&self, user_id: &str) -> Result<Vec<PartnerSummary>> {
        self.with_session(user_id, |s| {
            Ok(s.graph
                .nodes_by_label(NodeLabel::OtherPerson)
                .iter()
                .filter_map(|id| s.graph.node(*id))
                .map(|n| PartnerSummary {
                    partner_id: n.id,
                    role_label: n.text("role").unwrap_or_default().to_owned(),
                })
                .collect())
        })
    }

    fn log_locked(&self, s: &mut Session, submission: &LogSubmission) -> Result<NodeId> {
        submission.validate(&self.config.kg)?;
        // Resolve the partner before writing anything.
        if let PartnerRef::Id(p) = &submission.partner {
            partner_node(&s.graph, *p)?;
        }
        let event = enrich(&mut s.graph, &self.config.kg, s.user, submission)?;
        s.persist()?;
        Ok(event)
    }

    pub fn log_interaction(&self, user_id: &str, submission: &LogSubmission) -> Result<NodeId> {
        self.with_session(user_id, |s| self.log_locked(s, submission))
    }

    fn state_locked(&self, s: &Session, user_id: &str) -> UserState {
        read_state(&s.graph, s.user, user_id, &self.config.kg, &self.config.calibration)
    }

    pub fn state(&self, user_id: &str) -> Result<UserState> {
        self.with_session(user_id, |s| Ok(self.state_locked(s, user_id)))
    }

    fn require_event(graph: &Graph, event: NodeId) -> Result<()> {
        match graph.node(event) {
            Some(n) if n.label == NodeLabel::InteractionEvent => Ok(()),
            _ => Err(AgentError::NotFound(format!("event {event} not found"))),
        }
    }

    fn analyze_graph(&self, graph: &Graph, state: &UserState, event: NodeId) -> Result<Analysis> {
        Self::require_event(graph, event)?;
        let mode = match state.tier {
            Tier::New => Mode::ClearCutOnly,
            Tier::Returning => Mode::Full,
        };
        let detections = self.detector.detect(event, graph, &state.thresholds, mode)?;
        let longitudinal = if mode.longitudinal() {
            self.detector.longitudinal(event, graph)?
        } else {
            Vec::new()
        };
        Ok(Analysis {
            event_id: event,
            tier: state.tier,
            mode,
            awareness_gap: self.detector.awareness_gap(graph, event)?,
            detections,
            longitudinal,
        })
    }

    /// Awareness gap and tier-gated detections for one event.
    pub fn analyze(&self, user_id: &str, event: NodeId) -> Result<Analysis> {
        self.with_session(user_id, |s| {
            let state = self.state_locked(s, user_id);
            self.analyze_graph(&s.graph, &state, event)
        })
    }

    /// Detection in an explicit mode, ignoring the user's tier.
    pub fn detect(&self, user_id: &str, event: NodeId, mode: Mode) -> Result<Vec<TacticDetection>> {
        self.with_session(user_id, |s| {
            Self::require_event(&s.graph, event)?;
            let state = self.state_locked(s, user_id);
            Ok(self.detector.detect(event, &s.graph, &state.thresholds, mode)?)
        })
    }

    fn prompt_for(&self, graph: &Graph, state: &UserState, event: NodeId, detections: &[TacticDetection]) -> Result<Option<ReflectivePrompt>> {
        // Highest confidence wins; ties go to the smaller tactic id.
        let top = detections
            .iter()
            .filter(|d| d.fired)
            .min_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.tactic_id.cmp(&b.tactic_id)));
        let Some(top) = top else {
            return Ok(None);
        };
        let rotation = state.rotation.get(&top.tactic_id).copied().unwrap_or(0);
        Ok(Some(self.prompts.generate(prompt_id_for(event), top, event, graph, rotation)?))
    }

    fn record_prompt(s: &mut Session, event: NodeId, prompt: &ReflectivePrompt, rotation: u64) -> Result<()> {
        s.graph
            .set_node_attr(s.user, format!("{ROTATION_PREFIX}{}", prompt.tactic_id), (rotation + 1) as f64)?;
        s.graph.set_node_attr(event, "prompt_id", prompt.id.as_str())?;
        s.graph.set_node_attr(event, "prompt_tactic", prompt.tactic_id.as_str())?;
        Ok(())
    }

    fn reflect_locked(&self, s: &mut Session, user_id: &str, event: NodeId, detections: &[TacticDetection]) -> Result<Option<ReflectivePrompt>> {
        Self::require_event(&s.graph, event)?;
        let state = self.state_locked(s, user_id);
        let prompt = self.prompt_for(&s.graph, &state, event, detections)?;
        if let Some(p) = &prompt {
            let rotation = state.rotation.get(&p.tactic_id).copied().unwrap_or(0);
            Self::record_prompt(s, event, p, rotation)?;
            s.persist()?;
        }
        Ok(prompt)
    }

    /// At most one prompt, for the top fired detection. Advances that
    /// tactic's rotation counter.
    pub fn reflect(&self, user_id: &str, event: NodeId, detections: &[TacticDetection]) -> Result<Option<ReflectivePrompt>> {
        self.with_session(user_id, |s| self.reflect_locked(s, user_id, event, detections))
    }

    /// Log, analyze and reflect as one serialized step.
    pub fn run_cycle(&self, user_id: &str, submission: &LogSubmission) -> Result<CycleResult> {
        self.with_session(user_id, |s| {
            let event = self.log_locked(s, submission)?;
            let state = self.state_locked(s, user_id);
            let analysis = self.analyze_graph(&s.graph, &state, event)?;
            let prompt = self.reflect_locked(s, user_id, event, &analysis.detections)?;
            let cycle = CycleResult {
                event_id: event,
                tier: analysis.tier,
                mode: analysis.mode,
                awareness_gap: analysis.awareness_gap,
                detections: analysis.detections,
                longitudinal: analysis.longitudinal,
                prompt,
            };
            s.persist_cycle(&cycle)?;
            s.cycles.insert(event, cycle.clone());
            Ok(cycle)
        })
    }

    /// Updates the prompted tactic's threshold; a confirmation also records
    /// the tactic against the event.
    pub fn apply_feedback(&self, user_id: &str, feedback: &Feedback) -> Result<UserState> {
        self.with_session(user_id, |s| {
            let unknown = || AgentError::NotFound("prompt not found".into());
            let event = event_for_prompt(&feedback.prompt_id).ok_or_else(unknown)?;
            let node = s.graph.node(event).ok_or_else(unknown)?;
            if node.text("prompt_id") != Some(feedback.prompt_id.as_str()) {
                return Err(unknown());
            }
            let tactic = node.text("prompt_tactic").ok_or_else(unknown)?.to_owned();
            let state = self.state_locked(s, user_id);
            let theta = state
                .thresholds
                .get(&tactic)
                .copied()
                .unwrap_or_else(|| self.config.calibration.clamp(0.5));
            let next = self.config.calibration.step(theta, feedback.rating, feedback.confirmation);
            s.graph.set_node_attr(s.user, format!("{THRESHOLD_PREFIX}{tactic}"), next)?;
            s.graph.set_node_attr(
                s.user,
                format!("{FEEDBACK_PREFIX}{}", feedback.prompt_id),
                feedback.rating.as_str(),
            )?;
            if feedback.confirmation == Some(Confirmation::Confirm) {
                let tactic_node = match find_by_text(&s.graph, NodeLabel::Tactic, "id", &tactic) {
                    Some(id) => id,
                    None => {
                        let display = self.config.kg.tactic(&tactic).map_or(tactic.clone(), |t| t.display_name.clone());
                        s.graph.add_node(
                            NodeLabel::Tactic,
                            crate::attrs! { "id" => tactic.as_str(), "display_name" => display },
                        )?
                    }
                };
                if s.graph.find_edge(event, tactic_node, Some(EdgeLabel::UsedTactic)).is_none() {
                    s.graph.add_edge(event, tactic_node, EdgeLabel::UsedTactic, Attrs::new())?;
                }
            }
            s.persist()?;
            Ok(self.state_locked(s, user_id))
        })
    }

    /// The cycle result stored for an event.
    pub fn stored_analysis(&self, user_id: &str, event: NodeId) -> Result<CycleResult> {
        self.with_session(user_id, |s| {
            s.cycles
                .get(&event)
                .cloned()
                .ok_or_else(|| AgentError::NotFound(format!("analysis for event {event} not found")))
        })
    }

    pub fn cycles(&self, user_id: &str) -> Result<Vec<CycleResult>> {
        self.with_session(user_id, |s| Ok(s.cycles.values().cloned().collect()))
    }

    /// Chronological summaries, optionally for one partner.
    pub fn history(&self, user_id: &str, partner: Option<NodeId>) -> Result<Vec<EventSummary>> {
        self.with_session(user_id, |s| {
            let g = &s.graph;
            let partners: Vec<NodeId> = match partner {
                Some(p) => vec![partner_node(g, p)?],
                None => g.nodes_by_label(NodeLabel::OtherPerson).to_vec(),
            };
            let mut out = Vec::new();
            for p in partners {
                let role = g.node(p).and_then(|n| n.text("role")).unwrap_or_default().to_owned();
                for ev in g.events_for_partner(s.user, p)? {
                    let features = crate::detection::EventFeatures::extract(g, ev.id)?;
                    let mut emotions: Vec<(f64, String)> = g
                        .neighbors(ev.id, Some(EdgeLabel::FeltEmotion), Direction::Outgoing)?
                        .into_iter()
                        .filter_map(|(e, n)| Some((e.number("intensity")?, n.text("name")?.to_owned())))
                        .collect();
                    emotions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    out.push(EventSummary {
                        event_id: ev.id,
                        partner_id: p,
                        partner_role: role.clone(),
                        timestamp: ev.timestamp().unwrap_or_default(),
                        distress: features.distress(),
                        emotions: emotions.into_iter().map(|e| e.1).collect(),
                        fired_tactics: s
                            .cycles
                            .get(&ev.id)
                            .map(|c| c.detections.iter().filter(|d| d.fired).map(|d| d.tactic_id.clone()).collect())
                            .unwrap_or_default(),
                        prompt_id: ev.text("prompt_id").map(str::to_owned),
                    });
                }
            }
            out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.event_id.cmp(&b.event_id)));
            Ok(out)
        })
    }

    /// The user's full graph log.
    pub fn export_log(&self, user_id: &str) -> Result<Vec<LogRecord>> {
        self.with_session(user_id, |s| Ok(s.graph.log().to_vec()))
    }

    pub fn log_len(&self, user_id: &str) -> Result<u64> {
        self.with_session(user_id, |s| Ok(s.graph.last_seq()))
    }

    /// A copy of the user's current graph.
    pub fn graph(&self, user_id: &str) -> Result<Graph> {
        self.with_session(user_id, |s| Ok(s.graph.clone()))
    }

    /// Recomputes every cycle from a graph log alone.
    ///
    /// The log is replayed record by record. Each time a logged interaction
    /// completes (the write of the user's interaction count), analysis and
    /// reflection run against the graph as it stood at that point.
    pub fn recompute_cycles(&self, user_id: &str, records: &[LogRecord]) -> Result<Vec<CycleResult>> {
        let mut graph = Graph::new();
        let mut out = Vec::new();
        let mut last_event = None;
        for record in records {
            graph.replay_record(record.clone())?;
            match &record.mutation {
                Mutation::AddNode(n) if n.label == NodeLabel::InteractionEvent => last_event = Some(n.id),
                Mutation::SetAttr {
                    target: AttrTarget::Node(id),
                    key,
                    ..
                } if key == ATTR_COUNT && graph.node(*id).is_some_and(|n| n.label == NodeLabel::User) => {
                    let event = last_event.ok_or_else(|| AgentError::Internal("count update without event".into()))?;
                    let state = read_state(&graph, *id, user_id, &self.config.kg, &self.config.calibration);
                    let analysis = self.analyze_graph(&graph, &state, event)?;
                    let prompt = self.prompt_for(&graph, &state, event, &analysis.detections)?;
                    out.push(CycleResult {
                        event_id: event,
                        tier: analysis.tier,
                        mode: analysis.mode,
                        awareness_gap: analysis.awareness_gap,
                        detections: analysis.detections,
                        longitudinal: analysis.longitudinal,
                        prompt,
                    });
                }
                _ => {}
            }
        }
        Ok(out)
    }
}
