//! Temporal property graph with an append-only mutation log.
//!
//! Every mutation is recorded as a [`LogRecord`] before it becomes visible, so
//! a graph can always be rebuilt from its log with [`Graph::replay`]. Nothing
//! is ever removed; corrections are written as `set_attr` records.
//!
//! ## Log format
//!
//! One JSON object per line:
//!
//! ```json
//! {"seq":1,"op":"add_node","payload":{"id":1,"label":"User","attrs":{}},"wall_time":"2025-01-01T00:00:00Z"}
//! ```
//!
//! A snapshot is a single JSON document `{nodes, edges, last_seq}`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema,
)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema,
)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! closed_label {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = GraphError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(GraphError::SchemaViolation(format!(
                        concat!("unknown ", stringify!($name), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

closed_label! {
    /// Closed vocabulary of node labels shared by the episodic and semantic graphs.
    NodeLabel {
        User => "User",
        OtherPerson => "OtherPerson",
        InteractionEvent => "InteractionEvent",
        Emotion => "Emotion",
        Cognition => "Cognition",
        Tactic => "Tactic",
        Marker => "Marker",
        Phrase => "Phrase",
    }
}

closed_label! {
    EdgeLabel {
        ParticipatedIn => "participated_in",
        FeltEmotion => "felt_emotion",
        HasCognition => "has_cognition",
        UsedTactic => "used_tactic",
        ContainsPhrase => "contains_phrase",
        ArticulatedCause => "articulated_cause",
        IndicatedBy => "indicated_by",
        AboutPartner => "about_partner",
    }
}

/// Scalar attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrValue {
    Text(String),
    Number(f64),
    Flag(bool),
    Timestamp(DateTime<Utc>),
}

impl AttrValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttrValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<DateTime<Utc>> {
        match self {
            AttrValue::Timestamp(t) => Some(*t),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AttrValue::Text(_) => "text",
            AttrValue::Number(_) => "number",
            AttrValue::Flag(_) => "flag",
            AttrValue::Timestamp(_) => "timestamp",
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Text(s.to_owned())
    }
}

impl From<String> for AttrValue {
    fn from(s: String) -> Self {
        AttrValue::Text(s)
    }
}

impl From<f64> for AttrValue {
    fn from(n: f64) -> Self {
        AttrValue::Number(n)
    }
}

impl From<bool> for AttrValue {
    fn from(b: bool) -> Self {
        AttrValue::Flag(b)
    }
}

impl From<DateTime<Utc>> for AttrValue {
    fn from(t: DateTime<Utc>) -> Self {
        AttrValue::Timestamp(t)
    }
}

pub type Attrs = BTreeMap<String, AttrValue>;

/// Builds an [`Attrs`] map from `key => value` pairs.
#[macro_export]
macro_rules! attrs {
    () => { $crate::graph::Attrs::new() };
    ($($key:expr => $value:expr),+ $(,)?) => {{
        let mut map = $crate::graph::Attrs::new();
        $(map.insert(::std::string::String::from($key), $crate::graph::AttrValue::from($value));)+
        map
    }};
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: NodeLabel,
    pub attrs: Attrs,
}

impl Node {
    pub fn attr(&self, key: &str) -> Option<&AttrValue> {
        self.attrs.get(key)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).and_then(AttrValue::as_text)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.attrs.get(key).and_then(AttrValue::as_number)
    }

    pub fn timestamp(&self) -> Option<DateTime<Utc>> {
        self.attrs.get("timestamp").and_then(AttrValue::as_timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub label: EdgeLabel,
    pub attrs: Attrs,
}

impl Edge {
    pub fn number(&self, key: &str) -> Option<f64> {
        self.attrs.get(key).and_then(AttrValue::as_number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrTarget {
    Node(NodeId),
    Edge(EdgeId),
}

/// A single graph mutation as it appears in the log.
#[derive(Debug, Clone, PartialEq)]
pub enum Mutation {
    AddNode(Node),
    AddEdge(Edge),
    SetAttr {
        target: AttrTarget,
        key: String,
        value: AttrValue,
    },
}

impl Mutation {
    fn op_name(&self) -> &'static str {
        match self {
            Mutation::AddNode(_) => "add_node",
            Mutation::AddEdge(_) => "add_edge",
            Mutation::SetAttr { .. } => "set_attr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub seq: u64,
    pub mutation: Mutation,
    pub wall_time: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct SetAttrPayload {
    target: AttrTarget,
    key: String,
    value: AttrValue,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    seq: u64,
    op: String,
    payload: serde_json::Value,
    wall_time: DateTime<Utc>,
}

impl Serialize for LogRecord {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error;
        let payload = match &self.mutation {
            Mutation::AddNode(node) => serde_json::to_value(node),
            Mutation::AddEdge(edge) => serde_json::to_value(edge),
            Mutation::SetAttr { target, key, value } => serde_json::to_value(SetAttrPayload {
                target: *target,
                key: key.clone(),
                value: value.clone(),
            }),
        }
        .map_err(S::Error::custom)?;
        RawRecord {
            seq: self.seq,
            op: self.mutation.op_name().to_owned(),
            payload,
            wall_time: self.wall_time,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LogRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = RawRecord::deserialize(deserializer)?;
        let mutation = match raw.op.as_str() {
            "add_node" => Mutation::AddNode(serde_json::from_value(raw.payload).map_err(D::Error::custom)?),
            "add_edge" => Mutation::AddEdge(serde_json::from_value(raw.payload).map_err(D::Error::custom)?),
            "set_attr" => {
                let p: SetAttrPayload = serde_json::from_value(raw.payload).map_err(D::Error::custom)?;
                Mutation::SetAttr {
                    target: p.target,
                    key: p.key,
                    value: p.value,
                }
            }
            other => return Err(D::Error::custom(format!("unknown op `{other}`"))),
        };
        Ok(LogRecord {
            seq: raw.seq,
            mutation,
            wall_time: raw.wall_time,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub last_seq: u64,
}

/// An in-memory property graph. Ids are dense and start at 1.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<EdgeId>>,
    in_adj: Vec<Vec<EdgeId>>,
    by_label: BTreeMap<NodeLabel, Vec<NodeId>>,
    log: Vec<LogRecord>,
    /// Sequence number of the last record folded into the graph. Differs from
    /// `log.len()` only for graphs restored from a snapshot.
    last_seq: u64,
}

fn check_unit_interval(key: &str, attrs: &Attrs, what: &str) -> Result<()> {
    match attrs.get(key) {
        Some(AttrValue::Number(v)) if (0.0..=1.0).contains(v) => Ok(()),
        Some(AttrValue::Number(_)) => Err(GraphError::SchemaViolation(format!(
            "{what} `{key}` must lie in [0, 1]"
        ))),
        Some(other) => Err(GraphError::SchemaViolation(format!(
            "{what} `{key}` must be a number, got {}",
            other.kind()
        ))),
        None => Err(GraphError::SchemaViolation(format!("{what} requires `{key}`"))),
    }
}

fn check_scalars(attrs: &Attrs) -> Result<()> {
    for (key, value) in attrs {
        if let AttrValue::Number(n) = value {
            if !n.is_finite() {
                return Err(GraphError::SchemaViolation(format!("attribute `{key}` is not finite")));
            }
        }
    }
    Ok(())
}

fn check_node_schema(label: NodeLabel, attrs: &Attrs) -> Result<()> {
    check_scalars(attrs)?;
    match label {
        NodeLabel::InteractionEvent => {
            if !matches!(attrs.get("timestamp"), Some(AttrValue::Timestamp(_))) {
                return Err(GraphError::SchemaViolation(
                    "InteractionEvent requires a `timestamp` attribute".into(),
                ));
            }
        }
        NodeLabel::Emotion => {
            for key in ["name", "valence"] {
                if !matches!(attrs.get(key), Some(AttrValue::Text(_))) {
                    return Err(GraphError::SchemaViolation(format!(
                        "Emotion requires a text `{key}` attribute"
                    )));
                }
            }
        }
        _ => {}
    }
    Ok(())
}

fn check_edge_schema(label: EdgeLabel, attrs: &Attrs) -> Result<()> {
    check_scalars(attrs)?;
    match label {
        EdgeLabel::FeltEmotion => check_unit_interval("intensity", attrs, "felt_emotion")?,
        EdgeLabel::ArticulatedCause => check_unit_interval("confidence", attrs, "articulated_cause")?,
        _ => {}
    }
    // Optional range-bound attributes on any other edge.
    for key in ["intensity", "confidence"] {
        if attrs.contains_key(key) {
            check_unit_interval(key, attrs, label.as_str())?;
        }
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sequence number of the most recent mutation.
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Records held in memory, oldest first.
    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    /// Records with `seq > after`.
    pub fn records_after(&self, after: u64) -> &[LogRecord] {
        let start = self.log.partition_point(|r| r.seq <= after);
        &self.log[start..]
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.nodes.get(idx)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.edges.get(idx)
    }

    pub fn require_node(&self, id: NodeId) -> Result<&Node> {
        self.node(id).ok_or_else(|| GraphError::NotFound(format!("node {id}")))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn nodes_by_label(&self, label: NodeLabel) -> &[NodeId] {
        self.by_label.get(&label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn add_node(&mut self, label: NodeLabel, attrs: Attrs) -> Result<NodeId> {
        check_node_schema(label, &attrs)?;
        let id = NodeId(self.nodes.len() as u64 + 1);
        let node = Node { id, label, attrs };
        self.apply(Mutation::AddNode(node), Utc::now())?;
        Ok(id)
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, label: EdgeLabel, attrs: Attrs) -> Result<EdgeId> {
        self.require_node(src)?;
        self.require_node(dst)?;
        check_edge_schema(label, &attrs)?;
        let id = EdgeId(self.edges.len() as u64 + 1);
        self.apply(
            Mutation::AddEdge(Edge {
                id,
                src,
                dst,
                label,
                attrs,
            }),
            Utc::now(),
        )?;
        Ok(id)
    }

    pub fn set_node_attr(&mut self, id: NodeId, key: impl Into<String>, value: impl Into<AttrValue>) -> Result<()> {
        self.apply(
            Mutation::SetAttr {
                target: AttrTarget::Node(id),
                key: key.into(),
                value: value.into(),
            },
            Utc::now(),
        )
    }

    pub fn set_edge_attr(&mut self, id: EdgeId, key: impl Into<String>, value: impl Into<AttrValue>) -> Result<()> {
        self.apply(
            Mutation::SetAttr {
                target: AttrTarget::Edge(id),
                key: key.into(),
                value: value.into(),
            },
            Utc::now(),
        )
    }

    /// Validates and folds one mutation in, appending its log record.
    fn apply(&mut self, mutation: Mutation, wall_time: DateTime<Utc>) -> Result<()> {
        self.fold(&mutation)?;
        self.last_seq += 1;
        self.log.push(LogRecord {
            seq: self.last_seq,
            mutation,
            wall_time,
        });
        Ok(())
    }

    fn fold(&mut self, mutation: &Mutation) -> Result<()> {
        match mutation {
            Mutation::AddNode(node) => {
                let expected = NodeId(self.nodes.len() as u64 + 1);
                if node.id != expected {
                    return Err(GraphError::CorruptLog(format!(
                        "node id {} out of sequence (expected {expected})",
                        node.id
                    )));
                }
                check_node_schema(node.label, &node.attrs)?;
                self.by_label.entry(node.label).or_default().push(node.id);
                self.out_adj.push(Vec::new());
                self.in_adj.push(Vec::new());
                self.nodes.push(node.clone());
            }
            Mutation::AddEdge(edge) => {
                let expected = EdgeId(self.edges.len() as u64 + 1);
                if edge.id != expected {
                    return Err(GraphError::CorruptLog(format!(
                        "edge id {} out of sequence (expected {expected})",
                        edge.id
                    )));
                }
                self.require_node(edge.src)?;
                self.require_node(edge.dst)?;
                check_edge_schema(edge.label, &edge.attrs)?;
                self.out_adj[(edge.src.0 - 1) as usize].push(edge.id);
                self.in_adj[(edge.dst.0 - 1) as usize].push(edge.id);
                self.edges.push(edge.clone());
            }
            Mutation::SetAttr { target, key, value } => match *target {
                AttrTarget::Node(id) => {
                    let node = self.require_node(id)?;
                    let mut attrs = node.attrs.clone();
                    attrs.insert(key.clone(), value.clone());
                    check_node_schema(node.label, &attrs)?;
                    self.nodes[(id.0 - 1) as usize].attrs = attrs;
                }
                AttrTarget::Edge(id) => {
                    let edge = self.edge(id).ok_or_else(|| GraphError::NotFound(format!("edge {id}")))?;
                    let mut attrs = edge.attrs.clone();
                    attrs.insert(key.clone(), value.clone());
                    check_edge_schema(edge.label, &attrs)?;
                    self.edges[(id.0 - 1) as usize].attrs = attrs;
                }
            },
        }
        Ok(())
    }

    /// Incident edges of `node` in the given direction, ascending by edge id,
    /// paired with the node at the far end.
    pub fn neighbors(
        &self,
        node: NodeId,
        label: Option<EdgeLabel>,
        direction: Direction,
    ) -> Result<Vec<(&Edge, &Node)>> {
        self.require_node(node)?;
        let idx = (node.0 - 1) as usize;
        let adj = match direction {
            Direction::Outgoing => &self.out_adj[idx],
            Direction::Incoming => &self.in_adj[idx],
        };
        Ok(adj
            .iter()
            .map(|&eid| &self.edges[(eid.0 - 1) as usize])
            .filter(|e| label.is_none_or(|l| e.label == l))
            .map(|e| {
                let far = match direction {
                    Direction::Outgoing => e.dst,
                    Direction::Incoming => e.src,
                };
                (e, &self.nodes[(far.0 - 1) as usize])
            })
            .collect())
    }

    /// First edge `src -[label]-> dst`, if any.
    pub fn find_edge(&self, src: NodeId, dst: NodeId, label: Option<EdgeLabel>) -> Option<&Edge> {
        let idx = usize::try_from(src.0).ok()?.checked_sub(1)?;
        self.out_adj
            .get(idx)?
            .iter()
            .map(|&eid| &self.edges[(eid.0 - 1) as usize])
            .find(|e| e.dst == dst && label.is_none_or(|l| e.label == l))
    }

    /// Events the user participated in that are about `partner`, ordered by
    /// timestamp and then by node id.
    pub fn events_for_partner(&self, user: NodeId, partner: NodeId) -> Result<Vec<&Node>> {
        self.require_node(user)?;
        self.require_node(partner)?;
        let mut events: Vec<&Node> = self
            .neighbors(user, Some(EdgeLabel::ParticipatedIn), Direction::Outgoing)?
            .into_iter()
            .map(|(_, n)| n)
            .filter(|n| n.label == NodeLabel::InteractionEvent)
            .filter(|n| self.find_edge(n.id, partner, Some(EdgeLabel::AboutPartner)).is_some())
            .collect();
        events.sort_by(|a, b| a.timestamp().cmp(&b.timestamp()).then(a.id.cmp(&b.id)));
        events.dedup_by_key(|n| n.id);
        Ok(events)
    }

    /// Rebuilds a graph from records numbered contiguously from 1.
    pub fn replay<I>(records: I) -> Result<Graph>
    where
        I: IntoIterator<Item = LogRecord>,
    {
        let mut graph = Graph::new();
        for record in records {
            graph.replay_record(record)?;
        }
        Ok(graph)
    }

    /// Folds a record that continues this graph's sequence.
    pub fn replay_record(&mut self, record: LogRecord) -> Result<()> {
        if record.seq != self.last_seq + 1 {
            return Err(GraphError::CorruptLog(format!(
                "expected seq {}, found {}",
                self.last_seq + 1,
                record.seq
            )));
        }
        self.fold(&record.mutation)?;
        self.last_seq = record.seq;
        self.log.push(record);
        Ok(())
    }

    /// Parses a JSON-lines log. Blank lines are ignored.
    pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(records)
    }

    pub fn write_records<W: Write>(records: &[LogRecord], mut writer: W) -> Result<()> {
        for record in records {
            serde_json::to_writer(&mut writer, record).map_err(std::io::Error::other)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load_log(path: &Path) -> Result<Graph> {
        let file = std::fs::File::open(path)?;
        Graph::replay(Graph::read_log(std::io::BufReader::new(file))?)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            last_seq: self.last_seq,
        }
    }

    /// Restores a graph from a snapshot. The restored graph carries no log;
    /// new mutations continue from `last_seq + 1`.
    pub fn from_snapshot(snapshot: Snapshot) -> Result<Graph> {
        let mut graph = Graph::new();
        for node in snapshot.nodes {
            graph.fold(&Mutation::AddNode(node))?;
        }
        for edge in snapshot.edges {
            graph.fold(&Mutation::AddEdge(edge))?;
        }
        graph.last_seq = snapshot.last_seq;
        Ok(graph)
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut writer, &self.snapshot()).map_err(std::io::Error::other)?;
        writer.flush()?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Graph> {
        let text = std::fs::read_to_string(path)?;
        let snapshot: Snapshot = serde_json::from_str(&text).map_err(|e| GraphError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Graph::from_snapshot(snapshot)
    }

    /// Same ids, labels, attributes and adjacency. Logs are not compared.
    pub fn structurally_eq(&self, other: &Graph) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.out_adj == other.out_adj
            && self.in_adj == other.in_adj
            && self.by_label == other.by_label
    }
}
