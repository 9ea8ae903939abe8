//! Random graphs and mutation scripts.

use chrono::{DateTime, Duration, Utc};
use echoguard::attrs;
use echoguard::graph::{AttrValue, Attrs, EdgeId, EdgeLabel, Graph, NodeId, NodeLabel};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_700_000_000, 0).unwrap()
}

const QUERY_LABELS: [NodeLabel; 5] = [
    NodeLabel::User,
    NodeLabel::OtherPerson,
    NodeLabel::InteractionEvent,
    NodeLabel::Emotion,
    NodeLabel::Phrase,
];

const QUERY_EDGES: [EdgeLabel; 4] = [
    EdgeLabel::ParticipatedIn,
    EdgeLabel::FeltEmotion,
    EdgeLabel::ContainsPhrase,
    EdgeLabel::AboutPartner,
];

/// A value for the free attribute `k`: usually a small integer, sometimes
/// text or absent, so comparisons see mixed kinds and missing values.
fn k_value(rng: &mut impl Rng) -> Option<AttrValue> {
    match rng.random_range(0..10) {
        0 => None,
        1 => Some(AttrValue::Text(["a", "b"].choose(rng).unwrap().to_string())),
        _ => Some(AttrValue::Number(rng.random_range(0..4) as f64)),
    }
}

fn node_attrs(label: NodeLabel, rng: &mut impl Rng) -> Attrs {
    let mut a = match label {
        NodeLabel::InteractionEvent => attrs! { "timestamp" => epoch() + Duration::minutes(rng.random_range(0..4)) },
        NodeLabel::Emotion => {
            let name = *["fear", "joy", "self_doubt"].choose(rng).unwrap();
            let valence = if name == "joy" { "positive" } else { "negative" };
            attrs! { "name" => name, "valence" => valence }
        }
        NodeLabel::Phrase => attrs! { "text" => *["one", "two", "three"].choose(rng).unwrap() },
        _ => Attrs::new(),
    };
    if let Some(k) = k_value(rng) {
        a.insert("k".into(), k);
    }
    a
}

fn edge_attrs(label: EdgeLabel, rng: &mut impl Rng) -> Attrs {
    match label {
        EdgeLabel::FeltEmotion => attrs! { "intensity" => (rng.random_range(0..=10) as f64) / 10.0 },
        EdgeLabel::ArticulatedCause => attrs! { "confidence" => (rng.random_range(0..=10) as f64) / 10.0 },
        _ => Attrs::new(),
    }
}

/// Up to 12 nodes with random labels and up to 2n random edges, self-loops
/// and parallel edges included.
pub fn random_query_graph(rng: &mut impl Rng) -> Graph {
    let mut g = Graph::new();
    let n = rng.random_range(1..=12);
    for _ in 0..n {
        let label = *QUERY_LABELS.choose(rng).unwrap();
        let attrs = node_attrs(label, rng);
        g.add_node(label, attrs).unwrap();
    }
    for _ in 0..rng.random_range(0..=2 * n) {
        let src = NodeId(rng.random_range(1..=n as u64));
        let dst = NodeId(rng.random_range(1..=n as u64));
        let label = *QUERY_EDGES.choose(rng).unwrap();
        let attrs = edge_attrs(label, rng);
        g.add_edge(src, dst, label, attrs).unwrap();
    }
    g
}

/// Applies `len` random, schema-valid mutations to a fresh graph.
pub fn random_script(rng: &mut impl Rng, len: usize) -> Graph {
    let mut g = Graph::new();
    while g.last_seq() < len as u64 {
        let nodes = g.node_count() as u64;
        let edges = g.edge_count() as u64;
        match rng.random_range(0..10) {
            _ if nodes == 0 => {
                let label = *NodeLabel::ALL.choose(rng).unwrap();
                let attrs = node_attrs(label, rng);
                g.add_node(label, attrs).unwrap();
            }
            0..=2 => {
                let label = *NodeLabel::ALL.choose(rng).unwrap();
                let attrs = node_attrs(label, rng);
                g.add_node(label, attrs).unwrap();
            }
            3..=5 => {
                let label = *EdgeLabel::ALL.choose(rng).unwrap();
                let attrs = edge_attrs(label, rng);
                g.add_edge(NodeId(rng.random_range(1..=nodes)), NodeId(rng.random_range(1..=nodes)), label, attrs)
                    .unwrap();
            }
            6..=7 => {
                let id = NodeId(rng.random_range(1..=nodes));
                let value = random_value(rng);
                g.set_node_attr(id, *["k", "note", "score"].choose(rng).unwrap(), value).unwrap();
            }
            _ if edges > 0 => {
                let id = EdgeId(rng.random_range(1..=edges));
                g.set_edge_attr(id, "weight", random_value(rng)).unwrap();
            }
            _ => {}
        }
    }
    g
}

fn random_value(rng: &mut impl Rng) -> AttrValue {
    match rng.random_range(0..4) {
        0 => AttrValue::Text(format!("t{}", rng.random_range(0..100))),
        1 => AttrValue::Number(rng.random_range(-1e6..1e6)),
        2 => AttrValue::Flag(rng.random()),
        _ => AttrValue::Timestamp(epoch() + Duration::milliseconds(rng.random_range(0..10_000_000))),
    }
}
