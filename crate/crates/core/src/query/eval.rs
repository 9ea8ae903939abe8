//! Backtracking matcher.
//!
//! Pattern nodes become slots: one per named variable and one per anonymous
//! node. Slots are placed one at a time, starting from the smallest label
//! index and then following pattern edges out of already-placed slots, so
//! candidates usually come from adjacency lists instead of full scans. The
//! WHERE clause is checked only on complete assignments.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::ast::*;
use super::QueryError;
use crate::graph::{AttrValue, Direction, EdgeLabel, Graph, Node, NodeId, NodeLabel};

/// Supplies `sim(node, bank("id"))` scores in [-1, 1].
pub trait SimilarityProvider {
    fn has_bank(&self, bank: &str) -> bool;
    fn similarity(&self, node: &Node, bank: &str) -> Result<f64, QueryError>;
}

/// A provider that knows no banks, for queries without `sim`.
pub struct NoSimilarity;

impl SimilarityProvider for NoSimilarity {
    fn has_bank(&self, _bank: &str) -> bool {
        false
    }

    fn similarity(&self, _node: &Node, bank: &str) -> Result<f64, QueryError> {
        Err(QueryError::Config(format!("unknown bank `{bank}`")))
    }
}

pub type Params = BTreeMap<String, Literal>;

/// Variable name to node, over every named variable of the query.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Binding(BTreeMap<String, NodeId>);

impl Binding {
    pub fn get(&self, var: &str) -> Option<NodeId> {
        self.0.get(var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, NodeId)> for Binding {
    fn from_iter<I: IntoIterator<Item = (String, NodeId)>>(iter: I) -> Self {
        Binding(iter.into_iter().collect())
    }
}

#[derive(Debug, Default)]
struct Slot {
    var: Option<String>,
    labels: BTreeSet<NodeLabel>,
    props: Vec<(String, Literal)>,
}

#[derive(Debug, Clone, Copy)]
struct EdgeConstraint {
    src: usize,
    dst: usize,
    label: Option<EdgeLabel>,
}

struct Compiled {
    slots: Vec<Slot>,
    edges: Vec<EdgeConstraint>,
    /// Slot index of every named variable, in declaration order.
    named: Vec<usize>,
    /// Slot index of every returned variable.
    returns: Vec<usize>,
}

fn compile(query: &Query) -> Compiled {
    let mut slots: Vec<Slot> = Vec::new();
    let mut by_var: BTreeMap<String, usize> = BTreeMap::new();
    let mut named = Vec::new();
    let mut edges = Vec::new();

    let mut slot_for = |pattern: &NodePattern, slots: &mut Vec<Slot>| -> usize {
        let idx = match &pattern.var {
            Some(v) => *by_var.entry(v.clone()).or_insert_with(|| {
                slots.push(Slot {
                    var: Some(v.clone()),
                    ..Slot::default()
                });
                named.push(slots.len() - 1);
                slots.len() - 1
            }),
            None => {
                slots.push(Slot::default());
                slots.len() - 1
            }
        };
        let slot = &mut slots[idx];
        slot.labels.extend(pattern.label);
        slot.props.extend(pattern.props.iter().cloned());
        idx
    };

    for path in &query.paths {
        let mut prev = slot_for(&path.start, &mut slots);
        for (edge, node) in &path.steps {
            let next = slot_for(node, &mut slots);
            let (src, dst) = match edge.direction {
                EdgeDirection::Right => (prev, next),
                EdgeDirection::Left => (next, prev),
            };
            edges.push(EdgeConstraint {
                src,
                dst,
                label: edge.label,
            });
            prev = next;
        }
    }

    let returns = query
        .returns
        .iter()
        .map(|v| {
            slots
                .iter()
                .position(|s| s.var.as_deref() == Some(v))
                .expect("parser checks that returned variables are bound")
        })
        .collect();

    Compiled {
        slots,
        edges,
        named,
        returns,
    }
}

/// Runtime value of an operand.
#[derive(Debug, Clone, PartialEq)]
enum Value {
    Text(String),
    Number(f64),
    Flag(bool),
    Timestamp(DateTime<Utc>),
    Missing,
}

impl From<&Literal> for Value {
    fn from(l: &Literal) -> Self {
        match l {
            Literal::Text(s) => Value::Text(s.clone()),
            Literal::Number(n) => Value::Number(*n),
            Literal::Flag(b) => Value::Flag(*b),
        }
    }
}

impl From<&AttrValue> for Value {
    fn from(a: &AttrValue) -> Self {
        match a {
            AttrValue::Text(s) => Value::Text(s.clone()),
            AttrValue::Number(n) => Value::Number(*n),
            AttrValue::Flag(b) => Value::Flag(*b),
            AttrValue::Timestamp(t) => Value::Timestamp(*t),
        }
    }
}

/// Comparison of two values. Missing values and mismatched kinds compare
/// false, except that mismatched kinds are `!=`.
fn compare(lhs: &Value, op: CmpOp, rhs: &Value) -> bool {
    use std::cmp::Ordering;
    let ord: Option<Ordering> = match (lhs, rhs) {
        (Value::Missing, _) | (_, Value::Missing) => return false,
        (Value::Number(a), Value::Number(b)) => a.partial_cmp(b),
        (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
        (Value::Flag(a), Value::Flag(b)) => Some(a.cmp(b)),
        (Value::Timestamp(a), Value::Timestamp(b)) => Some(a.cmp(b)),
        _ => return op == CmpOp::Ne,
    };
    let Some(ord) = ord else {
        return op == CmpOp::Ne;
    };
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

fn props_match(node: &Node, props: &[(String, Literal)]) -> bool {
    props.iter().all(|(key, lit)| {
        node.attr(key)
            .is_some_and(|v| compare(&Value::from(v), CmpOp::Eq, &Value::from(lit)))
    })
}

/// `timestamp(a) < timestamp(b)`; both nodes must carry a comparable
/// `timestamp` attribute.
pub fn temporal_before(a: &Node, b: &Node) -> Result<bool, QueryError> {
    let ts = |n: &Node| -> Result<Value, QueryError> {
        match n.attr("timestamp") {
            Some(v @ (AttrValue::Timestamp(_) | AttrValue::Number(_))) => Ok(Value::from(v)),
            _ => Err(QueryError::Semantic(format!(
                "node {} has no timestamp attribute",
                n.id
            ))),
        }
    };
    let (ta, tb) = (ts(a)?, ts(b)?);
    match (&ta, &tb) {
        (Value::Timestamp(_), Value::Timestamp(_)) | (Value::Number(_), Value::Number(_)) => {
            Ok(compare(&ta, CmpOp::Lt, &tb))
        }
        _ => Err(QueryError::Semantic(format!(
            "timestamps of nodes {} and {} are not comparable",
            a.id, b.id
        ))),
    }
}

struct Evaluator<'a> {
    graph: &'a Graph,
    sim: &'a dyn SimilarityProvider,
    params: &'a Params,
    compiled: Compiled,
    filter: Option<&'a Expr>,
    vars: BTreeMap<&'a str, usize>,
}

impl<'a> Evaluator<'a> {
    fn node_of(&self, assignment: &[Option<NodeId>], var: &str) -> &'a Node {
        let slot = self.vars[var];
        let id = assignment[slot].expect("complete assignment");
        self.graph.node(id).expect("assigned nodes exist")
    }

    fn operand(&self, assignment: &[Option<NodeId>], op: &Operand) -> Result<Value, QueryError> {
        Ok(match op {
            Operand::Literal(l) => Value::from(l),
            Operand::Param(p) => Value::from(&self.params[p]),
            Operand::Property { var, key } => self
                .node_of(assignment, var)
                .attr(key)
                .map_or(Value::Missing, Value::from),
            Operand::Sim { var, bank } => {
                Value::Number(self.sim.similarity(self.node_of(assignment, var), bank)?)
            }
        })
    }

    fn eval(&self, assignment: &[Option<NodeId>], expr: &Expr) -> Result<bool, QueryError> {
        Ok(match expr {
            Expr::Or(a, b) => self.eval(assignment, a)? || self.eval(assignment, b)?,
            Expr::And(a, b) => self.eval(assignment, a)? && self.eval(assignment, b)?,
            Expr::Not(e) => !self.eval(assignment, e)?,
            Expr::Compare { lhs, op, rhs } => {
                let l = self.operand(assignment, lhs)?;
                let r = self.operand(assignment, rhs)?;
                compare(&l, *op, &r)
            }
            Expr::Before(a, b) => {
                temporal_before(self.node_of(assignment, a), self.node_of(assignment, b))?
            }
        })
    }

    fn candidate_count(&self, slot: &Slot) -> usize {
        match slot.labels.len() {
            0 => self.graph.node_count(),
            1 => self.graph.nodes_by_label(*slot.labels.first().unwrap()).len(),
            _ => 0,
        }
    }

    /// Placement order: most selective slot first, then slots reachable over
    /// pattern edges, again by selectivity.
    fn plan(&self) -> Vec<usize> {
        let n = self.compiled.slots.len();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let connected = |s: usize| {
                self.compiled
                    .edges
                    .iter()
                    .any(|e| (e.src == s && placed[e.dst]) || (e.dst == s && placed[e.src]))
            };
            let next = (0..n)
                .filter(|&s| !placed[s])
                .min_by_key(|&s| {
                    (
                        !connected(s),
                        self.candidate_count(&self.compiled.slots[s]),
                        s,
                    )
                })
                .expect("unplaced slot remains");
            placed[next] = true;
            order.push(next);
        }
        order
    }

    fn candidates(&self, slot: usize, assignment: &[Option<NodeId>]) -> Vec<NodeId> {
        for e in &self.compiled.edges {
            let (anchor, direction) = if e.dst == slot && e.src != slot {
                (assignment[e.src], Direction::Outgoing)
            } else if e.src == slot && e.dst != slot {
                (assignment[e.dst], Direction::Incoming)
            } else {
                continue;
            };
            if let Some(anchor) = anchor {
                let mut ids: Vec<NodeId> = self
                    .graph
                    .neighbors(anchor, e.label, direction)
                    .expect("anchor exists")
                    .into_iter()
                    .map(|(_, n)| n.id)
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                return ids;
            }
        }
        let spec = &self.compiled.slots[slot];
        match spec.labels.len() {
            0 => self.graph.nodes().map(|n| n.id).collect(),
            1 => self.graph.nodes_by_label(*spec.labels.first().unwrap()).to_vec(),
            _ => Vec::new(),
        }
    }

    fn consistent(&self, slot: usize, node: &Node, assignment: &[Option<NodeId>]) -> bool {
        let spec = &self.compiled.slots[slot];
        if spec.labels.iter().any(|&l| l != node.label) || !props_match(node, &spec.props) {
            return false;
        }
        if assignment.contains(&Some(node.id)) {
            return false;
        }
        self.compiled.edges.iter().all(|e| {
            let resolve = |s: usize| if s == slot { Some(node.id) } else { assignment[s] };
            match (resolve(e.src), resolve(e.dst)) {
                (Some(src), Some(dst)) if e.src == slot || e.dst == slot => {
                    self.graph.find_edge(src, dst, e.label).is_some()
                }
                _ => true,
            }
        })
    }

    fn search(
        &self,
        order: &[usize],
        depth: usize,
        assignment: &mut Vec<Option<NodeId>>,
        out: &mut BTreeMap<(Vec<NodeId>, Vec<NodeId>), Binding>,
    ) -> Result<(), QueryError> {
        if depth == order.len() {
            if let Some(filter) = self.filter {
                if !self.eval(assignment, filter)? {
                    return Ok(());
                }
            }
            let pick = |slots: &[usize]| -> Vec<NodeId> {
                slots.iter().map(|&s| assignment[s].expect("complete")).collect()
            };
            let key = (pick(&self.compiled.returns), pick(&self.compiled.named));
            out.entry(key).or_insert_with(|| {
                self.compiled
                    .named
                    .iter()
                    .map(|&s| {
                        (
                            self.compiled.slots[s].var.clone().expect("named slot"),
                            assignment[s].expect("complete"),
                        )
                    })
                    .collect()
            });
            return Ok(());
        }
        let slot = order[depth];
        for id in self.candidates(slot, assignment) {
            let node = self.graph.node(id).expect("candidate exists");
            if !self.consistent(slot, node, assignment) {
                continue;
            }
            assignment[slot] = Some(id);
            self.search(order, depth + 1, assignment, out)?;
            assignment[slot] = None;
        }
        Ok(())
    }
}

/// Runs `query` against `graph`.
///
/// Matching is injective: distinct pattern nodes bind distinct graph nodes.
/// Anonymous nodes are existential, so results are deduplicated on the named
/// variables and sorted by the returned variables, then by all named ones.
pub fn evaluate(
    query: &Query,
    graph: &Graph,
    sim: &dyn SimilarityProvider,
    params: &Params,
) -> Result<Vec<Binding>, QueryError> {
    if let Some(bank) = query.banks().into_iter().find(|b| !sim.has_bank(b)) {
        return Err(QueryError::Config(format!("unknown bank `{bank}`")));
    }
    if let Some(p) = query.params().into_iter().find(|p| !params.contains_key(*p)) {
        return Err(QueryError::Semantic(format!("parameter `${p}` is not supplied")));
    }
    let compiled = compile(query);
    let vars = query
        .variables()
        .into_iter()
        .map(|v| {
            let slot = compiled.slots.iter().position(|s| s.var.as_deref() == Some(v));
            (v, slot.expect("every variable has a slot"))
        })
        .collect();
    let ev = Evaluator {
        graph,
        sim,
        params,
        compiled,
        filter: query.filter.as_ref(),
        vars,
    };
    let order = ev.plan();
    let mut assignment = vec![None; ev.compiled.slots.len()];
    let mut out = BTreeMap::new();
    ev.search(&order, 0, &mut assignment, &mut out)?;
    Ok(out.into_values().collect())
}
