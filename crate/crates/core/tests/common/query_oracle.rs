//! Brute-force query semantics: enumerate every injective assignment of
//! pattern positions to nodes, then filter.

use std::collections::{BTreeMap, BTreeSet};

use echoguard::graph::{AttrValue, Graph, Node, NodeId};
use echoguard::query::ast::{CmpOp, EdgeDirection, Expr, Literal, Operand, Query};
use echoguard::query::{Params, QueryError, SimilarityProvider};

pub const SUITE: [&str; 10] = [
    "MATCH (a)-->(b) RETURN a, b",
    r#"MATCH (a)-[:felt_emotion]->(m:Emotion {name: "fear"}) RETURN a"#,
    "MATCH (a)-->(b)-->(c) RETURN a, c",
    "MATCH (a)-->(), (a)<--(c) RETURN a, c",
    r#"MATCH (e:InteractionEvent)-[:contains_phrase]->(p:Phrase) WHERE sim(p, bank("b1")) >= 0.5 RETURN e, p"#,
    "MATCH (e:InteractionEvent), (f:InteractionEvent) WHERE before(e, f) RETURN e, f",
    "MATCH (a)-->(b) WHERE a.k < b.k OR NOT a.k = 1 RETURN b, a",
    "MATCH (a {k: 2})-->(b)<--(c) WHERE a.k != c.k RETURN a, b, c",
    "MATCH (u:User)-[:participated_in]->(e:InteractionEvent)-[:about_partner]->(o:OtherPerson) WHERE e.k >= $min RETURN u, o",
    "MATCH (a)-->(a), (a)-[:about_partner]->(b) RETURN a, b",
];

pub fn suite_params() -> Params {
    [("min".to_owned(), Literal::Number(1.0))].into_iter().collect()
}

/// Deterministic similarity that depends only on the node's text and the bank.
pub struct StubSim;

impl StubSim {
    pub fn score(node: &Node, bank: &str) -> f64 {
        match node.attrs.get("text") {
            Some(AttrValue::Text(t)) => ((t.len() * 7 + bank.len() * 3 + node.id.0 as usize) % 10) as f64 / 10.0,
            _ => 0.0,
        }
    }
}

impl SimilarityProvider for StubSim {
    fn has_bank(&self, bank: &str) -> bool {
        bank == "b1"
    }

    fn similarity(&self, node: &Node, bank: &str) -> Result<f64, QueryError> {
        Ok(Self::score(node, bank))
    }
}

#[derive(Clone, Debug)]
enum V {
    T(String),
    N(f64),
    F(bool),
    Ts(i64),
    Missing,
}

fn attr(v: Option<&AttrValue>) -> V {
    match v {
        Some(AttrValue::Text(s)) => V::T(s.clone()),
        Some(AttrValue::Number(n)) => V::N(*n),
        Some(AttrValue::Flag(b)) => V::F(*b),
        Some(AttrValue::Timestamp(t)) => V::Ts(t.timestamp_nanos_opt().unwrap()),
        None => V::Missing,
    }
}

fn lit(l: &Literal) -> V {
    match l {
        Literal::Text(s) => V::T(s.clone()),
        Literal::Number(n) => V::N(*n),
        Literal::Flag(b) => V::F(*b),
    }
}

/// Same-kind values compare by their natural order; a missing value makes
/// every comparison false; differing kinds are only unequal.
fn cmp(a: &V, op: CmpOp, b: &V) -> bool {
    let sign: Option<i8> = match (a, b) {
        (V::Missing, _) | (_, V::Missing) => return false,
        (V::N(x), V::N(y)) => {
            if x < y {
                Some(-1)
            } else if x > y {
                Some(1)
            } else if x == y {
                Some(0)
            } else {
                None
            }
        }
        (V::T(x), V::T(y)) => Some(x.cmp(y) as i8),
        (V::F(x), V::F(y)) => Some(x.cmp(y) as i8),
        (V::Ts(x), V::Ts(y)) => Some(x.cmp(y) as i8),
        _ => None,
    };
    match (sign, op) {
        (None, CmpOp::Ne) => true,
        (None, _) => false,
        (Some(s), CmpOp::Eq) => s == 0,
        (Some(s), CmpOp::Ne) => s != 0,
        (Some(s), CmpOp::Lt) => s < 0,
        (Some(s), CmpOp::Le) => s <= 0,
        (Some(s), CmpOp::Gt) => s > 0,
        (Some(s), CmpOp::Ge) => s >= 0,
    }
}

struct Positions {
    labels: Vec<Option<echoguard::graph::NodeLabel>>,
    props: Vec<Vec<(String, Literal)>>,
    edges: Vec<(usize, usize, Option<echoguard::graph::EdgeLabel>)>,
    named: Vec<(String, usize)>,
    /// Set when one variable carries two different labels.
    dead: bool,
}

fn positions(q: &Query) -> Positions {
    let mut p = Positions {
        labels: Vec::new(),
        props: Vec::new(),
        edges: Vec::new(),
        named: Vec::new(),
        dead: false,
    };
    let place = |np: &echoguard::query::ast::NodePattern, p: &mut Positions| -> usize {
        if let Some(v) = &np.var {
            if let Some((_, i)) = p.named.iter().find(|(n, _)| n == v) {
                let i = *i;
                // Later occurrences add constraints to the same position.
                p.props[i].extend(np.props.iter().cloned());
                match (p.labels[i], np.label) {
                    (None, l) => p.labels[i] = l,
                    (Some(a), Some(b)) if a != b => p.dead = true,
                    _ => {}
                }
                return i;
            }
        }
        let i = p.labels.len();
        p.labels.push(np.label);
        p.props.push(np.props.clone());
        if let Some(v) = &np.var {
            p.named.push((v.clone(), i));
        }
        i
    };
    for path in &q.paths {
        let mut prev = place(&path.start, &mut p);
        for (edge, node) in &path.steps {
            let next = place(node, &mut p);
            match edge.direction {
                EdgeDirection::Right => p.edges.push((prev, next, edge.label)),
                EdgeDirection::Left => p.edges.push((next, prev, edge.label)),
            }
            prev = next;
        }
    }
    p
}

fn eval(expr: &Expr, assign: &[NodeId], vars: &BTreeMap<&str, usize>, g: &Graph, params: &Params) -> bool {
    let node = |v: &str| g.node(assign[vars[v]]).unwrap();
    let operand = |o: &Operand| -> V {
        match o {
            Operand::Literal(l) => lit(l),
            Operand::Param(p) => lit(&params[p]),
            Operand::Property { var, key } => attr(node(var).attrs.get(key)),
            Operand::Sim { var, bank } => V::N(StubSim::score(node(var), bank)),
        }
    };
    match expr {
        Expr::Or(a, b) => eval(a, assign, vars, g, params) || eval(b, assign, vars, g, params),
        Expr::And(a, b) => eval(a, assign, vars, g, params) && eval(b, assign, vars, g, params),
        Expr::Not(a) => !eval(a, assign, vars, g, params),
        Expr::Compare { lhs, op, rhs } => cmp(&operand(lhs), *op, &operand(rhs)),
        Expr::Before(a, b) => {
            let ts = |n: &Node| match n.attrs.get("timestamp") {
                Some(AttrValue::Timestamp(t)) => *t,
                _ => panic!("suite only applies before() to events"),
            };
            ts(node(a)) < ts(node(b))
        }
    }
}

/// Bindings of the named variables, deduplicated and sorted by the return
/// tuple, then by the named variables in order of appearance.
pub fn brute_force(q: &Query, g: &Graph, params: &Params) -> Vec<BTreeMap<String, NodeId>> {
    let p = positions(q);
    let ids: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
    let k = p.labels.len();
    let vars: BTreeMap<&str, usize> = p.named.iter().map(|(v, i)| (v.as_str(), *i)).collect();
    let mut found: BTreeSet<(Vec<NodeId>, Vec<NodeId>)> = BTreeSet::new();
    let mut assign = vec![NodeId(0); k];
    let mut idx = vec![0usize; k];
    if k > ids.len() || p.dead {
        return Vec::new();
    }
    // Odometer over ids^k; injectivity and constraints checked per tuple.
    loop {
        for (slot, &i) in idx.iter().enumerate() {
            assign[slot] = ids[i];
        }
        let distinct = assign.iter().collect::<BTreeSet<_>>().len() == k;
        if distinct && satisfies(&p, &assign, g) && q.filter.as_ref().is_none_or(|f| eval(f, &assign, &vars, g, params)) {
            let ret: Vec<NodeId> = q.returns.iter().map(|v| assign[vars[v.as_str()]]).collect();
            let named: Vec<NodeId> = p.named.iter().map(|(_, i)| assign[*i]).collect();
            found.insert((ret, named));
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return collect(found, &p);
            }
            idx[pos] += 1;
            if idx[pos] < ids.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn collect(found: BTreeSet<(Vec<NodeId>, Vec<NodeId>)>, p: &Positions) -> Vec<BTreeMap<String, NodeId>> {
    let mut seen = BTreeSet::new();
    found
        .into_iter()
        .filter(|(_, named)| seen.insert(named.clone()))
        .map(|(_, named)| p.named.iter().map(|(v, _)| v.clone()).zip(named).collect())
        .collect()
}

fn satisfies(p: &Positions, assign: &[NodeId], g: &Graph) -> bool {
    for (i, id) in assign.iter().enumerate() {
        let n = g.node(*id).unwrap();
        if p.labels[i].is_some_and(|l| l != n.label) {
            return false;
        }
        for (key, l) in &p.props[i] {
            if !cmp(&attr(n.attrs.get(key)), CmpOp::Eq, &lit(l)) {
                return false;
            }
        }
    }
    p.edges.iter().all(|&(s, d, label)| {
        g.edges()
            .any(|e| e.src == assign[s] && e.dst == assign[d] && label.is_none_or(|l| l == e.label))
    })
}
