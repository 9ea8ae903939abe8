use std::fmt;

use crate::graph::{EdgeLabel, NodeLabel};

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub paths: Vec<PathPattern>,
    pub filter: Option<Expr>,
    pub returns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPattern {
    pub start: NodePattern,
    pub steps: Vec<(EdgePattern, NodePattern)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodePattern {
    pub var: Option<String>,
    pub label: Option<NodeLabel>,
    pub props: Vec<(String, Literal)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    /// `-[]->`
    Right,
    /// `<-[]-`
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgePattern {
    pub direction: EdgeDirection,
    pub label: Option<EdgeLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Text(String),
    Number(f64),
    Flag(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Literal(Literal),
    Param(String),
    Property { var: String, key: String },
    Sim { var: String, bank: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Compare { lhs: Operand, op: CmpOp, rhs: Operand },
    Before(String, String),
}

impl Query {
    /// Named variables in order of first appearance in the MATCH clause.
    pub fn variables(&self) -> Vec<&str> {
        let mut vars: Vec<&str> = Vec::new();
        for path in &self.paths {
            for node in path.nodes() {
                if let Some(v) = node.var.as_deref() {
                    if !vars.contains(&v) {
                        vars.push(v);
                    }
                }
            }
        }
        vars
    }

    /// Bank ids referenced by `sim(...)` calls.
    pub fn banks(&self) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(expr) = &self.filter {
            expr.visit_operands(&mut |op| {
                if let Operand::Sim { bank, .. } = op {
                    out.push(bank.as_str());
                }
            });
        }
        out
    }

    pub fn params(&self) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(expr) = &self.filter {
            expr.visit_operands(&mut |op| {
                if let Operand::Param(p) = op {
                    out.push(p.as_str());
                }
            });
        }
        out
    }
}

impl PathPattern {
    pub fn nodes(&self) -> impl Iterator<Item = &NodePattern> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(_, n)| n))
    }
}

impl Expr {
    pub fn visit_operands<'a>(&'a self, f: &mut impl FnMut(&'a Operand)) {
        match self {
            Expr::Or(a, b) | Expr::And(a, b) => {
                a.visit_operands(f);
                b.visit_operands(f);
            }
            Expr::Not(e) => e.visit_operands(f),
            Expr::Compare { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
            Expr::Before(..) => {}
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Or(a, b) | Expr::And(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Not(e) => e.collect_vars(out),
            Expr::Compare { lhs, rhs, .. } => {
                for op in [lhs, rhs] {
                    match op {
                        Operand::Property { var, .. } | Operand::Sim { var, .. } => out.push(var),
                        _ => {}
                    }
                }
            }
            Expr::Before(a, b) => {
                out.push(a);
                out.push(b);
            }
        }
    }
}

fn write_string(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => write_string(f, s),
            // `{:?}` keeps a decimal point or exponent so the text reparses as the same f64.
            Literal::Number(n) => write!(f, "{n:?}"),
            Literal::Flag(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        if let Some(v) = &self.var {
            f.write_str(v)?;
        }
        if let Some(l) = self.label {
            write!(f, ":{l}")?;
        }
        if !self.props.is_empty() {
            if self.var.is_some() || self.label.is_some() {
                f.write_str(" ")?;
            }
            f.write_str("{")?;
            for (i, (k, v)) in self.props.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k}: {v}")?;
            }
            f.write_str("}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for EdgePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = self.label.map(|l| format!(":{l}")).unwrap_or_default();
        match self.direction {
            EdgeDirection::Right => write!(f, "-[{label}]->"),
            EdgeDirection::Left => write!(f, "<-[{label}]-"),
        }
    }
}

impl fmt::Display for PathPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for (edge, node) in &self.steps {
            write!(f, "{edge}{node}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Literal(l) => write!(f, "{l}"),
            Operand::Param(p) => write!(f, "${p}"),
            Operand::Property { var, key } => write!(f, "{var}.{key}"),
            Operand::Sim { var, bank } => {
                write!(f, "sim({var}, bank(")?;
                write_string(f, bank)?;
                f.write_str("))")
            }
        }
    }
}

// Fully parenthesized below the top level so precedence never has to be
// reconstructed when reparsing.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Or(a, b) => write!(f, "({a} OR {b})"),
            Expr::And(a, b) => write!(f, "({a} AND {b})"),
            Expr::Not(e) => write!(f, "NOT {e}"),
            Expr::Compare { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.as_str()),
            Expr::Before(a, b) => write!(f, "before({a}, {b})"),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MATCH ")?;
        for (i, p) in self.paths.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        if let Some(expr) = &self.filter {
            write!(f, " WHERE {expr}")?;
        }
        write!(f, " RETURN {}", self.returns.join(", "))
    }
}
