//! Recursive-descent parser for the pattern language.
//!
//! ```text
//! query   := "MATCH" path ("," path)* ("WHERE" expr)? "RETURN" var ("," var)*
//! path    := node (edge node)*
//! node    := "(" var? (":" Label)? props? ")"
//! edge    := "-[" (":" label)? "]->" | "<-[" (":" label)? "]-" | "-->" | "<--"
//! props   := "{" key ":" literal ("," key ":" literal)* "}"
//! expr    := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | "(" expr ")" | "before(" var "," var ")" | operand cmp operand
//! operand := literal | "$" name | var "." key | "sim(" var "," "bank(" string "))"
//! ```
//!
//! Keywords are case-insensitive.

use super::ast::*;
use super::QueryError;

const RESERVED: [&str; 8] = ["match", "where", "return", "and", "or", "not", "true", "false"];

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

pub fn parse(text: &str) -> Result<Query, QueryError> {
    let mut p = Parser { src: text, pos: 0 };
    let query = p.query()?;
    check_bindings(&query)?;
    Ok(query)
}

fn check_bindings(query: &Query) -> Result<(), QueryError> {
    let bound = query.variables();
    let unbound = |v: &str| !bound.contains(&v);
    if let Some(expr) = &query.filter {
        if let Some(v) = expr.variables().into_iter().find(|v| unbound(v)) {
            return Err(QueryError::Semantic(format!("variable `{v}` in WHERE is not bound by MATCH")));
        }
    }
    if let Some(v) = query.returns.iter().find(|v| unbound(v)) {
        return Err(QueryError::Semantic(format!("variable `{v}` in RETURN is not bound by MATCH")));
    }
    Ok(())
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn line_col(&self, pos: usize) -> (usize, usize) {
        let before = &self.src[..pos];
        let line = before.matches('\n').count() + 1;
        let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
        (line, col)
    }

    fn error_at(&self, pos: usize, message: impl Into<String>) -> QueryError {
        let (line, column) = self.line_col(pos);
        QueryError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn error(&self, message: impl Into<String>) -> QueryError {
        self.error_at(self.pos, message)
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek_char(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    /// Consumes `token` (after whitespace) if present.
    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), QueryError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    fn peek_ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        let end = chars
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map_or(rest.len(), |(i, _)| i);
        Some(&rest[..end])
    }

    fn ident(&mut self) -> Result<&'a str, QueryError> {
        let id = self.peek_ident().ok_or_else(|| self.error("expected identifier"))?;
        self.pos += id.len();
        Ok(id)
    }

    fn peek_keyword(&mut self, kw: &str) -> bool {
        self.peek_ident().is_some_and(|id| id.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{kw}`")))
        }
    }

    fn variable(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        let start = self.pos;
        let id = self.ident()?;
        if RESERVED.iter().any(|k| id.eq_ignore_ascii_case(k)) {
            return Err(self.error_at(start, format!("`{id}` is a reserved word")));
        }
        Ok(id.to_owned())
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        self.expect_keyword("MATCH")?;
        let mut paths = vec![self.path()?];
        while self.eat(",") {
            paths.push(self.path()?);
        }
        let filter = if self.eat_keyword("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };
        self.expect_keyword("RETURN")?;
        let mut returns = vec![self.variable()?];
        while self.eat(",") {
            returns.push(self.variable()?);
        }
        self.skip_ws();
        if !self.rest().is_empty() {
            return Err(self.error("unexpected trailing input"));
        }
        Ok(Query {
            paths,
            filter,
            returns,
        })
    }

    fn path(&mut self) -> Result<PathPattern, QueryError> {
        let start = self.node()?;
        let mut steps = Vec::new();
        while let Some(edge) = self.edge()? {
            steps.push((edge, self.node()?));
        }
        Ok(PathPattern { start, steps })
    }

    fn node(&mut self) -> Result<NodePattern, QueryError> {
        self.expect("(")?;
        let mut node = NodePattern::default();
        if self.peek_ident().is_some() {
            node.var = Some(self.variable()?);
        }
        if self.eat(":") {
            self.skip_ws();
            let at = self.pos;
            let name = self.ident()?;
            node.label = Some(
                name.parse()
                    .map_err(|_| self.error_at(at, format!("unknown node label `{name}`")))?,
            );
        }
        if self.eat("{") {
            loop {
                let key = self.ident()?.to_owned();
                self.expect(":")?;
                let value = self.literal()?;
                node.props.push((key, value));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("}")?;
        }
        self.expect(")")?;
        Ok(node)
    }

    fn edge_label(&mut self) -> Result<Option<crate::graph::EdgeLabel>, QueryError> {
        if !self.eat(":") {
            return Ok(None);
        }
        self.skip_ws();
        let at = self.pos;
        let name = self.ident()?;
        name.parse()
            .map(Some)
            .map_err(|_| self.error_at(at, format!("unknown edge label `{name}`")))
    }

    fn edge(&mut self) -> Result<Option<EdgePattern>, QueryError> {
        if self.eat("-->") {
            return Ok(Some(EdgePattern {
                direction: EdgeDirection::Right,
                label: None,
            }));
        }
        if self.eat("<--") {
            return Ok(Some(EdgePattern {
                direction: EdgeDirection::Left,
                label: None,
            }));
        }
        if self.eat("-[") {
            let label = self.edge_label()?;
            self.expect("]->")?;
            return Ok(Some(EdgePattern {
                direction: EdgeDirection::Right,
                label,
            }));
        }
        if self.eat("<-[") {
            let label = self.edge_label()?;
            self.expect("]-")?;
            return Ok(Some(EdgePattern {
                direction: EdgeDirection::Left,
                label,
            }));
        }
        Ok(None)
    }

    fn string(&mut self) -> Result<String, QueryError> {
        self.expect("\"")?;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        loop {
            match chars.next() {
                None => return Err(self.error("unterminated string")),
                Some((i, '"')) => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                Some((i, '\\')) => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    _ => return Err(self.error_at(self.pos + i, "invalid escape")),
                },
                Some((_, c)) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<f64, QueryError> {
        self.skip_ws();
        let rest = self.rest();
        let bytes = rest.as_bytes();
        let mut end = 0;
        if bytes.first() == Some(&b'-') {
            end += 1;
        }
        let digits_start = end;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end < bytes.len() && bytes[end] == b'.' {
            end += 1;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end == digits_start {
            return Err(self.error("expected number"));
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut exp = end + 1;
            if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                exp += 1;
            }
            let exp_digits = exp;
            while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                exp += 1;
            }
            if exp > exp_digits {
                end = exp;
            }
        }
        let value: f64 = rest[..end]
            .parse()
            .map_err(|_| self.error(format!("invalid number `{}`", &rest[..end])))?;
        if !value.is_finite() {
            return Err(self.error("number out of range"));
        }
        self.pos += end;
        Ok(value)
    }

    fn literal(&mut self) -> Result<Literal, QueryError> {
        match self.peek_char() {
            Some('"') => Ok(Literal::Text(self.string()?)),
            Some(c) if c == '-' || c.is_ascii_digit() => Ok(Literal::Number(self.number()?)),
            _ if self.eat_keyword("true") => Ok(Literal::Flag(true)),
            _ if self.eat_keyword("false") => Ok(Literal::Flag(false)),
            _ => Err(self.error("expected literal")),
        }
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.and_expr()?;
        while self.eat_keyword("OR") {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.unary()?;
        while self.eat_keyword("AND") {
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn is_call(&mut self, name: &str) -> bool {
        if !self.peek_keyword(name) {
            return false;
        }
        self.src[self.pos + name.len()..].trim_start().starts_with('(')
    }

    fn unary(&mut self) -> Result<Expr, QueryError> {
        if self.eat_keyword("NOT") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.eat("(") {
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        if self.is_call("before") {
            self.pos += "before".len();
            self.expect("(")?;
            let a = self.variable()?;
            self.expect(",")?;
            let b = self.variable()?;
            self.expect(")")?;
            return Ok(Expr::Before(a, b));
        }
        let lhs = self.operand()?;
        let op = self.cmp_op()?;
        let rhs = self.operand()?;
        Ok(Expr::Compare { lhs, op, rhs })
    }

    fn cmp_op(&mut self) -> Result<CmpOp, QueryError> {
        for (tok, op) in [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("!=", CmpOp::Ne),
            ("<>", CmpOp::Ne),
            ("=", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ] {
            if self.eat(tok) {
                return Ok(op);
            }
        }
        Err(self.error("expected comparison operator"))
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        if self.eat("$") {
            let name = self.ident()?;
            return Ok(Operand::Param(name.to_owned()));
        }
        if self.is_call("sim") {
            self.pos += "sim".len();
            self.expect("(")?;
            let var = self.variable()?;
            self.expect(",")?;
            if !self.is_call("bank") {
                return Err(self.error("expected `bank(\"id\")`"));
            }
            self.pos += "bank".len();
            self.expect("(")?;
            let bank = self.string()?;
            self.expect(")")?;
            self.expect(")")?;
            return Ok(Operand::Sim { var, bank });
        }
        match self.peek_char() {
            Some('"') | Some('-') => return Ok(Operand::Literal(self.literal()?)),
            Some(c) if c.is_ascii_digit() => return Ok(Operand::Literal(self.literal()?)),
            _ => {}
        }
        if self.peek_keyword("true") || self.peek_keyword("false") {
            return Ok(Operand::Literal(self.literal()?));
        }
        if self.peek_ident().is_some() {
            let var = self.variable()?;
            self.expect(".")?;
            let key = self.ident()?.to_owned();
            return Ok(Operand::Property { var, key });
        }
        Err(self.error("expected operand"))
    }
}
