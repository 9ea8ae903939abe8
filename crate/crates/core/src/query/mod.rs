//! Pattern queries over the interaction graph.
//!
//! A small Cypher-like language: `MATCH` one or more paths, an optional
//! `WHERE` filter and a `RETURN` list. See [`parser`] for the grammar.

pub mod ast;
mod eval;
pub mod parser;

pub use ast::Query;
pub use eval::{evaluate, temporal_before, Binding, NoSimilarity, Params, SimilarityProvider};
pub use parser::parse;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Semantic(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Parses and runs `text` in one step.
pub fn run(
    text: &str,
    graph: &crate::graph::Graph,
    sim: &dyn SimilarityProvider,
    params: &Params,
) -> Result<Vec<Binding>, QueryError> {
    evaluate(&parse(text)?, graph, sim, params)
}
