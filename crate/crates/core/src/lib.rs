pub mod agent;
pub mod bench;
pub mod config;
pub mod detection;
pub mod embedding;
pub mod graph;
pub mod ontology;
pub mod query;
pub mod reflection;
pub mod service;
