//! Generates a small synthetic corpus and evaluates all three modes.

use std::sync::Arc;

use echoguard::bench::{gen_corpus, render_markdown, run_eval, CorpusSpec, EvalMode};
use echoguard::config::Config;
use echoguard::detection::Detector;
use echoguard::embedding::HashEmbedder;

fn main() {
    let config = Config::default();
    let detector = Detector::new(config.kg.clone(), Arc::new(HashEmbedder), config.detection.clone());
    let spec = CorpusSpec::new(42, 200, 0.3);
    let corpus = gen_corpus(&spec, &config);
    let reports: Vec<_> = EvalMode::ALL
        .into_iter()
        .map(|m| run_eval(&corpus, &config, &detector, m, Some(spec.seed)).expect("evaluation runs"))
        .collect();
    print!("{}", render_markdown(&reports));
}
