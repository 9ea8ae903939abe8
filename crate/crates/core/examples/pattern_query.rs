//! Runs a declarative pattern query against a logged interaction.

use std::sync::Arc;

use chrono::Utc;
use echoguard::agent::{enrich, user_node, EmotionEntry, LogSubmission, PartnerRef};
use echoguard::config::Config;
use echoguard::detection::Detector;
use echoguard::embedding::HashEmbedder;
use echoguard::graph::Graph;
use echoguard::query::ast::Literal;
use echoguard::query::{self, Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::default();
    let detector = Detector::new(config.kg.clone(), Arc::new(HashEmbedder), config.detection.clone());
    let mut g = Graph::new();
    let user = user_node(&mut g)?;
    let submission = LogSubmission {
        partner: PartnerRef::New { role_label: "sibling".into() },
        timestamp: Utc::now(),
        phrases: vec!["you're imagining things again".into(), "see you sunday".into()],
        emotions: vec![EmotionEntry { term: "fear".into(), intensity: 0.7 }],
        cognition_tags: vec!["self_doubt".into()],
        articulation: None,
        context_note: None,
    };
    enrich(&mut g, &config.kg, user, &submission)?;

    let text = r#"MATCH (e:InteractionEvent)-[:contains_phrase]->(p:Phrase)
                  WHERE sim(p, bank("reality_denial")) >= $min
                  RETURN e, p"#;
    let params: Params = [("min".to_owned(), Literal::Number(0.55))].into_iter().collect();
    for binding in query::run(text, &g, &detector, &params)? {
        let p = g.require_node(binding.get("p").expect("returned"))?;
        println!("event {} matched phrase {:?}", binding.get("e").expect("returned"), p.text("text"));
    }
    Ok(())
}
