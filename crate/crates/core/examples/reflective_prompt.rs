//! Generates a grounded reflective prompt, first from templates and then
//! through an external generator that keeps breaking the safety rules.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::Utc;
use echoguard::agent::{enrich, user_node, EmotionEntry, LogSubmission, PartnerRef};
use echoguard::config::Config;
use echoguard::detection::{Detector, Mode};
use echoguard::embedding::HashEmbedder;
use echoguard::graph::Graph;
use echoguard::reflection::{validate, ExternalGenerator, GenerateRequest, PromptEngine};

/// Ignores its instructions and issues a directive.
struct Pushy;

impl ExternalGenerator for Pushy {
    fn generate(&self, _request: &GenerateRequest) -> Result<String, String> {
        Ok("You should leave them.".into())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::default();
    let detector = Detector::new(config.kg.clone(), Arc::new(HashEmbedder), config.detection.clone());
    let mut g = Graph::new();
    let user = user_node(&mut g)?;
    let event = enrich(
        &mut g,
        &config.kg,
        user,
        &LogSubmission {
            partner: PartnerRef::New { role_label: "partner".into() },
            timestamp: Utc::now(),
            phrases: vec!["after all i've done for you".into()],
            emotions: vec![EmotionEntry { term: "sadness".into(), intensity: 0.7 }],
            cognition_tags: vec!["obligation".into()],
            articulation: None,
            context_note: None,
        },
    )?;
    let detections = detector.detect(event, &g, &BTreeMap::new(), Mode::Full)?;
    let top = detections.iter().find(|d| d.fired).expect("guilt induction fires");

    let engine = PromptEngine::new(config.kg.clone(), config.templates.clone(), config.lexicon.clone());
    let prompt = engine.generate("demo-1".into(), top, event, &g, 0)?;
    println!("template {}: {}", prompt.template_id, prompt.text);
    println!("grounding: {}", serde_json::to_string(&prompt.grounding)?);

    let external = engine.with_external(Arc::new(Pushy));
    let prompt = external.generate("demo-2".into(), top, event, &g, 1)?;
    println!("\nafter {} rejected attempts, template {}: {}", prompt.validation.rejected.len(), prompt.template_id, prompt.text);
    println!("passes the lexicon: {}", validate(&prompt.text, &config.lexicon).is_ok());
    Ok(())
}
