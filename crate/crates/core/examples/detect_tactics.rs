//! Detects tactics for a logged interaction under each detection mode and
//! prints the awareness-gap signal.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::Utc;
use echoguard::agent::{enrich, user_node, Articulation, EmotionEntry, LogSubmission, PartnerRef};
use echoguard::config::Config;
use echoguard::detection::{Detector, Mode};
use echoguard::embedding::HashEmbedder;
use echoguard::graph::Graph;

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
            partner: PartnerRef::New { role_label: "manager".into() },
            timestamp: Utc::now(),
            phrases: vec!["that never happened".into(), "you're remembering it wrong".into()],
            emotions: vec![EmotionEntry { term: "fear".into(), intensity: 0.8 }],
            cognition_tags: vec!["self_doubt".into()],
            articulation: Some(Articulation { cause: Some("the meeting".into()), confidence: 0.2 }),
            context_note: None,
        },
    )?;

    for mode in [Mode::Full, Mode::ClearCutOnly, Mode::KeywordOnly] {
        println!("{}:", mode.as_str());
        for d in detector.detect(event, &g, &BTreeMap::new(), mode)? {
            if d.confidence > 0.0 {
                println!("  {:<22} C={:.3} fired={}", d.tactic_id, d.confidence, d.fired);
            }
        }
    }
    let gap = detector.awareness_gap(&g, event)?;
    println!("awareness gap {:.2} (distress {:.2}, articulation {:.2}), flagged={}", gap.gap, gap.distress, gap.articulation, gap.flagged);
    Ok(())
}
