//! Runs the full log, analyze and reflect loop for one user, then applies
//! feedback and shows the recalibrated thresholds.

use chrono::{Duration, Utc};
use echoguard::agent::{Agent, EmotionEntry, Feedback, LogSubmission, PartnerRef, Rating};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let agent = Agent::in_memory();
    let user = agent.create_user()?;
    let partner = agent.add_partner(&user, "partner")?;
    let lines = [
        ("you're way too sensitive", "confusion", "sadness"),
        ("it's not a big deal", "confusion", "fear"),
        ("you're imagining things", "self_doubt", "fear"),
        ("it was just a joke", "confusion", "sadness"),
    ];
    let start = Utc::now();
    let mut rated = false;
    for (i, (phrase, tag, emotion)) in lines.iter().enumerate() {
        let cycle = agent.run_cycle(
            &user,
            &LogSubmission {
                partner: PartnerRef::Id(partner),
                timestamp: start + Duration::hours(i as i64),
                phrases: vec![(*phrase).into()],
                emotions: vec![EmotionEntry { term: (*emotion).into(), intensity: 0.75 }],
                cognition_tags: vec![(*tag).into()],
                articulation: None,
                context_note: None,
            },
        )?;
        let fired: Vec<_> = cycle.detections.iter().filter(|d| d.fired).map(|d| d.tactic_id.as_str()).collect();
        println!("event {} tier {:?} mode {} fired {:?}", cycle.event_id, cycle.tier, cycle.mode.as_str(), fired);
        if let Some(p) = &cycle.prompt {
            println!("  prompt: {}", p.text);
            if !rated {
                rated = true;
                let state = agent.apply_feedback(&user, &Feedback { prompt_id: p.id.clone(), rating: Rating::NotHelpful, confirmation: None })?;
                println!("  thresholds after feedback: {:?}", state.thresholds);
            }
        }
    }
    for summary in agent.history(&user, Some(partner))? {
        println!("{} distress {:.2} fired {:?}", summary.timestamp, summary.distress, summary.fired_tactics);
    }
    Ok(())
}
