//! A scripted multi-partner session used by the replay and service tests.

use chrono::Duration;
use echoguard::agent::{Agent, Articulation, Confirmation, CycleResult, EmotionEntry, Feedback, LogSubmission, PartnerRef, Rating};

use super::graphs::epoch;

pub enum Step {
    Log(LogSubmission),
    /// Feedback on the prompt of the most recent cycle, when it produced one.
    Rate(Rating, Option<Confirmation>),
}

fn sub(i: i64, role: &str, phrases: &[&str], emotions: &[(&str, f64)], tags: &[&str], articulation: Option<f64>) -> LogSubmission {
    LogSubmission {
        partner: PartnerRef::New { role_label: role.into() },
        timestamp: epoch() + Duration::hours(i * 5),
        phrases: phrases.iter().map(|s| (*s).to_owned()).collect(),
        emotions: emotions
            .iter()
            .map(|(t, x)| EmotionEntry { term: (*t).into(), intensity: *x })
            .collect(),
        cognition_tags: tags.iter().map(|s| (*s).to_owned()).collect(),
        articulation: articulation.map(|c| Articulation { cause: Some("work stress".into()), confidence: c }),
        context_note: None,
    }
}

/// Twenty interactions with two partners, interleaved with feedback.
pub fn twenty_cycle_script() -> Vec<Step> {
    use Step::*;
    vec![
        Log(sub(0, "partner", &["that never happened"], &[("fear", 0.6)], &["self_doubt"], None)),
        Rate(Rating::Helpful, None),
        Log(sub(1, "partner", &["you mean the world to me"], &[("joy", 0.8)], &[], Some(0.9))),
        Log(sub(2, "manager", &["that's still not good enough"], &[("sadness", 0.5)], &["standards_shifted"], Some(0.3))),
        Log(sub(3, "partner", &["don't wait up"], &[("sadness", 0.7)], &[], None)),
        Rate(Rating::NotHelpful, None),
        Log(sub(4, "manager", &["now you also have to fix everything else"], &[("anger", 0.6)], &["standards_shifted"], None)),
        Log(sub(5, "partner", &["let's go away this weekend"], &[("joy", 0.9), ("fear", 0.2)], &[], Some(0.5))),
        Log(sub(6, "partner", &["you're remembering it wrong", "stop being so paranoid"], &[("fear", 0.8)], &["self_doubt", "confusion"], Some(0.1))),
        Rate(Rating::Inaccurate, Some(Confirmation::Deny)),
        Log(sub(7, "partner", &["i can't stop thinking about you"], &[("trust", 0.7)], &[], None)),
        Log(sub(8, "manager", &["it's never enough with you"], &[("sadness", 0.7)], &["standards_shifted", "worthlessness"], None)),
        Rate(Rating::Helpful, Some(Confirmation::Confirm)),
        Log(sub(9, "partner", &["whatever i'm going out"], &[("grief", 0.9)], &[], Some(0.2))),
        Log(sub(10, "partner", &["after all i've done for you"], &[("sadness", 0.6)], &["obligation"], None)),
        Rate(Rating::NotHelpful, None),
        Log(sub(11, "partner", &["you're the best part of my day"], &[("ecstasy", 0.95)], &[], None)),
        Log(sub(12, "manager", &["i expected more than this by now"], &[("fear", 0.75)], &["standards_shifted"], Some(0.6))),
        Log(sub(13, "partner", &["if you leave me i don't know what i'll do"], &[("terror", 0.9)], &["fear_of_loss"], None)),
        Rate(Rating::Helpful, None),
        Log(sub(14, "partner", &["not now"], &[("sadness", 0.85)], &[], None)),
        Log(sub(15, "manager", &["that was fine last week but not now"], &[("sadness", 0.8)], &["standards_shifted"], None)),
        Log(sub(16, "partner", &["you're overreacting", "it was just a joke"], &[("pensiveness", 0.4), ("anger", 0.6)], &["confusion"], Some(0.2))),
        Rate(Rating::Inaccurate, None),
        Log(sub(17, "partner", &["i booked us a table at your favourite place"], &[("joy", 0.7)], &[], None)),
        Log(sub(18, "manager", &["you were supposed to know that already"], &[("fear", 0.9)], &["standards_shifted", "self_doubt"], None)),
        Log(sub(19, "partner", &["i'll answer when i feel like it"], &[("sadness", 0.9)], &[], Some(0.05))),
    ]
}

/// Runs the script in process and returns every cycle result.
pub fn run_script(agent: &Agent, user: &str, script: &[Step]) -> Vec<CycleResult> {
    let mut out: Vec<CycleResult> = Vec::new();
    for step in script {
        match step {
            Step::Log(s) => out.push(agent.run_cycle(user, s).expect("scripted submission is valid")),
            Step::Rate(rating, confirmation) => {
                if let Some(p) = out.last().and_then(|c| c.prompt.as_ref()) {
                    agent
                        .apply_feedback(
                            user,
                            &Feedback {
                                prompt_id: p.id.clone(),
                                rating: *rating,
                                confirmation: *confirmation,
                            },
                        )
                        .expect("feedback on an emitted prompt");
                }
            }
        }
    }
    out
}

pub fn serialize(cycles: &[CycleResult]) -> Vec<String> {
    cycles.iter().map(|c| serde_json::to_string(c).unwrap()).collect()
}
