//! Scores free-text phrases against every phrase bank.

use echoguard::config::Config;
use echoguard::embedding::{bank_similarity, HashEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::default();
    let phrases = [
        "you're just imagining things",
        "after everything i did for you",
        "you're overreacting again",
        "want to get lunch on friday",
    ];
    for phrase in phrases {
        println!("{phrase:?}");
        for bank in config.kg.banks() {
            let m = bank_similarity(phrase, &bank.id, &bank.entries, &HashEmbedder)?;
            let hit = if m.score >= bank.sim_threshold { "*" } else { " " };
            println!("  {hit} {:<20} {:.3}  {:?}", bank.id, m.score, m.best_entry);
        }
    }
    Ok(())
}
