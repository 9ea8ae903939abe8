//! Loads the shipped tactic ontology and lists tactics, markers and banks.

use echoguard::config::Config;

fn main() {
    let config = Config::default();
    let kg = &config.kg;
    println!("{} emotion terms, {} cognition tags", kg.emotions().len(), kg.cognitions().len());
    for bank in kg.banks() {
        println!("bank {} ({} entries, threshold {})", bank.id, bank.entries.len(), bank.sim_threshold);
    }
    for tactic in kg.tactics() {
        println!("\n{} ({}), default threshold {}", tactic.id, tactic.display_name, tactic.default_threshold);
        for m in &tactic.markers {
            println!("  {:<22} {:<13} weight {}", m.id, m.kind.name(), m.weight);
        }
    }
}
