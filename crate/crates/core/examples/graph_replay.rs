//! Builds a small episodic graph, persists its mutation log and rebuilds it.

use echoguard::attrs;
use echoguard::graph::{Direction, EdgeLabel, Graph, NodeLabel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut g = Graph::new();
    let user = g.add_node(NodeLabel::User, attrs! {})?;
    let partner = g.add_node(NodeLabel::OtherPerson, attrs! { "role_label" => "roommate" })?;
    let when = chrono::Utc::now();
    for i in 0..3 {
        let event = g.add_node(NodeLabel::InteractionEvent, attrs! { "timestamp" => when + chrono::Duration::hours(i) })?;
        g.add_edge(user, event, EdgeLabel::ParticipatedIn, attrs! {})?;
        g.add_edge(event, partner, EdgeLabel::AboutPartner, attrs! {})?;
    }

    let mut buf = Vec::new();
    Graph::write_records(g.log(), &mut buf)?;
    let rebuilt = Graph::replay(Graph::read_log(buf.as_slice())?)?;
    println!("{} records, {} nodes, {} edges", g.log().len(), rebuilt.node_count(), rebuilt.edge_count());
    println!("structurally equal: {}", rebuilt.structurally_eq(&g));
    println!("events with the roommate: {}", rebuilt.events_for_partner(user, partner)?.len());
    println!("user out-degree: {}", rebuilt.neighbors(user, None, Direction::Outgoing)?.len());
    Ok(())
}
