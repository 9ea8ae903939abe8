//! Starts the HTTP API on an ephemeral port and walks through one cycle
//! with a blocking client.

use std::sync::Arc;

use echoguard::agent::Agent;
use echoguard::service::router;
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    let app = router(Arc::new(Agent::in_memory()));
    rt.spawn(async move { axum::serve(listener, app).await });

    let client = reqwest::blocking::Client::new();
    let user: Value = client.post(format!("{base}/v1/users")).send()?.json()?;
    let uid = user["user_id"].as_str().expect("user id");
    let cycle: Value = client
        .post(format!("{base}/v1/users/{uid}/interactions"))
        .json(&json!({
            "partner": { "new": { "role_label": "coworker" } },
            "timestamp": "2025-03-01T09:30:00Z",
            "phrases": ["that never happened"],
            "emotions": [{ "term": "fear", "intensity": 0.8 }],
            "cognition_tags": ["self_doubt"]
        }))
        .send()?
        .json()?;
    println!("{}", serde_json::to_string_pretty(&cycle)?);

    let bad = client
        .post(format!("{base}/v1/users/{uid}/interactions"))
        .json(&json!({ "partner": { "id": 1 }, "timestamp": "2025-03-01T10:00:00Z", "phrases": [] }))
        .send()?;
    println!("empty submission -> {} {}", bad.status(), bad.text()?);
    Ok(())
}
