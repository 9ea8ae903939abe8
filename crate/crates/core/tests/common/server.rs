//! The HTTP API on an ephemeral port, driven by a blocking client.

use std::sync::Arc;

use echoguard::agent::Agent;
use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct TestServer {
    pub agent: Arc<Agent>,
    pub base: String,
    pub client: Client,
    _rt: tokio::runtime::Runtime,
}

impl TestServer {
    pub fn start(agent: Agent) -> Self {
        let agent = Arc::new(agent);
        let rt = tokio::runtime::Runtime::new().unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = echoguard::service::router(agent.clone());
        rt.spawn(async move { axum::serve(listener, app).await });
        Self {
            agent,
            base,
            client: Client::new(),
            _rt: rt,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn post<B: Serialize>(&self, path: &str, body: &B) -> Response {
        self.client.post(self.url(path)).json(body).send().unwrap()
    }

    pub fn post_raw(&self, path: &str, body: &str) -> Response {
        self.client
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body.to_owned())
            .send()
            .unwrap()
    }

    pub fn get(&self, path: &str) -> Response {
        self.client.get(self.url(path)).send().unwrap()
    }

    pub fn json<T: DeserializeOwned>(resp: Response) -> T {
        let status = resp.status();
        let text = resp.text().unwrap();
        assert!(status.is_success(), "{status}: {text}");
        serde_json::from_str(&text).unwrap()
    }

    pub fn create_user(&self) -> String {
        let v: serde_json::Value = Self::json(self.client.post(self.url("/v1/users")).send().unwrap());
        v["user_id"].as_str().unwrap().to_owned()
    }
}
