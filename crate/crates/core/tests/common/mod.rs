#![allow(dead_code)]
pub mod criteria;
pub mod engine_checks;
pub mod gen;

use std::time::Duration;

use cellgate::at::Transport;
use cellgate::gateway::{self, GatewayConfig, RunningGateway};
use cellgate::sim::{MmscServer, MockMmsc, Sim, SimConfig, SimServer};
use futures::StreamExt;
use serde_json::Value;

pub const TOKEN: &str = "test-token-0123456789";

pub struct Stack {
    pub sim: SimServer,
    pub mmsc: MmscServer,
    pub gw: RunningGateway,
    pub http: reqwest::Client,
    pub share: tempfile::TempDir,
}

impl Stack {
    pub async fn start() -> Stack {
        Self::with(SimConfig::default(), |_| {}).await
    }

    pub async fn with(sim_cfg: SimConfig, tweak: impl FnOnce(&mut GatewayConfig)) -> Stack {
        let sim = Sim::new(sim_cfg).listen_tcp("127.0.0.1", 0).await.unwrap();
        let ports = sim.ports.unwrap();
        let mmsc = MockMmsc::new().listen("127.0.0.1", 0).await.unwrap();
        let share = tempfile::tempdir().unwrap();
        let mut cfg = GatewayConfig {
            transport: Transport::Tcp {
                host: "127.0.0.1".into(),
                port: ports.at.port(),
            },
            modem_audio: Some(Transport::Tcp {
                host: "127.0.0.1".into(),
                port: ports.audio.port(),
            }),
            auth_token: TOKEN.into(),
            mmsc_url: Some(mmsc.url()),
            share_root: share.path().to_owned(),
            http_bind: "127.0.0.1:0".parse().unwrap(),
            ..Default::default()
        };
        tweak(&mut cfg);
        let gw = gateway::spawn(cfg).await.unwrap();
        gw.gateway
            .wait_ready(Duration::from_secs(10))
            .await
            .unwrap();
        Stack {
            sim,
            mmsc,
            gw,
            http: reqwest::Client::new(),
            share,
        }
    }

    pub fn sim(&self) -> &Sim {
        &self.sim.sim
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.gw.url())
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self
            .http
            .get(self.url(path))
            .bearer_auth(TOKEN)
            .send()
            .await
            .unwrap();
        let s = r.status().as_u16();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self
            .http
            .post(self.url(path))
            .bearer_auth(TOKEN)
            .json(&body)
            .send()
            .await
            .unwrap();
        let s = r.status().as_u16();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn put(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self
            .http
            .put(self.url(path))
            .bearer_auth(TOKEN)
            .json(&body)
            .send()
            .await
            .unwrap();
        let s = r.status().as_u16();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    /// Opens the SSE stream and returns parsed events as they arrive.
    pub async fn events(&self, last_event_id: Option<u64>) -> EventReader {
        let mut r = self.http.get(self.url("/v1/events")).bearer_auth(TOKEN);
        if let Some(id) = last_event_id {
            r = r.header("Last-Event-ID", id.to_string());
        }
        let resp = r.send().await.unwrap();
        assert_eq!(resp.status(), 200);
        EventReader {
            stream: Box::pin(resp.bytes_stream()),
            buf: String::new(),
        }
    }
}

pub struct EventReader {
    stream:
        std::pin::Pin<Box<dyn futures::Stream<Item = reqwest::Result<axum::body::Bytes>> + Send>>,
    buf: String,
}

impl EventReader {
    /// Next event (as its JSON data), or None on timeout.
    pub async fn next(&mut self, timeout: Duration) -> Option<Value> {
        tokio::time::timeout(timeout, async {
            loop {
                if let Some(end) = self.buf.find("\n\n") {
                    let block: String = self.buf.drain(..end + 2).collect();
                    let data: Vec<&str> = block
                        .lines()
                        .filter_map(|l| l.strip_prefix("data:"))
                        .map(str::trim_start)
                        .collect();
                    if !data.is_empty() {
                        return serde_json::from_str(&data.join("\n")).ok();
                    }
                    continue;
                }
                let chunk = self.stream.next().await?.ok()?;
                self.buf.push_str(&String::from_utf8_lossy(&chunk));
            }
        })
        .await
        .ok()
        .flatten()
    }

    /// Skips events until one of `kind` satisfying `pred` arrives.
    pub async fn wait_for(
        &mut self,
        kind: &str,
        timeout: Duration,
        pred: impl Fn(&Value) -> bool,
    ) -> Option<Value> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            let ev = self.next(left).await?;
            if ev["kind"] == kind && pred(&ev) {
                return Some(ev);
            }
        }
    }
}

pub async fn eventually<F: Fn() -> bool>(timeout: Duration, f: F) -> bool {
    let deadline = tokio::time::Instant::now() + timeout;
    while tokio::time::Instant::now() < deadline {
        if f() {
            return true;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    f()
}
