#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use biaseval_core::bws::Tuple;
use biaseval_service::{AnnotatorConfig, Service, ServiceConfig};
use chrono::{DateTime, Utc};
use reqwest::{Client, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

pub fn tuples(n: u32, rounds: u32) -> Vec<Tuple> {
    let per_round = n.div_ceil(rounds).max(1);
    (1..=n)
        .map(|i| Tuple {
            tuple_id: i,
            text_ids: (0..4).map(|k| format!("en-p1-t0-c{i}x{k}")).collect(),
            round: 1 + (i - 1) / per_round,
        })
        .collect()
}

pub fn bodies(tuples: &[Tuple]) -> HashMap<String, String> {
    tuples
        .iter()
        .flat_map(|t| &t.text_ids)
        .enumerate()
        .map(|(i, id)| (id.clone(), format!("[MASK] people, text number {i}")))
        .collect()
}

pub fn roster(ids: &[&str]) -> ServiceConfig {
    ServiceConfig {
        snapshot_every: 7,
        annotators: ids
            .iter()
            .map(|id| AnnotatorConfig {
                token: format!("token-{id}"),
                annotator_id: id.to_string(),
                round: None,
            })
            .collect(),
    }
}

/// Deterministic clock ticking one second per judgment.
pub fn ticking_clock() -> biaseval_service::server::Clock {
    let t = Arc::new(AtomicI64::new(1_700_000_000));
    Arc::new(move || DateTime::<Utc>::from_timestamp(t.fetch_add(1, Ordering::SeqCst), 0).unwrap())
}

pub struct Running {
    pub service: Service,
    pub base: String,
    handle: tokio::task::JoinHandle<()>,
}

impl Drop for Running {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

pub async fn start(tuples: Vec<Tuple>, config: ServiceConfig, dir: Option<&Path>) -> Running {
    let b = bodies(&tuples);
    let service = Service::new(tuples, b, config, dir).unwrap().with_clock(ticking_clock());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let s = service.clone();
    let handle = tokio::spawn(async move {
        biaseval_service::serve(listener, s).await.unwrap();
    });
    Running { service, base, handle }
}

/// One annotator's HTTP client.
#[derive(Clone)]
pub struct Annotator {
    pub http: Client,
    pub base: String,
    pub token: String,
}

impl Annotator {
    pub fn new(run: &Running, id: &str) -> Self {
        Self {
            http: Client::new(),
            base: run.base.clone(),
            token: format!("token-{id}"),
        }
    }

    pub async fn get(&self, path: &str) -> Response {
        self.http
            .get(format!("{}{path}", self.base))
            .bearer_auth(&self.token)
            .send()
            .await
            .unwrap()
    }

    pub async fn post(&self, path: &str, body: Value) -> Response {
        self.http
            .post(format!("{}{path}", self.base))
            .bearer_auth(&self.token)
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn get_json<T: DeserializeOwned>(&self, path: &str) -> T {
        let r = self.get(path).await;
        assert_eq!(r.status(), StatusCode::OK, "{path}");
        r.json().await.unwrap()
    }

    /// Fetches the next tuple id, or `None` when done.
    pub async fn next(&self) -> Option<u32> {
        let v: Value = self.get_json("/api/tuple/next").await;
        if v["done"].as_bool().unwrap() {
            None
        } else {
            Some(v["tuple"]["tuple_id"].as_u64().unwrap() as u32)
        }
    }

    pub async fn judge(&self, tuple_id: u32, best: &str, worst: &str) -> Response {
        self.post(
            "/api/judgment",
            json!({"tuple_id": tuple_id, "best_id": best, "worst_id": worst}),
        )
        .await
    }

    pub async fn arbitrate(&self, tuple_id: u32, best: &str, worst: &str) -> Response {
        self.post(
            "/api/arbitration",
            json!({"tuple_id": tuple_id, "best_id": best, "worst_id": worst}),
        )
        .await
    }
}

pub async fn error_code(r: Response) -> (StatusCode, String) {
    let status = r.status();
    let v: Value = r.json().await.unwrap();
    assert!(v["reason"].is_string());
    (status, v["code"].as_str().unwrap().to_string())
}
