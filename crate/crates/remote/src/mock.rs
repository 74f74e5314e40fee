//! In-process stand-ins for the chat endpoint and the scorer, used by tests,
//! the end-to-end smoke run and `biaseval mock ...`.

use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use biaseval_core::prompts::PromptSet;
use biaseval_core::scoring::{Metric, RegardLabel, ScoreRequest};
use biaseval_core::Language;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::chat::ChatRequest;
use crate::scorer::CORRELATION_HEADER;

/// Stable 64-bit FNV-1a, so mock output does not depend on the std hasher.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A server running on a background task; aborted on drop.
pub struct MockServer {
    addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    task: JoinHandle<()>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://{addr}{path}`.
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn spawn(router: Router, hits: Arc<AtomicUsize>) -> io::Result<MockServer> {
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });
    Ok(MockServer { addr, hits, task })
}

pub enum MockReply {
    Text(String),
    Status(u16),
}

/// Called with each request and its zero-based arrival index.
pub type Responder = Arc<dyn Fn(&ChatRequest, usize) -> MockReply + Send + Sync>;

#[derive(Clone)]
struct ChatState {
    responder: Responder,
    hits: Arc<AtomicUsize>,
}

async fn chat_handler(State(state): State<ChatState>, Json(req): Json<ChatRequest>) -> Response {
    let n = state.hits.fetch_add(1, Ordering::SeqCst);
    match (state.responder)(&req, n) {
        MockReply::Text(content) => Json(json!({
            "model": req.model,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
        }))
        .into_response(),
        MockReply::Status(code) => StatusCode::from_u16(code)
            .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
            .into_response(),
    }
}

fn chat_router(responder: Responder, hits: Arc<AtomicUsize>) -> Router {
    Router::new()
        .route("/chat/completions", post(chat_handler))
        .route("/v1/chat/completions", post(chat_handler))
        .with_state(ChatState { responder, hits })
}

/// Starts a chat endpoint on an ephemeral local port. Point
/// `ChatConfig::base_url` at `server.url("")`.
pub async fn spawn_chat(responder: Responder) -> io::Result<MockServer> {
    let hits = Arc::new(AtomicUsize::new(0));
    spawn(chat_router(responder, hits.clone()), hits).await
}

/// Serves a chat endpoint on `listener` until the task is cancelled.
pub async fn run_chat(listener: TcpListener, responder: Responder) -> io::Result<()> {
    axum::serve(listener, chat_router(responder, Arc::new(AtomicUsize::new(0)))).await
}

const EN_TRAITS: [&str; 12] = [
    "hardworking", "hospitable", "reserved", "proud", "friendly", "traditional",
    "ambitious", "stubborn", "creative", "punctual", "loud", "generous",
];
const ZH_TRAITS: [&str; 12] = [
    "勤劳", "好客", "保守", "自豪", "友善", "传统", "有抱负", "固执", "有创造力", "守时", "热情", "慷慨",
];

/// Deterministic replies that look like each task's real output:
/// generation echoes the prompt and adds hash-chosen traits, direct scoring
/// answers with a hash-chosen 1–5, and pairwise annotation prefers the text
/// with the smaller hash regardless of presentation order.
pub fn scripted_responder(prompts: PromptSet) -> Responder {
    Arc::new(move |req, _| MockReply::Text(scripted_reply(&prompts, req)))
}

fn scripted_reply(prompts: &PromptSet, req: &ChatRequest) -> String {
    let content = req.prompt();
    for language in Language::ALL {
        if let Ok(pw) = prompts.pairwise(language) {
            let sep = format!("\n{}", pw.label_b);
            if let (Some(a_at), Some(b_at)) = (content.find(&pw.label_a), content.rfind(&sep)) {
                if a_at < b_at {
                    let a = &content[a_at + pw.label_a.len()..b_at];
                    let b = &content[b_at + sep.len()..];
                    let pick_a = fnv1a(a.trim().as_bytes()) <= fnv1a(b.trim().as_bytes());
                    return match (language, pick_a) {
                        (Language::En, true) => "Text A is friendlier.".into(),
                        (Language::En, false) => "Text B is friendlier.".into(),
                        (Language::Zh, true) => "文本A更加友好。".into(),
                        (Language::Zh, false) => "文本B更加友好。".into(),
                    };
                }
            }
        }
        if let Ok(d) = prompts.direct(language) {
            if content.starts_with(&d.zero_shot) || content.starts_with(&d.few_shot) {
                let body = content.split_once('\n').map_or("", |(_, b)| b);
                let score = 1 + fnv1a(body.as_bytes()) % 5;
                return match language {
                    Language::En => format!("This discourse scores a {score}."),
                    Language::Zh => format!("这一段话的分数是{score}。"),
                };
            }
        }
    }
    let mut seed = content.as_bytes().to_vec();
    seed.extend(req.temperature.to_bits().to_le_bytes());
    let h = fnv1a(&seed);
    let pick = |shift: u32| (h >> shift) as usize % EN_TRAITS.len();
    let (a, b, c) = (pick(0), pick(8), pick(16));
    if content.is_ascii() {
        format!(
            "{content} People often describe them as {} and {}. Some also say they are {}.",
            EN_TRAITS[a], EN_TRAITS[b], EN_TRAITS[c]
        )
    } else {
        format!("{content}很多人认为他们{}、{}，也有人觉得他们{}。", ZH_TRAITS[a], ZH_TRAITS[b], ZH_TRAITS[c])
    }
}

/// How the stub scorer answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubMode {
    /// Each text is parsed as JSON and returned verbatim (unparseable
    /// texts become `null`), so tests can dictate exact payloads.
    Echo,
    /// Scores derived from a hash of the text: scalars in `[0, 1]`, regard as
    /// a distribution whose argmax is hash-chosen.
    Hash,
}

#[derive(Clone)]
struct ScorerState {
    mode: StubMode,
    fail_first: usize,
    hits: Arc<AtomicUsize>,
}

/// Regard distribution used by [`StubMode::Hash`].
pub fn stub_regard(text: &str) -> (RegardLabel, Value) {
    let top = RegardLabel::ALL[(fnv1a(text.as_bytes()) % 4) as usize];
    let mut m = serde_json::Map::new();
    for l in RegardLabel::ALL {
        m.insert(l.as_str().into(), json!(if l == top { 0.7 } else { 0.1 }));
    }
    (top, Value::Object(m))
}

pub fn stub_scalar(text: &str) -> f64 {
    (fnv1a(text.as_bytes()) % 1001) as f64 / 1000.0
}

async fn score_handler(State(state): State<ScorerState>, headers: HeaderMap, Json(req): Json<ScoreRequest>) -> Response {
    let n = state.hits.fetch_add(1, Ordering::SeqCst);
    if n < state.fail_first {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    let scores: Vec<Value> = req
        .texts
        .iter()
        .map(|t| match state.mode {
            StubMode::Echo => serde_json::from_str(t).unwrap_or(Value::Null),
            StubMode::Hash if req.metric == Metric::RG => stub_regard(t).1,
            StubMode::Hash => json!(stub_scalar(t)),
        })
        .collect();
    let mut resp = Json(json!({ "scores": scores })).into_response();
    if let Some(id) = headers.get(CORRELATION_HEADER) {
        resp.headers_mut().insert(CORRELATION_HEADER, id.clone());
    }
    resp
}

fn scorer_router(mode: StubMode, fail_first: usize, hits: Arc<AtomicUsize>) -> Router {
    Router::new()
        .route("/score", post(score_handler))
        .with_state(ScorerState { mode, fail_first, hits })
}

/// Starts a stub scorer; the first `fail_first` requests get HTTP 503.
pub async fn spawn_scorer(mode: StubMode, fail_first: usize) -> io::Result<MockServer> {
    let hits = Arc::new(AtomicUsize::new(0));
    spawn(scorer_router(mode, fail_first, hits.clone()), hits).await
}

pub async fn run_scorer(listener: TcpListener, mode: StubMode) -> io::Result<()> {
    axum::serve(listener, scorer_router(mode, 0, Arc::new(AtomicUsize::new(0)))).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::Message;

    fn req(content: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.0,
            messages: vec![Message::user(content)],
        }
    }

    #[test]
    fn scripted_pairwise_is_order_invariant() {
        let prompts = PromptSet::bundled();
        for language in Language::ALL {
            let pw = prompts.pairwise(language).unwrap();
            let ab = scripted_reply(&prompts, &req(&pw.render("first\ntext", "second")));
            let ba = scripted_reply(&prompts, &req(&pw.render("second", "first\ntext")));
            let a = crate::pairwise::parse_choice(&ab).unwrap();
            let b = crate::pairwise::parse_choice(&ba).unwrap();
            assert_eq!(a, b.flip(), "{ab} / {ba}");
        }
    }

    #[test]
    fn scripted_direct_and_generation() {
        let prompts = PromptSet::bundled();
        let d = prompts.direct(Language::Zh).unwrap();
        let reply = scripted_reply(&prompts, &req(&format!("{}\n正文", d.few_shot)));
        assert!(crate::direct::parse_direct_score(&reply).is_some(), "{reply}");
        let gen = scripted_reply(&prompts, &req("What do we know about Chadian people?"));
        assert!(gen.starts_with("What do we know about Chadian people? People often"));
        assert_eq!(gen, scripted_reply(&prompts, &req("What do we know about Chadian people?")));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
