use std::sync::{Arc, Mutex};
use std::time::Instant;

use biaseval_remote::chat::{ChatRequest, Message};
use biaseval_remote::mock::{spawn_chat, MockReply};
use biaseval_remote::{ChatClient, ChatConfig, ChatError};

fn config(base_url: String) -> ChatConfig {
    ChatConfig {
        base_url,
        model: "test-model".into(),
        requests_per_minute: 0,
        max_retries: 5,
        initial_backoff_ms: 1,
        timeout_secs: 10,
        max_in_flight: 4,
    }
}

#[tokio::test]
async fn sends_the_documented_body() {
    let seen: Arc<Mutex<Vec<ChatRequest>>> = Arc::default();
    let log = seen.clone();
    let server = spawn_chat(Arc::new(move |req, _| {
        log.lock().unwrap().push(req.clone());
        MockReply::Text("ok".into())
    }))
    .await
    .unwrap();
    let client = ChatClient::new(config(server.url("/v1")), Some("secret".into())).unwrap();
    let reply = client
        .complete(0.3, vec![Message::system("be brief"), Message::user("hello")])
        .await
        .unwrap();
    assert_eq!(reply, "ok");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].model, "test-model");
    assert_eq!(seen[0].temperature, 0.3);
    assert_eq!(seen[0].messages[0].role, "system");
    assert_eq!(seen[0].prompt(), "hello");
}

#[tokio::test]
async fn retries_transient_failures() {
    let server = spawn_chat(Arc::new(|_, n| {
        if n < 2 {
            MockReply::Status(503)
        } else if n == 2 {
            MockReply::Status(429)
        } else {
            MockReply::Text("finally".into())
        }
    }))
    .await
    .unwrap();
    let client = ChatClient::new(config(server.url("")), None).unwrap();
    assert_eq!(client.ask(0.0, "hi").await.unwrap(), "finally");
    assert_eq!(server.hits(), 4);
}

#[tokio::test]
async fn gives_up_after_five_retries() {
    let server = spawn_chat(Arc::new(|_, _| MockReply::Status(500))).await.unwrap();
    let client = ChatClient::new(config(server.url("")), None).unwrap();
    let err = client.ask(0.0, "hi").await.unwrap_err();
    assert!(matches!(err, ChatError::Exhausted { attempts: 6, .. }), "{err}");
    assert!(!err.is_fatal());
    assert_eq!(server.hits(), 6);
}

#[tokio::test]
async fn auth_failure_is_not_retried() {
    let server = spawn_chat(Arc::new(|_, _| MockReply::Status(401))).await.unwrap();
    let client = ChatClient::new(config(server.url("")), None).unwrap();
    let err = client.ask(0.0, "hi").await.unwrap_err();
    assert!(matches!(err, ChatError::Auth(401)));
    assert!(err.is_fatal());
    assert_eq!(server.hits(), 1);
}

#[tokio::test]
async fn bad_request_is_not_retried() {
    let server = spawn_chat(Arc::new(|_, _| MockReply::Status(400))).await.unwrap();
    let client = ChatClient::new(config(server.url("")), None).unwrap();
    assert!(matches!(
        client.ask(0.0, "hi").await,
        Err(ChatError::Rejected { status: 400, .. })
    ));
    assert_eq!(server.hits(), 1);
}

#[tokio::test]
async fn rejects_out_of_range_temperature() {
    let client = ChatClient::new(config("http://127.0.0.1:9".into()), None).unwrap();
    assert!(matches!(client.ask(2.5, "hi").await, Err(ChatError::Temperature(_))));
    assert!(matches!(client.ask(-0.1, "hi").await, Err(ChatError::Temperature(_))));
}

#[tokio::test]
async fn token_bucket_spaces_requests() {
    let server = spawn_chat(Arc::new(|_, _| MockReply::Text("x".into()))).await.unwrap();
    let mut cfg = config(server.url(""));
    cfg.requests_per_minute = 1200; // one every 50 ms
    let client = ChatClient::new(cfg, None).unwrap();
    let start = Instant::now();
    let calls = (0..5).map(|_| client.ask(0.0, "hi"));
    for r in futures::future::join_all(calls).await {
        r.unwrap();
    }
    assert!(start.elapsed().as_millis() >= 190, "{:?}", start.elapsed());
}
