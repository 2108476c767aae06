use std::sync::Arc;

use reqwest::StatusCode;
use serde_json::{json, Value};
use skyvault_cli::server::{serve, AppState};
use skyvault_core::crypto::{b64_encode, KeyPair};
use skyvault_core::identity::{respond, IdentityConfig, IdentityService, IssuedChallenge};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

struct Running {
    base: String,
    client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

async fn start(persist: Option<std::path::PathBuf>) -> Running {
    let identity = Arc::new(IdentityService::new(IdentityConfig::default()));
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(serve(listener, AppState::new(identity, persist), async {
        let _ = rx.await;
    }));
    Running {
        base,
        client: reqwest::Client::new(),
        stop: Some(tx),
        task,
    }
}

impl Running {
    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn register(&self, id: &str, pw: &str, kp: &KeyPair) -> (StatusCode, Value) {
        self.post(
            "/register",
            json!({"id": id, "password": pw, "public_key": kp.public.to_b64()}),
        )
        .await
    }

    async fn login(&self, id: &str, pw: &str, kp: &KeyPair) -> (StatusCode, Value) {
        let (s, body) = self.post("/auth/begin", json!({"id": id})).await;
        assert_eq!(s, StatusCode::OK, "{body}");
        let ch: IssuedChallenge = serde_json::from_value(body).unwrap();
        let resp = respond(&ch, &kp.secret, pw).unwrap();
        self.post(
            "/auth/complete",
            json!({"challenge_id": ch.challenge_id.to_b64(), "response": b64_encode(resp.as_bytes())}),
        )
        .await
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap().unwrap();
    }
}

#[tokio::test]
async fn register_login_and_session_lookup() {
    let srv = start(None).await;
    let kp = KeyPair::generate();
    let (s, body) = srv.register("gail", "password123", &kp).await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    assert_eq!(body["id"], "gail");

    let (s, body) = srv.login("gail", "password123", &kp).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["account_id"], "gail");
    let token = body["token"].as_str().unwrap().to_owned();

    let (s, body) = srv.get(&format!("/session/{token}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["account_id"], "gail");
    srv.stop().await;
}

#[tokio::test]
async fn error_statuses() {
    let srv = start(None).await;
    let kp = KeyPair::generate();
    srv.register("hank", "password123", &kp).await;

    let (s, body) = srv.register("hank", "password456", &kp).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "duplicate_id");

    let (s, _) = srv.login("hank", "not the password", &kp).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    let (s, body) = srv.post("/auth/begin", json!({"id": "nobody"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_account");

    let (s, body) = srv
        .post(
            "/auth/complete",
            json!({"challenge_id": b64_encode(&[0u8; 16]), "response": b64_encode(&[0u8; 32])}),
        )
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_challenge");

    let (s, _) = srv.register("ivy", "short", &kp).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, body) = srv.post("/register", json!({"id": "x"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "malformed_request");

    let (s, _) = srv
        .post("/register", json!({"id": "jo", "password": "password123", "public_key": "!!"}))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = srv.get("/session/not-a-token").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = srv.get(&format!("/session/{}", b64_encode(&[7u8; 32]))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    srv.stop().await;
}

#[tokio::test]
async fn replayed_completion_is_rejected() {
    let srv = start(None).await;
    let kp = KeyPair::generate();
    srv.register("kim", "password123", &kp).await;
    let (_, body) = srv.post("/auth/begin", json!({"id": "kim"})).await;
    let ch: IssuedChallenge = serde_json::from_value(body).unwrap();
    let resp = respond(&ch, &kp.secret, "password123").unwrap();
    let req = json!({"challenge_id": ch.challenge_id.to_b64(), "response": b64_encode(resp.as_bytes())});
    let (s, _) = srv.post("/auth/complete", req.clone()).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = srv.post("/auth/complete", req).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clients() {
    let srv = Arc::new(start(None).await);
    let mut handles = Vec::new();
    for i in 0..24 {
        let srv = srv.clone();
        handles.push(tokio::spawn(async move {
            let kp = KeyPair::generate();
            let id = format!("user{i}");
            assert_eq!(srv.register(&id, "password123", &kp).await.0, StatusCode::CREATED);
            let (s, body) = srv.login(&id, "password123", &kp).await;
            assert_eq!(s, StatusCode::OK);
            assert_eq!(body["account_id"], id.as_str());
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
    Arc::try_unwrap(srv).ok().unwrap().stop().await;
}

#[tokio::test]
async fn persists_accounts_and_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(Some(dir.path().to_path_buf())).await;
    let kp = KeyPair::generate();
    srv.register("lee", "password123", &kp).await;
    let (_, body) = srv.login("lee", "password123", &kp).await;
    srv.stop().await;

    assert!(dir.path().join("accounts/lee.json").is_file());
    let sessions: Value = serde_json::from_slice(&std::fs::read(dir.path().join("sessions.json")).unwrap()).unwrap();
    assert_eq!(sessions[0]["token"], body["token"]);

    let srv = start(Some(dir.path().to_path_buf())).await;
    let (s, body) = srv.register("../escape", "password123", &kp).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_id");
    srv.stop().await;
}
