//! JSON-over-HTTP front end for the identity service.
//!
//! | route                 | body                                   | success |
//! |-----------------------|----------------------------------------|---------|
//! | `POST /register`      | `{id, password, public_key}`           | 201     |
//! | `POST /auth/begin`    | `{id}`                                 | 200     |
//! | `POST /auth/complete` | `{challenge_id, response}`             | 200     |
//! | `GET /session/{tok}`  | none                                   | 200     |
//!
//! Octet fields are base64url without padding. Failures return
//! `{"error":{"code","message"}}` with 400, 401, 404 or 409.

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use skyvault_core::crypto::{b64_decode, Digest, PublicKey};
use skyvault_core::identity::{ChallengeId, IdentityError, IdentityService, Token};
use tokio::net::TcpListener;

use crate::error::CliError;
use crate::state::{check_id, now, persist_identity};

pub struct AppState {
    pub identity: Arc<IdentityService>,
    /// When set, accounts and sessions are written here after each change.
    pub persist_root: Option<PathBuf>,
    persist_lock: Mutex<()>,
}

impl AppState {
    pub fn new(identity: Arc<IdentityService>, persist_root: Option<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            identity,
            persist_root,
            persist_lock: Mutex::new(()),
        })
    }

    fn persist(&self) -> Result<(), CliError> {
        if let Some(root) = &self.persist_root {
            let _guard = self.persist_lock.lock().unwrap();
            persist_identity(root, &self.identity)?;
        }
        Ok(())
    }
}

pub struct ApiError {
    status: StatusCode,
    err: CliError,
}

impl ApiError {
    fn bad_request(code: &'static str, msg: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            err: CliError::new(code, msg),
        }
    }
}

impl From<IdentityError> for ApiError {
    fn from(e: IdentityError) -> Self {
        let status = match e {
            IdentityError::DuplicateId(_) => StatusCode::CONFLICT,
            IdentityError::UnknownId(_) | IdentityError::UnknownChallenge => StatusCode::NOT_FOUND,
            IdentityError::Expired | IdentityError::ResponseMismatch | IdentityError::InvalidToken => {
                StatusCode::UNAUTHORIZED
            }
            IdentityError::WeakPassword | IdentityError::EmptyIdentifier | IdentityError::Crypto(_) => {
                StatusCode::BAD_REQUEST
            }
        };
        ApiError {
            status,
            err: e.into(),
        }
    }
}

impl From<CliError> for ApiError {
    fn from(err: CliError) -> Self {
        let status = match err.code {
            "io" | "corrupt_record" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError { status, err }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request("malformed_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = self.err.to_json();
        (
            self.status,
            [(axum::http::header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub id: String,
    pub password: String,
    pub public_key: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub id: String,
    pub public_key: String,
    pub created_at: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BeginRequest {
    pub id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub challenge_id: String,
    pub response: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub account_id: String,
    pub valid: bool,
}

async fn register(
    State(app): State<Arc<AppState>>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RegisterResponse>)> {
    let Json(req) = body?;
    if app.persist_root.is_some() {
        check_id(&req.id)?;
    }
    let pk = PublicKey::from_b64(&req.public_key)
        .map_err(|e| ApiError::bad_request("invalid_key", e.to_string()))?;
    let acc = app.identity.register(&req.id, &req.password, pk, now())?;
    app.persist()?;
    Ok((
        StatusCode::CREATED,
        Json(RegisterResponse {
            id: acc.id,
            public_key: acc.public_key.to_b64(),
            created_at: acc.created_at,
        }),
    ))
}

async fn begin(
    State(app): State<Arc<AppState>>,
    body: Result<Json<BeginRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let issued = app.identity.begin_auth(&req.id, now())?;
    Ok(Json(issued).into_response())
}

async fn complete(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CompleteRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let cid = ChallengeId::from_b64(&req.challenge_id)
        .map_err(|e| ApiError::bad_request("bad_encoding", e.to_string()))?;
    let raw = b64_decode(&req.response).map_err(|e| ApiError::bad_request("bad_encoding", e.to_string()))?;
    let response: [u8; 32] = raw
        .try_into()
        .map_err(|_| ApiError::bad_request("bad_encoding", "response must be 32 bytes"))?;
    let session = app.identity.complete_auth(&cid, &Digest(response), now())?;
    app.persist()?;
    Ok(Json(session).into_response())
}

async fn session(State(app): State<Arc<AppState>>, Path(token): Path<String>) -> ApiResult<Json<SessionResponse>> {
    let token = Token::from_b64(&token).map_err(|e| ApiError::bad_request("bad_encoding", e.to_string()))?;
    let account_id = app.identity.validate_session(&token, now())?;
    Ok(Json(SessionResponse {
        account_id,
        valid: true,
    }))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/auth/begin", post(begin))
        .route("/auth/complete", post(complete))
        .route("/session/:token", get(session))
        .with_state(app)
}

/// Serve until `shutdown` resolves, then drain in-flight requests.
pub async fn serve(
    listener: TcpListener,
    app: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
}
