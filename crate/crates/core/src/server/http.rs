//! JSON-over-HTTP front end.
//!
//! * `POST /register` `{"client_id"}` returns the delivered variant:
//!   `{"variant_id", "template_id", "token", "source"}`.
//! * `POST /verify` `{"client_id", "nonce", "payload", "mac"}` with a
//!   32-hex nonce, base64 payload and 40-hex MAC returns
//!   `{"verdict": "accepted" | "rejected", "reason"}`.
//!
//! Errors use `{"error", "message"}` with a 4xx status.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use super::{Registration, RejectReason, Server, ServerError, Verdict};
use crate::engine::Digest;
use crate::mac::{MacRequest, Nonce, NONCE_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterBody {
    pub client_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterReply {
    pub variant_id: String,
    pub template_id: String,
    pub token: String,
    pub source: String,
}

impl From<&Registration> for RegisterReply {
    fn from(reg: &Registration) -> Self {
        RegisterReply {
            variant_id: reg.variant.id(),
            template_id: reg.variant.variant.template_id.clone(),
            token: reg.token.clone(),
            source: reg.variant.variant.source_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyBody {
    pub client_id: String,
    pub nonce: String,
    pub payload: String,
    pub mac: String,
}

impl VerifyBody {
    pub fn from_request(request: &MacRequest) -> Self {
        VerifyBody {
            client_id: request.client_id().to_string(),
            nonce: hex::encode(request.nonce()),
            payload: base64::engine::general_purpose::STANDARD.encode(request.payload()),
            mac: request.mac().to_hex(),
        }
    }

    pub fn to_request(&self) -> Result<MacRequest, String> {
        if self.nonce.len() != 2 * NONCE_LEN {
            return Err(format!("nonce must be {} hex characters", 2 * NONCE_LEN));
        }
        let mut nonce: Nonce = [0; NONCE_LEN];
        hex::decode_to_slice(&self.nonce, &mut nonce).map_err(|_| "nonce is not hex".to_string())?;
        let payload = base64::engine::general_purpose::STANDARD
            .decode(&self.payload)
            .map_err(|e| format!("payload is not base64: {e}"))?;
        let mac = Digest::from_hex(&self.mac).map_err(|e| format!("mac: {e}"))?;
        MacRequest::new(self.client_id.clone(), nonce, payload, mac).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReply {
    pub verdict: String,
    pub reason: Option<String>,
}

impl From<Verdict> for VerifyReply {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Accepted => VerifyReply { verdict: "accepted".into(), reason: None },
            Verdict::Rejected(reason) => VerifyReply { verdict: "rejected".into(), reason: Some(reason.to_string()) },
        }
    }
}

impl VerifyReply {
    pub fn to_verdict(&self) -> Option<Verdict> {
        match (self.verdict.as_str(), self.reason.as_deref()) {
            ("accepted", _) => Some(Verdict::Accepted),
            ("rejected", Some(reason)) => RejectReason::parse(reason).map(Verdict::Rejected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
    pub message: String,
}

fn error_response(status: StatusCode, error: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorReply { error: error.into(), message: message.into() })).into_response()
}

fn server_error_response(e: &ServerError) -> Response {
    let (status, code) = match e {
        ServerError::AlreadyRegistered(_) => (StatusCode::CONFLICT, "already-registered"),
        ServerError::PoolExhausted => (StatusCode::SERVICE_UNAVAILABLE, "pool-exhausted"),
        ServerError::InvalidClientId(_) => (StatusCode::BAD_REQUEST, "invalid-client-id"),
        ServerError::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
        ServerError::VariantMissing | ServerError::Db(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
    };
    error_response(status, code, e.to_string())
}

async fn register(State(server): State<Arc<Server>>, body: Result<Json<RegisterBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(body) => body,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "malformed", e.body_text()),
    };
    let result = tokio::task::spawn_blocking(move || server.register_client(&body.client_id)).await;
    match result {
        Ok(Ok(reg)) => Json(RegisterReply::from(&reg)).into_response(),
        Ok(Err(e)) => server_error_response(&e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn verify(State(server): State<Arc<Server>>, body: Result<Json<VerifyBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(body) => body,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "malformed", e.body_text()),
    };
    match body.to_request() {
        Ok(request) => Json(VerifyReply::from(server.handle_verify(&request))).into_response(),
        Err(message) => error_response(StatusCode::BAD_REQUEST, "malformed", message),
    }
}

pub fn router(server: Arc<Server>) -> Router {
    Router::new().route("/register", post(register)).route("/verify", post(verify)).with_state(server)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    server: Arc<Server>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(server)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own runtime thread.
pub struct BackgroundServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(addr: SocketAddr, server: Arc<Server>) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("nversion-http".into()).spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(listener, server, async {
                    let _ = stopped.await;
                })
                .await
            })
        })?;
        Ok(BackgroundServer { addr, stop: Some(stop), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(thread) => thread.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
