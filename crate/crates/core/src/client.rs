//! Client side: obtain a variant, guard the process, send MAC'd requests.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::TryRngCore;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::codegen::{self, CodegenError, SpecializedVariant, VariantSource};
use crate::engine::{self, Digest, GeneVector};
use crate::guard::{self, GuardError, MapsSource, SegmentDictionary, Violation};
use crate::mac::{self, MacError, MacRequest, Nonce, NONCE_LEN};
use crate::server::http::{ErrorReply, RegisterBody, RegisterReply, VerifyBody, VerifyReply};
use crate::server::Verdict;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("network error: {0}")]
    Network(String),
    #[error("server refused ({code}): {message}")]
    Refused { code: String, message: String },
    #[error("unexpected server response: {0}")]
    Protocol(String),
    #[error("client already holds a variant")]
    AlreadyHasVariant,
    #[error("client has no variant; register first")]
    NoVariant,
    #[error("integrity check failed with {} violation(s)", .0.len())]
    GuardViolation(Vec<Violation>),
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Variant(#[from] CodegenError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// How the client computes digests.
#[derive(Debug, Clone)]
pub enum VariantHandle {
    /// A compiled variant program (message on stdin, hex digest on stdout).
    Executable(PathBuf),
    /// Delivered source, run by the in-crate interpreter.
    Interpreted(SpecializedVariant),
    /// Test mode: genes held directly.
    Embedded(GeneVector),
}

impl VariantHandle {
    pub fn interpreted(source: &VariantSource) -> Result<Self, CodegenError> {
        Ok(VariantHandle::Interpreted(SpecializedVariant::from_source(source)?))
    }

    pub fn digest(&self, message: &[u8]) -> Result<Digest, ClientError> {
        Ok(match self {
            VariantHandle::Executable(path) => codegen::run_variant(path, message)?,
            VariantHandle::Interpreted(program) => program.digest(message),
            VariantHandle::Embedded(genes) => engine::digest(genes, message),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GuardConfig {
    pub dictionary: SegmentDictionary,
    pub source: MapsSource,
    /// Refuse to send when the check finds violations.
    pub abort_on_violation: bool,
}

/// Receipt of a registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub variant_id: String,
    pub token: String,
    pub source_path: Option<PathBuf>,
}

/// Options for [`client_register`].
#[derive(Debug, Clone, Default)]
pub struct RegisterOptions {
    /// Directory to store the delivered source (and built program).
    pub variant_dir: Option<PathBuf>,
    /// Compile the delivered source and use the executable.
    pub build: bool,
}

/// One client session. Not meant for concurrent sends.
#[derive(Debug)]
pub struct ClientContext {
    pub client_id: String,
    pub server_url: String,
    pub variant: Option<VariantHandle>,
    pub delivery: Option<Delivery>,
    pub guard: Option<GuardConfig>,
    used_nonces: HashSet<Nonce>,
    agent: ureq::Agent,
}

impl ClientContext {
    pub fn new(client_id: impl Into<String>, server_url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        ClientContext {
            client_id: client_id.into(),
            server_url: server_url.into().trim_end_matches('/').to_string(),
            variant: None,
            delivery: None,
            guard: None,
            used_nonces: HashSet::new(),
            agent,
        }
    }

    /// Test-mode context with genes embedded.
    pub fn with_genes(client_id: impl Into<String>, server_url: impl Into<String>, genes: GeneVector) -> Self {
        let mut ctx = Self::new(client_id, server_url);
        ctx.variant = Some(VariantHandle::Embedded(genes));
        ctx
    }

    pub fn with_guard(mut self, guard: GuardConfig) -> Self {
        self.guard = Some(guard);
        self
    }

    /// 16 random bytes never used before in this session.
    fn fresh_nonce(&mut self) -> Nonce {
        loop {
            let mut nonce = [0u8; NONCE_LEN];
            rand::rngs::OsRng.try_fill_bytes(&mut nonce).expect("OS random source");
            if self.used_nonces.insert(nonce) {
                return nonce;
            }
        }
    }

    pub fn nonces_used(&self) -> usize {
        self.used_nonces.len()
    }

    /// Builds a MAC'd request for `payload` with a fresh nonce.
    pub fn build_request(&mut self, payload: Vec<u8>) -> Result<MacRequest, ClientError> {
        let nonce = self.fresh_nonce();
        let variant = self.variant.as_ref().ok_or(ClientError::NoVariant)?;
        let mac = variant.digest(&mac::canonicalize(&self.client_id, &nonce, &payload)?)?;
        Ok(MacRequest::new(self.client_id.clone(), nonce, payload, mac)?)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ClientError> {
        let url = format!("{}{}", self.server_url, path);
        let mut response = self.agent.post(&url).send_json(body).map_err(|e| ClientError::Network(e.to_string()))?;
        let status = response.status();
        let text = response.body_mut().read_to_string().map_err(|e| ClientError::Network(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text).map_err(|e| ClientError::Protocol(format!("{e}: {text}")));
        }
        match serde_json::from_str::<ErrorReply>(&text) {
            Ok(err) => Err(ClientError::Refused { code: err.error, message: err.message }),
            Err(_) => Err(ClientError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ClientError + '_ {
    move |source| ClientError::Io { path: path.to_path_buf(), source }
}

/// Requests a variant from `/register` and installs it. The context is
/// left untouched on any error.
pub fn client_register(ctx: &mut ClientContext, options: &RegisterOptions) -> Result<(), ClientError> {
    if ctx.variant.is_some() {
        return Err(ClientError::AlreadyHasVariant);
    }
    let reply: RegisterReply = ctx.post("/register", &RegisterBody { client_id: ctx.client_id.clone() })?;
    let source = VariantSource {
        genes_fingerprint: Digest::from_hex(&reply.variant_id)
            .map_err(|e| ClientError::Protocol(format!("variant id: {e}")))?,
        template_id: reply.template_id.clone(),
        source_text: reply.source,
    };
    let template = source.template()?;

    let mut source_path = None;
    if let Some(dir) = &options.variant_dir {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
        let path = dir.join(format!("{}.{}", reply.variant_id, template.extension));
        source.write_to(&path).map_err(io_error(&path))?;
        source_path = Some(path);
    }

    let handle = if options.build {
        let dir = options.variant_dir.clone().unwrap_or_else(std::env::temp_dir);
        let exe = dir.join(format!("variant-{}", reply.variant_id));
        VariantHandle::Executable(codegen::build_variant(&source, &exe)?)
    } else {
        VariantHandle::interpreted(&source)?
    };

    ctx.variant = Some(handle);
    ctx.delivery = Some(Delivery { variant_id: reply.variant_id, token: reply.token, source_path });
    Ok(())
}

/// Runs the guard (if configured), then MACs `payload` under a fresh nonce
/// and posts it to `/verify`.
///
/// With `abort_on_violation`, a failed check returns
/// [`ClientError::GuardViolation`] and nothing is sent.
pub fn client_send(ctx: &mut ClientContext, payload: &[u8]) -> Result<Verdict, ClientError> {
    client_send_with_reaction(ctx, payload, guard::log_reaction)
}

pub fn client_send_with_reaction(
    ctx: &mut ClientContext,
    payload: &[u8],
    reaction: impl FnMut(&Violation),
) -> Result<Verdict, ClientError> {
    if ctx.variant.is_none() {
        return Err(ClientError::NoVariant);
    }
    if let Some(guard) = &ctx.guard {
        let violations = guard::run_guard(&guard.source, &guard.dictionary, reaction)?;
        if guard.abort_on_violation && !violations.is_empty() {
            return Err(ClientError::GuardViolation(violations));
        }
    }
    let request = ctx.build_request(payload.to_vec())?;
    send_request(ctx, &request)
}

/// Posts an already-built request.
pub fn send_request(ctx: &ClientContext, request: &MacRequest) -> Result<Verdict, ClientError> {
    let reply: VerifyReply = ctx.post("/verify", &VerifyBody::from_request(request))?;
    reply.to_verdict().ok_or_else(|| ClientError::Protocol(format!("unknown verdict {reply:?}")))
}
