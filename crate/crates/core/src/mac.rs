//! MACs keyed by program logic.
//!
//! The tag is the diversified digest of a length-prefixed encoding of
//! `(client_id, nonce, payload)`. There is no secret key; the gene vector
//! baked into each client's variant plays that role.

use std::fmt;
use std::sync::Arc;

use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::engine::{self, Digest, GeneVector};

pub const NONCE_LEN: usize = 16;
pub const MAX_CLIENT_ID_LEN: usize = 256;
pub const MAX_PAYLOAD_LEN: usize = 1 << 20;

pub type Nonce = [u8; NONCE_LEN];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MacError {
    #[error("client id must be 1..={MAX_CLIENT_ID_LEN} bytes, got {0}")]
    ClientIdLength(usize),
    #[error("payload exceeds {MAX_PAYLOAD_LEN} bytes (got {0})")]
    PayloadTooLarge(usize),
    #[error("guard hook refused: {0}")]
    GuardRejected(String),
}

fn check_bounds(client_id: &str, payload: &[u8]) -> Result<(), MacError> {
    if client_id.is_empty() || client_id.len() > MAX_CLIENT_ID_LEN {
        return Err(MacError::ClientIdLength(client_id.len()));
    }
    if payload.len() > MAX_PAYLOAD_LEN {
        return Err(MacError::PayloadTooLarge(payload.len()));
    }
    Ok(())
}

/// A request as it travels to the server. Bounds are checked on
/// construction.
#[derive(Clone, PartialEq, Eq)]
pub struct MacRequest {
    client_id: String,
    nonce: Nonce,
    payload: Vec<u8>,
    mac: Digest,
}

impl MacRequest {
    pub fn new(client_id: impl Into<String>, nonce: Nonce, payload: Vec<u8>, mac: Digest) -> Result<Self, MacError> {
        let client_id = client_id.into();
        check_bounds(&client_id, &payload)?;
        Ok(MacRequest { client_id, nonce, payload, mac })
    }

    /// Computes the tag with `genes` and wraps everything in a request.
    pub fn build(genes: &GeneVector, client_id: impl Into<String>, nonce: Nonce, payload: Vec<u8>) -> Result<Self, MacError> {
        let client_id = client_id.into();
        let mac = compute_mac(genes, &client_id, &nonce, &payload)?;
        Ok(MacRequest { client_id, nonce, payload, mac })
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn nonce(&self) -> &Nonce {
        &self.nonce
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn mac(&self) -> &Digest {
        &self.mac
    }

    /// Same fields under a different client id, MAC untouched.
    pub fn with_client_id(&self, client_id: impl Into<String>) -> Result<Self, MacError> {
        MacRequest::new(client_id, self.nonce, self.payload.clone(), self.mac)
    }
}

impl fmt::Debug for MacRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MacRequest")
            .field("client_id", &self.client_id)
            .field("nonce", &hex::encode(self.nonce))
            .field("payload_len", &self.payload.len())
            .field("mac", &self.mac)
            .finish()
    }
}

/// `len(id) || id || len(nonce) || nonce || len(payload) || payload`, each
/// length a 4-byte big-endian integer.
pub fn canonicalize(client_id: &str, nonce: &Nonce, payload: &[u8]) -> Result<Vec<u8>, MacError> {
    check_bounds(client_id, payload)?;
    let mut out = Vec::with_capacity(12 + client_id.len() + NONCE_LEN + payload.len());
    for field in [client_id.as_bytes(), &nonce[..], payload] {
        out.extend_from_slice(&(field.len() as u32).to_be_bytes());
        out.extend_from_slice(field);
    }
    Ok(out)
}

pub fn compute_mac(genes: &GeneVector, client_id: &str, nonce: &Nonce, payload: &[u8]) -> Result<Digest, MacError> {
    Ok(engine::digest(genes, &canonicalize(client_id, nonce, payload)?))
}

/// Constant-time tag comparison.
pub fn tags_equal(a: &Digest, b: &Digest) -> bool {
    a.as_bytes().ct_eq(b.as_bytes()).into()
}

pub fn verify_mac(genes: &GeneVector, request: &MacRequest) -> bool {
    match compute_mac(genes, &request.client_id, &request.nonce, &request.payload) {
        Ok(expected) => tags_equal(&expected, &request.mac),
        Err(_) => false,
    }
}

/// Callback run before every MAC computation. Returning an error aborts
/// the computation.
pub type GuardHook = Arc<dyn Fn() -> Result<(), String> + Send + Sync>;

/// MAC calculator bound to one gene vector, with an optional guard hook
/// that runs ahead of each computation.
#[derive(Clone)]
pub struct MacCalculator {
    genes: GeneVector,
    hook: Option<GuardHook>,
}

impl MacCalculator {
    pub fn new(genes: GeneVector) -> Self {
        MacCalculator { genes, hook: None }
    }

    pub fn with_guard_hook(mut self, hook: GuardHook) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn compute(&self, client_id: &str, nonce: &Nonce, payload: &[u8]) -> Result<Digest, MacError> {
        if let Some(hook) = &self.hook {
            hook().map_err(MacError::GuardRejected)?;
        }
        compute_mac(&self.genes, client_id, nonce, payload)
    }
}

impl fmt::Debug for MacCalculator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MacCalculator").field("hook", &self.hook.is_some()).finish_non_exhaustive()
    }
}
