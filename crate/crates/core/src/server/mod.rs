//! Server side of the protocol: variant assignment, the N-version
//! database, and request verification.

pub mod db;
pub mod http;
pub mod replay;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use rand::{Rng, RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::engine::GeneVector;
use crate::genome;
use crate::mac::{self, MacRequest};
use crate::pool::{PoolEntry, VariantPool};

pub use db::{ClientRecord, DbError, NVersionDatabase};
pub use replay::ReplayWindow;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("client {0:?} is already registered")]
    AlreadyRegistered(String),
    #[error("no variant available for assignment")]
    PoolExhausted,
    #[error("client {0:?} not found")]
    NotFound(String),
    #[error("invalid client id {0:?}")]
    InvalidClientId(String),
    #[error("registered variant is missing from the pool")]
    VariantMissing,
    #[error(transparent)]
    Db(DbError),
}

impl From<DbError> for ServerError {
    fn from(e: DbError) -> Self {
        match e {
            DbError::Duplicate(id) => ServerError::AlreadyRegistered(id),
            DbError::InvalidClientId(id) => ServerError::InvalidClientId(id),
            other => ServerError::Db(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    UnknownClient,
    Replay,
    BadMac,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownClient => "unknown-client",
            RejectReason::Replay => "replay",
            RejectReason::BadMac => "bad-mac",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        [Self::UnknownClient, Self::Replay, Self::BadMac].into_iter().find(|r| r.as_str() == text)
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accepted => f.write_str("accepted"),
            Verdict::Rejected(reason) => write!(f, "rejected({reason})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Accepted nonces remembered per client.
    pub replay_window: usize,
    /// Hand each pool variant to at most one client.
    pub unique_assignment: bool,
    /// Where the database is persisted after each registration.
    pub db_path: Option<PathBuf>,
    /// Seed for variant selection; `None` draws from the OS.
    pub seed: Option<u64>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions { replay_window: replay::DEFAULT_WINDOW, unique_assignment: false, db_path: None, seed: None }
    }
}

/// What registration hands back for delivery. Only the rendered variant
/// leaves the server, never the chromosomes.
#[derive(Debug, Clone)]
pub struct Registration {
    pub record: ClientRecord,
    pub variant: PoolEntry,
    pub token: String,
}

pub struct Server {
    db: RwLock<Arc<NVersionDatabase>>,
    writer: Mutex<ChaCha20Rng>,
    pool: VariantPool,
    replay: ReplayWindow,
    options: ServerOptions,
}

impl Server {
    pub fn new(db: NVersionDatabase, pool: VariantPool, options: ServerOptions) -> Self {
        let rng = match options.seed {
            Some(seed) => genome::seeded_rng(seed),
            None => ChaCha20Rng::from_rng(&mut rand::rngs::OsRng.unwrap_err()),
        };
        Server {
            db: RwLock::new(Arc::new(db)),
            writer: Mutex::new(rng),
            pool,
            replay: ReplayWindow::new(options.replay_window),
            options,
        }
    }

    pub fn pool(&self) -> &VariantPool {
        &self.pool
    }

    pub fn options(&self) -> &ServerOptions {
        &self.options
    }

    /// Consistent view of the database at this instant.
    pub fn snapshot(&self) -> Arc<NVersionDatabase> {
        self.db.read().unwrap().clone()
    }

    /// Assigns a random pool variant to `client_id` and persists the
    /// mapping. Registrations are serialized; verifications keep running
    /// against the previous snapshot until the new one is published.
    pub fn register_client(&self, client_id: &str) -> Result<Registration, ServerError> {
        db::validate_client_id(client_id)?;
        let mut rng = self.writer.lock().unwrap();
        let current = self.snapshot();
        if current.get(client_id).is_some() {
            return Err(ServerError::AlreadyRegistered(client_id.to_string()));
        }

        let candidates: Vec<&PoolEntry> = if self.options.unique_assignment {
            let taken: HashSet<_> = current.records().map(|r| r.chromosomes).collect();
            self.pool.entries().iter().filter(|e| !taken.contains(&e.chromosomes)).collect()
        } else {
            self.pool.entries().iter().collect()
        };
        if candidates.is_empty() {
            return Err(ServerError::PoolExhausted);
        }
        let chosen = candidates[rng.random_range(0..candidates.len())].clone();

        let record = ClientRecord::new(client_id, chosen.chromosomes, Utc::now());
        let mut next = (*current).clone();
        next.insert(record.clone())?;
        if let Some(path) = &self.options.db_path {
            next.save(path)?;
        }
        *self.db.write().unwrap() = Arc::new(next);

        let mut token = [0u8; 16];
        rng.fill_bytes(&mut token);
        log::info!("registered {client_id} with variant {}", chosen.id());
        Ok(Registration { record, variant: chosen, token: hex::encode(token) })
    }

    pub fn lookup_genes(&self, client_id: &str) -> Result<GeneVector, ServerError> {
        self.snapshot()
            .get(client_id)
            .map(ClientRecord::genes)
            .ok_or_else(|| ServerError::NotFound(client_id.to_string()))
    }

    /// The variant a client was given, for re-delivery.
    pub fn variant_of(&self, client_id: &str) -> Result<PoolEntry, ServerError> {
        let snapshot = self.snapshot();
        let record = snapshot.get(client_id).ok_or_else(|| ServerError::NotFound(client_id.to_string()))?;
        self.pool.find_by_chromosomes(&record.chromosomes).cloned().ok_or(ServerError::VariantMissing)
    }

    /// Checks, in order: known client, fresh nonce, valid MAC. An accepted
    /// request's nonce is recorded.
    pub fn handle_verify(&self, request: &MacRequest) -> Verdict {
        let genes = match self.lookup_genes(request.client_id()) {
            Ok(genes) => genes,
            Err(_) => return Verdict::Rejected(RejectReason::UnknownClient),
        };
        if self.replay.seen(request.client_id(), request.nonce()) {
            return Verdict::Rejected(RejectReason::Replay);
        }
        if !mac::verify_mac(&genes, request) {
            return Verdict::Rejected(RejectReason::BadMac);
        }
        if !self.replay.claim(request.client_id(), *request.nonce()) {
            return Verdict::Rejected(RejectReason::Replay);
        }
        Verdict::Accepted
    }
}

impl fmt::Debug for Server {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Server")
            .field("clients", &self.snapshot().len())
            .field("pool", &self.pool.len())
            .field("options", &self.options)
            .finish()
    }
}
