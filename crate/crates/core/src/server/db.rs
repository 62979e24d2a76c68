//! The N-version database: client id to chromosome pair.
//!
//! File format, one record per line, UTF-8:
//!
//! ```text
//! <client_id>\t<fp_hex>\t<k_hex>\t<YYYY-MM-DDTHH:MM:SSZ>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, Utc};
use thiserror::Error;

use crate::engine::GeneVector;
use crate::genome::{self, ChromosomePair};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("database line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("client id {0:?} is already registered")]
    Duplicate(String),
    #[error("invalid client id {0:?}")]
    InvalidClientId(String),
}

/// Ids must fit the MAC bounds and the tab-separated file format.
pub fn validate_client_id(id: &str) -> Result<(), DbError> {
    if id.is_empty() || id.len() > crate::mac::MAX_CLIENT_ID_LEN || id.chars().any(char::is_control) {
        return Err(DbError::InvalidClientId(id.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientRecord {
    pub client_id: String,
    pub chromosomes: ChromosomePair,
    pub assigned_at: DateTime<Utc>,
}

impl ClientRecord {
    /// Timestamp is truncated to whole seconds.
    pub fn new(client_id: impl Into<String>, chromosomes: ChromosomePair, assigned_at: DateTime<Utc>) -> Self {
        ClientRecord { client_id: client_id.into(), chromosomes, assigned_at: assigned_at.trunc_subsecs(0) }
    }

    pub fn genes(&self) -> GeneVector {
        genome::decode(&self.chromosomes)
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\n",
            self.client_id,
            self.chromosomes.fp,
            self.chromosomes.k,
            self.assigned_at.format(TIMESTAMP_FORMAT)
        )
    }

    fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [client_id, fp, k, at] = fields[..] else {
            return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
        };
        validate_client_id(client_id).map_err(|e| e.to_string())?;
        let chromosomes = ChromosomePair::from_hex(fp, k).map_err(|e| e.to_string())?;
        let assigned_at = DateTime::parse_from_rfc3339(at)
            .map_err(|e| format!("bad timestamp {at:?}: {e}"))?
            .with_timezone(&Utc);
        Ok(ClientRecord::new(client_id, chromosomes, assigned_at))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NVersionDatabase {
    records: BTreeMap<String, ClientRecord>,
}

impl NVersionDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, client_id: &str) -> Option<&ClientRecord> {
        self.records.get(client_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ClientRecord> {
        self.records.values()
    }

    pub fn insert(&mut self, record: ClientRecord) -> Result<(), DbError> {
        validate_client_id(&record.client_id)?;
        if self.records.contains_key(&record.client_id) {
            return Err(DbError::Duplicate(record.client_id));
        }
        self.records.insert(record.client_id.clone(), record);
        Ok(())
    }

    pub fn render(&self) -> String {
        self.records.values().map(ClientRecord::to_line).collect()
    }

    pub fn parse(text: &str) -> Result<Self, DbError> {
        let mut db = NVersionDatabase::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let record = ClientRecord::parse_line(line).map_err(|reason| DbError::Parse { line: n + 1, reason })?;
            db.insert(record).map_err(|e| DbError::Parse { line: n + 1, reason: e.to_string() })?;
        }
        Ok(db)
    }

    /// Writes to a temporary file beside `path`, then renames over it.
    pub fn save(&self, path: &Path) -> Result<(), DbError> {
        let io_err = |source| DbError::Io { path: path.to_path_buf(), source };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(self.render().as_bytes()).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DbError> {
        let text = fs::read_to_string(path).map_err(|source| DbError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Like [`load`](Self::load), but a missing file is an empty database.
    pub fn load_or_default(path: &Path) -> Result<Self, DbError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::new()),
            Err(source) => Err(DbError::Io { path: path.to_path_buf(), source }),
        }
    }
}
