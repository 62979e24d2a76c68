//! Memory-map integrity check.
//!
//! Reads a Linux `/proc/<pid>/maps` listing, folds the mappings of each
//! pathname into one segment, and compares the result with a whitelist of
//! expected segment names and sizes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GuardError {
    #[error("maps line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("dictionary line {line}: {reason}")]
    Dictionary { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("live memory maps are not available on this platform")]
    Unsupported,
}

/// One mapping, or several mappings of one pathname after coalescing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentRecord {
    /// Pathname field; empty for anonymous mappings.
    pub name: String,
    pub size: u64,
    pub permissions: String,
}

impl SegmentRecord {
    /// Anonymous and pseudo mappings (`[heap]`, `[stack]`, `[vdso]`, ...).
    pub fn is_anonymous(&self) -> bool {
        self.name.is_empty() || self.name.starts_with('[')
    }
}

/// Developer-defined whitelist: segment name to expected total size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentDictionary {
    entries: BTreeMap<String, u64>,
}

impl SegmentDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous size if `name` was already present.
    pub fn insert(&mut self, name: impl Into<String>, size: u64) -> Option<u64> {
        self.entries.insert(name.into(), size)
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.entries.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Dictionary of exactly the named segments in `records`, after
    /// coalescing. Useful for recording a known-good process.
    pub fn from_records(records: &[SegmentRecord]) -> Self {
        let entries = coalesce(records)
            .into_iter()
            .filter(|r| !r.is_anonymous())
            .map(|r| (r.name, r.size))
            .collect();
        SegmentDictionary { entries }
    }

    /// Parses `<size><TAB><name>` lines. Blank lines are ignored; names may
    /// contain spaces. Duplicate names are rejected.
    pub fn parse(text: &str) -> Result<Self, GuardError> {
        let mut dict = SegmentDictionary::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| GuardError::Dictionary { line: line_no, reason };
            let (size, name) = line.split_once('\t').ok_or_else(|| bad("missing tab separator".into()))?;
            let size: u64 = size.parse().map_err(|_| bad(format!("invalid size {size:?}")))?;
            if name.is_empty() {
                return Err(bad("empty segment name".into()));
            }
            if dict.insert(name, size).is_some() {
                return Err(bad(format!("duplicate segment {name:?}")));
            }
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self, GuardError> {
        let text = fs::read_to_string(path).map_err(|source| GuardError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(name, size)| format!("{size}\t{name}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    UnknownSegment,
    SizeMismatch,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::UnknownSegment => "unknown-segment",
            ViolationKind::SizeMismatch => "size-mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Violation {
    pub kind: ViolationKind,
    pub segment: SegmentRecord,
    /// Set for size mismatches only.
    pub expected_size: Option<u64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expected_size {
            Some(expected) => write!(
                f,
                "{}: {} is {} bytes, expected {}",
                self.kind, self.segment.name, self.segment.size, expected
            ),
            None => write!(f, "{}: {} ({} bytes)", self.kind, self.segment.name, self.segment.size),
        }
    }
}

fn parse_line(line: &str) -> Result<SegmentRecord, String> {
    let mut rest = line.trim_start();
    let mut fields = [""; 5];
    for field in fields.iter_mut() {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        *field = &rest[..end];
        rest = rest[end..].trim_start();
    }
    let [range, perms, offset, dev, inode] = fields;
    if inode.is_empty() {
        return Err("expected `start-end perms offset dev inode [pathname]`".into());
    }

    let (start, end) = range.split_once('-').ok_or_else(|| format!("bad address range {range:?}"))?;
    let hex = |s: &str| -> Result<u64, String> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("bad hex value {s:?}"));
        }
        u64::from_str_radix(s, 16).map_err(|_| format!("hex value out of range {s:?}"))
    };
    let (start, end) = (hex(start)?, hex(end)?);
    if end < start {
        return Err(format!("end address {end:#x} precedes start {start:#x}"));
    }
    if perms.len() != 4 {
        return Err(format!("bad permissions {perms:?}"));
    }
    hex(offset)?;
    if !dev.contains(':') {
        return Err(format!("bad device {dev:?}"));
    }
    if inode.parse::<u64>().is_err() {
        return Err(format!("bad inode {inode:?}"));
    }

    Ok(SegmentRecord { name: rest.trim_end().to_string(), size: end - start, permissions: perms.to_string() })
}

/// One record per non-blank line, in input order.
pub fn parse_maps(text: &str) -> Result<Vec<SegmentRecord>, GuardError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| parse_line(line).map_err(|reason| GuardError::Parse { line: n + 1, reason }))
        .collect()
}

fn merge_permissions(a: &str, b: &str) -> String {
    a.chars()
        .zip(b.chars())
        .enumerate()
        .map(|(i, (x, y))| match i {
            3 if x == 's' || y == 's' => 's',
            3 => x.max(y),
            _ if x != '-' => x,
            _ => y,
        })
        .collect()
}

/// Sums the sizes of every mapping sharing a pathname. Permissions are the
/// union of the merged mappings' flags. Output is sorted by name, so the
/// result does not depend on input order.
pub fn coalesce(records: &[SegmentRecord]) -> Vec<SegmentRecord> {
    let mut merged: BTreeMap<&str, SegmentRecord> = BTreeMap::new();
    for record in records {
        merged
            .entry(record.name.as_str())
            .and_modify(|m| {
                m.size += record.size;
                m.permissions = merge_permissions(&m.permissions, &record.permissions);
            })
            .or_insert_with(|| record.clone());
    }
    merged.into_values().collect()
}

/// Compares coalesced named segments with `dict`. An empty result means
/// the map is intact.
pub fn integrity_check(records: &[SegmentRecord], dict: &SegmentDictionary) -> Vec<Violation> {
    coalesce(records)
        .into_iter()
        .filter(|r| !r.is_anonymous())
        .filter_map(|segment| match dict.get(&segment.name) {
            None => Some(Violation { kind: ViolationKind::UnknownSegment, segment, expected_size: None }),
            Some(expected) if expected != segment.size => {
                Some(Violation { kind: ViolationKind::SizeMismatch, segment, expected_size: Some(expected) })
            }
            Some(_) => None,
        })
        .collect()
}

/// Where [`run_guard`] reads its listing from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapsSource {
    File(PathBuf),
    /// The calling process's own map.
    Live,
}

impl MapsSource {
    pub fn read(&self) -> Result<String, GuardError> {
        match self {
            MapsSource::File(path) => {
                fs::read_to_string(path).map_err(|source| GuardError::Io { path: path.clone(), source })
            }
            MapsSource::Live => read_live_maps(),
        }
    }
}

#[cfg(any(target_os = "linux", target_os = "android"))]
fn read_live_maps() -> Result<String, GuardError> {
    let path = PathBuf::from("/proc/self/maps");
    fs::read_to_string(&path).map_err(|source| GuardError::Io { path, source })
}

#[cfg(not(any(target_os = "linux", target_os = "android")))]
fn read_live_maps() -> Result<String, GuardError> {
    Err(GuardError::Unsupported)
}

/// Reaction that logs each violation.
pub fn log_reaction(violation: &Violation) {
    log::warn!("integrity violation: {violation}");
}

/// Reads, parses and checks, calling `reaction` once per violation.
pub fn run_guard(
    source: &MapsSource,
    dict: &SegmentDictionary,
    mut reaction: impl FnMut(&Violation),
) -> Result<Vec<Violation>, GuardError> {
    let records = parse_maps(&source.read()?)?;
    let violations = integrity_check(&records, dict);
    for v in &violations {
        reaction(v);
    }
    Ok(violations)
}
