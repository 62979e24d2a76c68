//! A pool of pre-rendered variants with pairwise nonequivalent genes.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use rand::rngs::OsRng;
use rand::{RngCore, TryRngCore};
use thiserror::Error;

use crate::codegen::{self, CodegenError, VariantSource};
use crate::engine::{GeneVector, RoundFunctionId};
use crate::genome::{self, ChromosomePair, GenomeError};

pub const MANIFEST: &str = "pool.tsv";

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pool count must be at least 1")]
    Empty,
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("pool manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

impl PoolError {
    fn io(path: &Path, source: io::Error) -> Self {
        PoolError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub chromosomes: ChromosomePair,
    pub variant: VariantSource,
}

impl PoolEntry {
    pub fn new(genes: &GeneVector, template_id: &str) -> Result<Self, CodegenError> {
        Ok(PoolEntry { chromosomes: genome::encode(genes), variant: codegen::render_variant(genes, template_id)? })
    }

    /// Hex fingerprint used as the delivery reference.
    pub fn id(&self) -> String {
        self.variant.genes_fingerprint.to_hex()
    }

    pub fn genes(&self) -> GeneVector {
        genome::decode(&self.chromosomes)
    }
}

/// Canonical member of a gene vector's equivalence class (F3 folded to F1).
fn equivalence_key(genes: &GeneVector) -> ChromosomePair {
    let mut folded = *genes;
    for f in folded.fp.iter_mut() {
        if *f == RoundFunctionId::F3 {
            *f = RoundFunctionId::F1;
        }
    }
    genome::encode(&folded)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariantPool {
    entries: Vec<PoolEntry>,
}

impl VariantPool {
    pub fn from_entries(entries: Vec<PoolEntry>) -> Self {
        VariantPool { entries }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.id() == id)
    }

    pub fn find_by_chromosomes(&self, pair: &ChromosomePair) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| &e.chromosomes == pair)
    }

    /// Writes the manifest and one source file per variant into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), PoolError> {
        fs::create_dir_all(dir).map_err(|e| PoolError::io(dir, e))?;
        let mut manifest = String::new();
        for entry in &self.entries {
            let template = entry.variant.template()?;
            let file = dir.join(format!("{}.{}", entry.id(), template.extension));
            entry.variant.write_to(&file).map_err(|e| PoolError::io(&file, e))?;
            manifest.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                entry.id(),
                entry.chromosomes.fp,
                entry.chromosomes.k,
                entry.variant.template_id
            ));
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest).map_err(|e| PoolError::io(&path, e))
    }

    /// Reads a pool written by [`save_dir`](Self::save_dir). Sources are
    /// re-rendered from the manifest and checked against their ids.
    pub fn load_dir(dir: &Path) -> Result<Self, PoolError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| PoolError::io(&path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| PoolError::Manifest { line: line_no, reason };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, fp, k, template] = fields[..] else {
                return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
            };
            let pair = ChromosomePair::from_hex(fp, k).map_err(|e: GenomeError| bad(e.to_string()))?;
            let entry = PoolEntry::new(&genome::decode(&pair), template)?;
            if entry.id() != id {
                return Err(bad(format!("id {id} does not match chromosomes")));
            }
            entries.push(entry);
        }
        Ok(VariantPool { entries })
    }
}

/// Builds `count` variants whose genes are pairwise functionally
/// nonequivalent.
pub fn variant_pool_build(count: usize, seed: Option<u64>, template_id: &str) -> Result<VariantPool, PoolError> {
    if count == 0 {
        return Err(PoolError::Empty);
    }
    codegen::Template::bundled(template_id)?;
    let mut rng: Box<dyn RngCore> = match seed {
        Some(seed) => Box::new(genome::seeded_rng(seed)),
        None => Box::new(OsRng.unwrap_err()),
    };
    let mut seen = HashSet::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    while entries.len() < count {
        let genes = genome::random_genes_from(&mut rng);
        if seen.insert(equivalence_key(&genes)) {
            entries.push(PoolEntry::new(&genes, template_id)?);
        }
    }
    Ok(VariantPool { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{canonical_genes, functionally_equivalent};

    #[test]
    fn sizes_and_determinism() {
        assert!(matches!(variant_pool_build(0, Some(1), "rust"), Err(PoolError::Empty)));
        assert_eq!(variant_pool_build(1, Some(1), "rust").unwrap().len(), 1);
        assert_eq!(variant_pool_build(10, Some(9), "rust").unwrap(), variant_pool_build(10, Some(9), "rust").unwrap());
        assert_ne!(variant_pool_build(10, Some(9), "rust").unwrap(), variant_pool_build(10, Some(10), "rust").unwrap());
    }

    #[test]
    fn pairwise_nonequivalent() {
        let pool = variant_pool_build(100, Some(5), "rust").unwrap();
        let genes: Vec<_> = pool.entries().iter().map(PoolEntry::genes).collect();
        for i in 0..genes.len() {
            for j in i + 1..genes.len() {
                assert!(!functionally_equivalent(&genes[i], &genes[j]), "{i} ~ {j}");
            }
        }
    }

    #[test]
    fn equivalence_key_folds_f3() {
        let mut g = canonical_genes();
        let key = equivalence_key(&g);
        g.fp[70] = RoundFunctionId::F1;
        assert_eq!(equivalence_key(&g), key);
        g.fp[70] = RoundFunctionId::F2;
        assert_ne!(equivalence_key(&g), key);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pool = variant_pool_build(4, Some(2), "c").unwrap();
        pool.save_dir(dir.path()).unwrap();
        assert_eq!(VariantPool::load_dir(dir.path()).unwrap(), pool);
        let first = &pool.entries()[0];
        let on_disk = fs::read_to_string(dir.path().join(format!("{}.c", first.id()))).unwrap();
        assert_eq!(on_disk, first.variant.source_text);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), "\nabc\tdef\n").unwrap();
        match VariantPool::load_dir(dir.path()) {
            Err(PoolError::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
