//! N-version SHA-1: functionally nonequivalent digest variants generated
//! from gene chromosomes, a parent engine that reproduces any of them, and
//! a client-server MAC protocol with a memory-map guard built on top.
//!
//! * [`engine`] — the gene-parameterized SHA-1 parent algorithm.
//! * [`genome`] — 160-bit chromosome encoding and random gene generation.
//! * [`codegen`] / [`pool`] — straight-line variant source and variant pools.
//! * [`guard`] — `/proc/<pid>/maps` integrity check.
//! * [`mac`] — MAC computation and verification.
//! * [`server`] / [`client`] — registration and verification over HTTP.
//! * [`harness`] — divergence, replication and cost experiments.

pub mod client;
pub mod codegen;
pub mod engine;
pub mod error;
pub mod genome;
pub mod guard;
pub mod harness;
pub mod mac;
pub mod pool;
pub mod server;

pub use engine::{canonical_genes, digest, functionally_equivalent, Digest, GeneVector, KOptionId, RoundFunctionId};
pub use genome::{decode, encode, random_genes, Chromosome, ChromosomePair};
