//! Chromosome encoding of gene vectors.
//!
//! A [`Chromosome`] is 160 bits holding 80 two-bit codes. Gene `i` sits at
//! bit positions `2i` (high) and `2i + 1` (low), where bit 0 is the most
//! significant bit of the first byte, so the hex form reads left to right in
//! round order. Codes `00`, `01`, `10`, `11` select option 0..3.
//!
//! Seeded generation uses ChaCha20 (`rand_chacha::ChaCha20Rng`) expanded
//! from the 64-bit seed with `SeedableRng::seed_from_u64`, which is
//! specified and platform independent. The first 20 output bytes become the
//! function chromosome and the next 20 the constant chromosome. Unseeded
//! generation reads the operating system's CSPRNG.

use std::fmt;
use std::str::FromStr;

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::engine::{GeneVector, KOptionId, RoundFunctionId, ROUNDS};
use crate::error::ParseError;

/// Chromosome size in bytes (160 bits).
pub const CHROMOSOME_BYTES: usize = 20;
/// Chromosome size in hex characters.
pub const CHROMOSOME_HEX_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenomeError {
    #[error("malformed chromosome: {0}")]
    Malformed(#[from] ParseError),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Chromosome([u8; CHROMOSOME_BYTES]);

impl Chromosome {
    pub fn from_bytes(bytes: [u8; CHROMOSOME_BYTES]) -> Self {
        Chromosome(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; CHROMOSOME_BYTES] {
        &self.0
    }

    /// Two-bit code of gene `i`.
    pub fn code(&self, i: usize) -> u8 {
        assert!(i < ROUNDS, "gene index {i} out of range");
        (self.0[i / 4] >> (6 - 2 * (i % 4))) & 0b11
    }

    pub fn set_code(&mut self, i: usize, code: u8) {
        assert!(i < ROUNDS, "gene index {i} out of range");
        assert!(code < 4, "gene code {code} out of range");
        let shift = 6 - 2 * (i % 4);
        let byte = &mut self.0[i / 4];
        *byte = (*byte & !(0b11 << shift)) | (code << shift);
    }

    fn from_codes(codes: impl Iterator<Item = u8>) -> Self {
        let mut c = Chromosome::default();
        for (i, code) in codes.enumerate() {
            c.set_code(i, code);
        }
        c
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, GenomeError> {
        if text.len() != CHROMOSOME_HEX_LEN {
            return Err(ParseError::Length { expected: CHROMOSOME_HEX_LEN, found: text.len() }.into());
        }
        let mut bytes = [0u8; CHROMOSOME_BYTES];
        hex::decode_to_slice(text, &mut bytes).map_err(|_| ParseError::NotHex)?;
        Ok(Chromosome(bytes))
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chromosome({})", self.to_hex())
    }
}

impl FromStr for Chromosome {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Chromosome::from_hex(s)
    }
}

/// The two chromosomes of one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChromosomePair {
    pub fp: Chromosome,
    pub k: Chromosome,
}

impl ChromosomePair {
    pub fn from_hex(fp: &str, k: &str) -> Result<Self, GenomeError> {
        Ok(ChromosomePair { fp: Chromosome::from_hex(fp)?, k: Chromosome::from_hex(k)? })
    }

    /// `fp` bytes followed by `k` bytes.
    pub fn to_bytes(&self) -> [u8; 2 * CHROMOSOME_BYTES] {
        let mut out = [0u8; 2 * CHROMOSOME_BYTES];
        out[..CHROMOSOME_BYTES].copy_from_slice(self.fp.as_bytes());
        out[CHROMOSOME_BYTES..].copy_from_slice(self.k.as_bytes());
        out
    }

    pub fn decode(&self) -> GeneVector {
        decode(self)
    }
}

pub fn encode(genes: &GeneVector) -> ChromosomePair {
    ChromosomePair {
        fp: Chromosome::from_codes(genes.fp.iter().map(|f| f.code())),
        k: Chromosome::from_codes(genes.k.iter().map(|k| k.code())),
    }
}

/// Inverse of [`encode`]. Every 160-bit pattern decodes, so length is the
/// only thing that can be wrong and it is enforced by [`Chromosome`].
pub fn decode(pair: &ChromosomePair) -> GeneVector {
    GeneVector {
        fp: std::array::from_fn(|i| RoundFunctionId::from_code(pair.fp.code(i))),
        k: std::array::from_fn(|i| KOptionId::from_code(pair.k.code(i))),
    }
}

/// Decodes a pair given as two hex strings.
pub fn decode_hex(fp: &str, k: &str) -> Result<GeneVector, GenomeError> {
    Ok(decode(&ChromosomePair::from_hex(fp, k)?))
}

pub fn chromosome_to_hex(c: &Chromosome) -> String {
    c.to_hex()
}

pub fn chromosome_from_hex(text: &str) -> Result<Chromosome, GenomeError> {
    Chromosome::from_hex(text)
}

/// Draws a uniformly random gene vector from `rng`.
pub fn random_genes_from<R: RngCore + ?Sized>(rng: &mut R) -> GeneVector {
    let mut bytes = [0u8; 2 * CHROMOSOME_BYTES];
    rng.fill_bytes(&mut bytes);
    let fp: [u8; CHROMOSOME_BYTES] = bytes[..CHROMOSOME_BYTES].try_into().unwrap();
    let k: [u8; CHROMOSOME_BYTES] = bytes[CHROMOSOME_BYTES..].try_into().unwrap();
    decode(&ChromosomePair { fp: Chromosome(fp), k: Chromosome(k) })
}

/// Deterministic generator used for every seeded draw in this crate.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random gene vector; reproducible when `seed` is given.
pub fn random_genes(seed: Option<u64>) -> GeneVector {
    match seed {
        Some(seed) => random_genes_from(&mut seeded_rng(seed)),
        None => random_genes_from(&mut OsRng.unwrap_err()),
    }
}
