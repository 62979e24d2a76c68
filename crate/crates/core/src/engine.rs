//! Gene-parameterized SHA-1.
//!
//! The parent engine runs the standard SHA-1 padding and message schedule,
//! then executes 80 rounds whose boolean function and additive constant are
//! chosen per round by a [`GeneVector`]. With [`canonical_genes`] the output
//! is ordinary SHA-1.

use std::fmt;
use std::str::FromStr;

use crate::error::ParseError;

/// Number of compression rounds.
pub const ROUNDS: usize = 80;

/// Standard SHA-1 initial chaining values. These are never diversified.
pub const INITIAL_STATE: [u32; 5] = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0];

/// Bytes per message block.
pub const BLOCK_LEN: usize = 64;

/// One of the four round functions.
///
/// `F1` and `F3` share the same body (`b ^ c ^ d`). They stay distinct so the
/// 2-bit coding keeps four symbols; see [`functionally_equivalent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoundFunctionId {
    F0,
    F1,
    F2,
    F3,
}

impl RoundFunctionId {
    pub const ALL: [RoundFunctionId; 4] = [Self::F0, Self::F1, Self::F2, Self::F3];

    /// 2-bit code (0..=3).
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Panics if `code > 3`.
    pub fn from_code(code: u8) -> Self {
        Self::ALL[code as usize]
    }

    #[inline]
    pub fn apply(self, b: u32, c: u32, d: u32) -> u32 {
        round_function(self, b, c, d)
    }

    /// Representative of the F1/F3 equivalence class.
    fn class(self) -> RoundFunctionId {
        match self {
            Self::F3 => Self::F1,
            other => other,
        }
    }
}

impl fmt::Display for RoundFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.code())
    }
}

/// Selector for one of the four standard SHA-1 round constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KOptionId {
    K0,
    K1,
    K2,
    K3,
}

impl KOptionId {
    pub const ALL: [KOptionId; 4] = [Self::K0, Self::K1, Self::K2, Self::K3];
    pub const CONSTANTS: [u32; 4] = [0x5A827999, 0x6ED9EBA1, 0x8F1BBCDC, 0xCA62C1D6];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Panics if `code > 3`.
    pub fn from_code(code: u8) -> Self {
        Self::ALL[code as usize]
    }

    #[inline]
    pub fn constant(self) -> u32 {
        Self::CONSTANTS[self as usize]
    }
}

impl fmt::Display for KOptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "K{}", self.code())
    }
}

/// The per-round diversification choices of one variant.
///
/// Both sequences are fixed-size arrays, so no length other than 80 can be
/// represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeneVector {
    pub fp: [RoundFunctionId; ROUNDS],
    pub k: [KOptionId; ROUNDS],
}

impl GeneVector {
    pub fn new(fp: [RoundFunctionId; ROUNDS], k: [KOptionId; ROUNDS]) -> Self {
        Self { fp, k }
    }

    /// Every round uses the same function and constant.
    pub fn uniform(f: RoundFunctionId, k: KOptionId) -> Self {
        Self { fp: [f; ROUNDS], k: [k; ROUNDS] }
    }

    /// Round `i` as `(function, constant)`.
    pub fn round(&self, i: usize) -> (RoundFunctionId, u32) {
        (self.fp[i], self.k[i].constant())
    }
}

impl Default for GeneVector {
    fn default() -> Self {
        canonical_genes()
    }
}

/// Chaining values `h0..h4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashState(pub [u32; 5]);

impl Default for HashState {
    fn default() -> Self {
        HashState(INITIAL_STATE)
    }
}

/// Working registers `a..e` during compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Registers {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub d: u32,
    pub e: u32,
}

impl Registers {
    pub fn from_state(state: &HashState) -> Self {
        let [a, b, c, d, e] = state.0;
        Registers { a, b, c, d, e }
    }

    pub fn to_array(self) -> [u32; 5] {
        [self.a, self.b, self.c, self.d, self.e]
    }
}

/// 160-bit hash output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 20]);

impl Digest {
    pub fn from_state(state: &HashState) -> Self {
        let mut out = [0u8; 20];
        for (chunk, word) in out.chunks_exact_mut(4).zip(state.0) {
            chunk.copy_from_slice(&word.to_be_bytes());
        }
        Digest(out)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// 40 lowercase hex characters, `h0` first.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, ParseError> {
        if text.len() != 40 {
            return Err(ParseError::Length { expected: 40, found: text.len() });
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(text, &mut out).map_err(|_| ParseError::NotHex)?;
        Ok(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s)
    }
}

/// Standard SHA-1 padding: `0x80`, zero fill, 64-bit big-endian bit length.
///
/// Returns `ceil((len + 9) / 64)` blocks.
pub fn pad_message(message: &[u8]) -> Vec<[u8; BLOCK_LEN]> {
    let bit_len = (message.len() as u64).wrapping_mul(8);
    let block_count = (message.len() + 9).div_ceil(BLOCK_LEN);
    let mut blocks = vec![[0u8; BLOCK_LEN]; block_count];

    for (block, chunk) in blocks.iter_mut().zip(message.chunks(BLOCK_LEN)) {
        block[..chunk.len()].copy_from_slice(chunk);
    }
    let end = message.len();
    blocks[end / BLOCK_LEN][end % BLOCK_LEN] = 0x80;
    blocks[block_count - 1][BLOCK_LEN - 8..].copy_from_slice(&bit_len.to_be_bytes());
    blocks
}

/// Expands one block into the 80-word schedule.
pub fn expand_schedule(block: &[u8; BLOCK_LEN]) -> [u32; ROUNDS] {
    let mut w = [0u32; ROUNDS];
    for (word, bytes) in w.iter_mut().zip(block.chunks_exact(4)) {
        *word = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    }
    for i in 16..ROUNDS {
        w[i] = (w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16]).rotate_left(1);
    }
    w
}

/// Slice form of [`expand_schedule`]. Panics unless `block.len() == 64`.
pub fn expand_schedule_slice(block: &[u8]) -> [u32; ROUNDS] {
    let block: &[u8; BLOCK_LEN] = block
        .try_into()
        .unwrap_or_else(|_| panic!("schedule expansion needs a 64-byte block, got {}", block.len()));
    expand_schedule(block)
}

#[inline]
pub fn round_function(id: RoundFunctionId, b: u32, c: u32, d: u32) -> u32 {
    match id {
        RoundFunctionId::F0 => (b & c) | (!b & d),
        RoundFunctionId::F1 => b ^ c ^ d,
        RoundFunctionId::F2 => (b & c) | (b & d) | (c & d),
        RoundFunctionId::F3 => b ^ c ^ d,
    }
}

/// The shared round tail: adds `f`, `k` and `w` into a new `a` and shifts
/// the registers down.
#[inline]
pub fn f_tail(regs: Registers, f: u32, k: u32, w: u32) -> Registers {
    let temp = regs
        .a
        .rotate_left(5)
        .wrapping_add(f)
        .wrapping_add(regs.e)
        .wrapping_add(k)
        .wrapping_add(w);
    Registers { a: temp, b: regs.a, c: regs.b.rotate_left(30), d: regs.c, e: regs.d }
}

/// One gene-selected round.
#[inline]
pub fn step(regs: Registers, function: RoundFunctionId, k: u32, w: u32) -> Registers {
    let f = round_function(function, regs.b, regs.c, regs.d);
    f_tail(regs, f, k, w)
}

pub fn compress_block(state: HashState, w: &[u32; ROUNDS], genes: &GeneVector) -> HashState {
    let mut regs = Registers::from_state(&state);
    for (i, &word) in w.iter().enumerate() {
        regs = step(regs, genes.fp[i], genes.k[i].constant(), word);
    }
    let mut out = state.0;
    for (h, r) in out.iter_mut().zip(regs.to_array()) {
        *h = h.wrapping_add(r);
    }
    HashState(out)
}

/// The parent algorithm: SHA-1 with the round sequence of `genes`.
pub fn digest(genes: &GeneVector, message: &[u8]) -> Digest {
    let state = pad_message(message)
        .iter()
        .fold(HashState::default(), |state, block| compress_block(state, &expand_schedule(block), genes));
    Digest::from_state(&state)
}

/// Genes that reproduce standard SHA-1: 20 rounds each of F0/K0, F1/K1,
/// F2/K2, F3/K3.
pub fn canonical_genes() -> GeneVector {
    let fp = std::array::from_fn(|i| RoundFunctionId::ALL[i / 20]);
    let k = std::array::from_fn(|i| KOptionId::ALL[i / 20]);
    GeneVector { fp, k }
}

/// True when both vectors compute the same function: identical constants in
/// every round and identical round functions up to F1 = F3.
pub fn functionally_equivalent(g1: &GeneVector, g2: &GeneVector) -> bool {
    g1.k == g2.k && g1.fp.iter().zip(&g2.fp).all(|(x, y)| x.class() == y.class())
}
