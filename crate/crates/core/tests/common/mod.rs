#![allow(dead_code)]

use nversion::engine::{GeneVector, ROUNDS};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard SHA-1 from the `sha1` crate.
pub fn reference_sha1(message: &[u8]) -> String {
    use sha1::{Digest, Sha1};
    hex::encode(Sha1::digest(message))
}

/// Straight-line SHA-1 with per-round function codes and constant codes,
/// written without touching the crate under test.
pub struct StraightLine {
    pub fp: [u8; ROUNDS],
    pub k: [u8; ROUNDS],
}

const K: [u32; 4] = [0x5A827999, 0x6ED9EBA1, 0x8F1BBCDC, 0xCA62C1D6];

impl StraightLine {
    pub fn canonical() -> Self {
        let codes = std::array::from_fn(|i| (i / 20) as u8);
        StraightLine { fp: codes, k: codes }
    }

    pub fn from_genes(g: &GeneVector) -> Self {
        StraightLine {
            fp: std::array::from_fn(|i| g.fp[i] as u8),
            k: std::array::from_fn(|i| g.k[i] as u8),
        }
    }

    fn f(code: u8, b: u32, c: u32, d: u32) -> u32 {
        match code {
            0 => (b & c) | (!b & d),
            2 => (b & c) | (b & d) | (c & d),
            _ => b ^ c ^ d,
        }
    }

    pub fn schedule(block: &[u8]) -> Vec<u32> {
        let mut w: Vec<u32> = block.chunks(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]])).collect();
        for i in 16..80 {
            let x = w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16];
            w.push(x.rotate_left(1));
        }
        w
    }

    pub fn pad(message: &[u8]) -> Vec<u8> {
        let mut m = message.to_vec();
        let bits = (message.len() as u64) * 8;
        m.push(0x80);
        while m.len() % 64 != 56 {
            m.push(0);
        }
        m.extend_from_slice(&bits.to_be_bytes());
        m
    }

    /// Registers `[a, b, c, d, e]` after each round of the first block.
    pub fn trace_first_block(&self, message: &[u8]) -> Vec<[u32; 5]> {
        let padded = Self::pad(message);
        let w = Self::schedule(&padded[..64]);
        let [mut a, mut b, mut c, mut d, mut e] = [0x67452301u32, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0];
        let mut out = Vec::new();
        for i in 0..80 {
            let t = a
                .rotate_left(5)
                .wrapping_add(Self::f(self.fp[i], b, c, d))
                .wrapping_add(e)
                .wrapping_add(K[self.k[i] as usize])
                .wrapping_add(w[i]);
            e = d;
            d = c;
            c = b.rotate_left(30);
            b = a;
            a = t;
            out.push([a, b, c, d, e]);
        }
        out
    }

    pub fn digest(&self, message: &[u8]) -> String {
        let padded = Self::pad(message);
        let mut h = [0x67452301u32, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0];
        for block in padded.chunks(64) {
            let w = Self::schedule(block);
            let [mut a, mut b, mut c, mut d, mut e] = h;
            for i in 0..80 {
                let t = a
                    .rotate_left(5)
                    .wrapping_add(Self::f(self.fp[i], b, c, d))
                    .wrapping_add(e)
                    .wrapping_add(K[self.k[i] as usize])
                    .wrapping_add(w[i]);
                e = d;
                d = c;
                c = b.rotate_left(30);
                b = a;
                a = t;
            }
            for (x, y) in h.iter_mut().zip([a, b, c, d, e]) {
                *x = x.wrapping_add(y);
            }
        }
        h.iter().map(|x| format!("{x:08x}")).collect()
    }
}

/// Random messages with lengths in `0..=max_len`.
pub fn random_messages(seed: u64, count: usize, max_len: usize) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            let mut m = vec![0u8; len];
            rng.fill_bytes(&mut m);
            m
        })
        .collect()
}
