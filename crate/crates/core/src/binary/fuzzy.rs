//! Context-triggered piecewise hashing.
//!
//! The classical ssdeep parameterization: a 7-byte rolling window decides
//! piece boundaries, an FNV-style accumulator turns each piece into one
//! base64 symbol, and block sizes are `3 * 2^k`. Digests are compared with
//! a weighted edit distance at a shared block size.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const ROLLING_WINDOW: usize = 7;
pub const MIN_BLOCK: u32 = 3;
pub const SIGNATURE_LEN: usize = 64;

const HASH_PRIME: u32 = 0x0100_0193;
const HASH_INIT: u32 = 0x2802_1967;
const B64: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

#[derive(Default)]
struct RollingHash {
    window: [u8; ROLLING_WINDOW],
    h1: u32,
    h2: u32,
    h3: u32,
    n: usize,
}

impl RollingHash {
    fn update(&mut self, byte: u8) {
        let c = u32::from(byte);
        self.h2 = self.h2.wrapping_sub(self.h1);
        self.h2 = self.h2.wrapping_add(ROLLING_WINDOW as u32 * c);
        self.h1 = self.h1.wrapping_add(c);
        self.h1 = self.h1.wrapping_sub(u32::from(self.window[self.n]));
        self.window[self.n] = byte;
        self.n = (self.n + 1) % ROLLING_WINDOW;
        self.h3 = (self.h3 << 5) ^ c;
    }

    fn sum(&self) -> u32 {
        self.h1.wrapping_add(self.h2).wrapping_add(self.h3)
    }
}

fn piece_hash(h: u32, byte: u8) -> u32 {
    h.wrapping_mul(HASH_PRIME) ^ u32::from(byte)
}

/// A CTPH digest: `sig1` at `block_size`, `sig2` at twice that.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FuzzyDigest {
    pub block_size: u32,
    pub sig1: String,
    pub sig2: String,
}

impl fmt::Display for FuzzyDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.block_size, self.sig1, self.sig2)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed fuzzy digest {0:?}")]
pub struct ParseDigestError(String);

impl FromStr for FuzzyDigest {
    type Err = ParseDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseDigestError(s.to_string());
        let mut parts = s.splitn(3, ':');
        let block_size: u32 = parts.next().and_then(|b| b.parse().ok()).ok_or_else(bad)?;
        let sig1 = parts.next().ok_or_else(bad)?.to_string();
        let sig2 = parts.next().ok_or_else(bad)?.to_string();
        if block_size < MIN_BLOCK
            || !(block_size / MIN_BLOCK).is_power_of_two()
            || !block_size.is_multiple_of(MIN_BLOCK)
        {
            return Err(bad());
        }
        Ok(Self { block_size, sig1, sig2 })
    }
}

fn digest_at(data: &[u8], block_size: u32) -> (String, String) {
    let mut roll = RollingHash::default();
    let (mut h1, mut h2) = (HASH_INIT, HASH_INIT);
    let mut sig1 = Vec::with_capacity(SIGNATURE_LEN);
    let mut sig2 = Vec::with_capacity(SIGNATURE_LEN / 2);
    let double = block_size * 2;
    for &byte in data {
        roll.update(byte);
        h1 = piece_hash(h1, byte);
        h2 = piece_hash(h2, byte);
        let rh = roll.sum();
        if rh % block_size == block_size - 1 && sig1.len() < SIGNATURE_LEN - 1 {
            sig1.push(B64[(h1 % 64) as usize]);
            h1 = HASH_INIT;
        }
        if rh % double == double - 1 && sig2.len() < SIGNATURE_LEN / 2 - 1 {
            sig2.push(B64[(h2 % 64) as usize]);
            h2 = HASH_INIT;
        }
    }
    if roll.sum() != 0 {
        sig1.push(B64[(h1 % 64) as usize]);
        sig2.push(B64[(h2 % 64) as usize]);
    }
    // B64 is ASCII
    (
        String::from_utf8(sig1).unwrap(),
        String::from_utf8(sig2).unwrap(),
    )
}

/// Computes the piecewise digest of `data`.
pub fn fuzzy_digest(data: &[u8]) -> FuzzyDigest {
    let mut block_size = MIN_BLOCK;
    while (block_size as usize) * SIGNATURE_LEN < data.len() {
        block_size *= 2;
    }
    loop {
        let (sig1, sig2) = digest_at(data, block_size);
        if block_size > MIN_BLOCK && sig1.len() < SIGNATURE_LEN / 2 {
            block_size /= 2;
            continue;
        }
        return FuzzyDigest { block_size, sig1, sig2 };
    }
}

/// Collapses runs of more than three identical symbols; long runs carry
/// little information and dominate edit distance otherwise.
fn eliminate_sequences(s: &str) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::with_capacity(s.len());
    for &b in s.as_bytes() {
        let n = out.len();
        if n >= 3 && out[n - 1] == b && out[n - 2] == b && out[n - 3] == b {
            continue;
        }
        out.push(b);
    }
    out
}

fn has_common_substring(a: &[u8], b: &[u8]) -> bool {
    if a.len() < ROLLING_WINDOW || b.len() < ROLLING_WINDOW {
        return false;
    }
    a.windows(ROLLING_WINDOW)
        .any(|wa| b.windows(ROLLING_WINDOW).any(|wb| wa == wb))
}

/// Edit distance with unit insert/delete and substitution cost 2.
fn weighted_edit_distance(a: &[u8], b: &[u8]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + if ca == cb { 0 } else { 2 };
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn signature_similarity(a: &str, b: &str, block_size: u32) -> f64 {
    let a = eliminate_sequences(a);
    let b = eliminate_sequences(b);
    if !has_common_substring(&a, &b) {
        return 0.0;
    }
    let total = (a.len() + b.len()) as f64;
    let similarity = 1.0 - weighted_edit_distance(&a, &b) as f64 / total;
    // short digests at small block sizes would otherwise overstate matches
    let uncapped_from = (99 + ROLLING_WINDOW as u32) / ROLLING_WINDOW as u32 * MIN_BLOCK;
    if block_size >= uncapped_from {
        return similarity;
    }
    let cap = f64::from(block_size / MIN_BLOCK) * a.len().min(b.len()) as f64 / 100.0;
    similarity.min(cap)
}

/// Similarity in `[0, 1]`; 1 means identical digests.
pub fn fuzzy_similarity(a: &FuzzyDigest, b: &FuzzyDigest) -> f64 {
    if a == b {
        return 1.0;
    }
    let (ba, bb) = (a.block_size, b.block_size);
    let s = if ba == bb {
        signature_similarity(&a.sig1, &b.sig1, ba).max(signature_similarity(&a.sig2, &b.sig2, ba * 2))
    } else if ba == bb * 2 {
        signature_similarity(&a.sig1, &b.sig2, ba)
    } else if bb == ba * 2 {
        signature_similarity(&a.sig2, &b.sig1, bb)
    } else {
        0.0
    };
    s.clamp(0.0, 1.0)
}

/// `1 - similarity`: 0 for identical digests, 1 for unrelated or
/// incomparable ones.
pub fn fuzzy_difference(a: &FuzzyDigest, b: &FuzzyDigest) -> f64 {
    1.0 - fuzzy_similarity(a, b)
}
