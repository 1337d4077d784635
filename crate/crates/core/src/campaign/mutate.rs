use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    BitFlip,
    ByteFlip,
    Splice,
}

/// Pads with random bytes or truncates to `width`.
pub fn fit_width<R: Rng + ?Sized>(seed: &Seed, width: usize, rng: &mut R) -> Vec<u8> {
    let mut bytes = seed.as_bytes().to_vec();
    bytes.truncate(width);
    while bytes.len() < width {
        bytes.push(rng.random());
    }
    bytes
}

pub fn random_seed<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Seed {
    let mut bytes = vec![0u8; width];
    rng.fill(bytes.as_mut_slice());
    Seed::new(bytes)
}

/// Flips between 1 and 8 distinct bits.
pub fn bit_flip<R: Rng + ?Sized>(bytes: &mut [u8], rng: &mut R) {
    let bits = bytes.len() * 8;
    if bits == 0 {
        return;
    }
    let n = rng.random_range(1..=8).min(bits);
    for bit in sample(rng, bits, n) {
        bytes[bit / 8] ^= 1 << (bit % 8);
    }
}

/// Overwrites between 1 and 4 distinct bytes with random values.
pub fn byte_flip<R: Rng + ?Sized>(bytes: &mut [u8], rng: &mut R) {
    if bytes.is_empty() {
        return;
    }
    let n = rng.random_range(1..=4).min(bytes.len());
    for i in sample(rng, bytes.len(), n) {
        bytes[i] = rng.random();
    }
}

/// Prefix of `primary` up to a random cut, then the rest of `donor`.
/// Both must already have the same length.
pub fn splice<R: Rng + ?Sized>(primary: &[u8], donor: &[u8], rng: &mut R) -> Vec<u8> {
    debug_assert_eq!(primary.len(), donor.len());
    let cut = rng.random_range(0..=primary.len());
    let mut out = primary[..cut].to_vec();
    out.extend_from_slice(&donor[cut..]);
    out
}

/// Applies one uniformly chosen operator. Splice is only a candidate when
/// a donor is supplied. The result is always `width` bytes.
pub fn mutate<R: Rng + ?Sized>(primary: &Seed, donor: Option<&Seed>, width: usize, rng: &mut R) -> (Seed, MutationOp) {
    let mut bytes = fit_width(primary, width, rng);
    let ops = if donor.is_some() { 3 } else { 2 };
    let op = match rng.random_range(0..ops) {
        0 => MutationOp::BitFlip,
        1 => MutationOp::ByteFlip,
        _ => MutationOp::Splice,
    };
    match op {
        MutationOp::BitFlip => bit_flip(&mut bytes, rng),
        MutationOp::ByteFlip => byte_flip(&mut bytes, rng),
        MutationOp::Splice => {
            let other = fit_width(donor.expect("splice needs a donor"), width, rng);
            bytes = splice(&bytes, &other, rng);
        }
    }
    (Seed::new(bytes), op)
}
