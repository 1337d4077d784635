//! Binary model: `.text` extraction, hashes, fuzzy digests and NCD.
//!
//! Two binaries are the same variant exactly when their `.text` bytes are
//! equal; everything outside `.text` only affects the whole-file
//! `content_hash`.

pub mod elf;
pub mod fuzzy;
pub mod ncd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use elf::{ElfError, ElfFile};
pub use fuzzy::{fuzzy_difference, fuzzy_digest, fuzzy_similarity, FuzzyDigest};
pub use ncd::{ncd, Compressor};

/// SHA-256 digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub fn of(data: &[u8]) -> Self {
        Self(Sha256::digest(data).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", &self.to_hex()[..12])
    }
}

impl FromStr for Hash256 {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Self(out))
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn function_hash(code: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    code.iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSection {
    pub bytes: Vec<u8>,
    pub vaddr: u64,
}

impl TextSection {
    pub fn size(&self) -> usize {
        self.bytes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub name: String,
    /// Offset from the start of `.text`.
    pub offset: u64,
    pub size: u64,
    pub hash: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDigest {
    pub content_hash: Hash256,
    pub text_hash: Hash256,
    pub fuzzy: FuzzyDigest,
    /// `None` when the binary carries no symbol table.
    pub functions: Option<Vec<FunctionRecord>>,
}

pub fn extract_text(elf: &[u8]) -> Result<TextSection, ElfError> {
    let file = ElfFile::parse(elf)?;
    text_of(&file)
}

fn text_of(file: &ElfFile<'_>) -> Result<TextSection, ElfError> {
    let (_, header, bytes) = file.text()?;
    Ok(TextSection {
        bytes: bytes.to_vec(),
        vaddr: header.addr,
    })
}

/// Function-typed symbols inside `.text`, sorted by offset.
pub fn extract_functions(elf: &[u8]) -> Result<Vec<FunctionRecord>, ElfError> {
    functions_of(&ElfFile::parse(elf)?)
}

fn functions_of(file: &ElfFile<'_>) -> Result<Vec<FunctionRecord>, ElfError> {
    let (text_index, header, text) = file.text()?;
    let mut out: Vec<FunctionRecord> = file
        .symbols()?
        .into_iter()
        .filter(|s| s.is_function() && s.size > 0 && usize::from(s.section) == text_index)
        .filter_map(|s| {
            let offset = file.section_relative(s.value, header)?;
            let end = offset.checked_add(s.size)?;
            let code = text.get(usize::try_from(offset).ok()?..usize::try_from(end).ok()?)?;
            Some(FunctionRecord {
                hash: function_hash(code),
                name: s.name,
                offset,
                size: s.size,
            })
        })
        .collect();
    out.sort_by(|a, b| a.offset.cmp(&b.offset).then_with(|| a.name.cmp(&b.name)));
    Ok(out)
}

/// Parses `elf` once and computes every digest field plus its `.text`.
pub fn digest_with_text(elf: &[u8]) -> Result<(BinaryDigest, TextSection), ElfError> {
    let file = ElfFile::parse(elf)?;
    let text = text_of(&file)?;
    let functions = match functions_of(&file) {
        Ok(f) => Some(f),
        Err(ElfError::NoSymbols) => None,
        Err(e) => return Err(e),
    };
    let digest = BinaryDigest {
        content_hash: Hash256::of(elf),
        text_hash: Hash256::of(&text.bytes),
        fuzzy: fuzzy_digest(&text.bytes),
        functions,
    };
    Ok((digest, text))
}

pub fn digest(elf: &[u8]) -> Result<BinaryDigest, ElfError> {
    digest_with_text(elf).map(|(d, _)| d)
}
