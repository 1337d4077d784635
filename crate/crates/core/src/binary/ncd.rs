//! Normalized compression distance over LZMA.

use std::io::Write;

use serde::{Deserialize, Serialize};
use xz2::stream::{LzmaOptions, Stream};
use xz2::write::XzEncoder;

/// Smallest dictionary handed to the encoder.
const MIN_DICT: u32 = 4096;

/// LZMA compressor pinned to one preset level.
///
/// The dictionary is sized to the input (never beyond the preset's own
/// dictionary), so output is identical to the full preset while keeping
/// per-call allocation proportional to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Compressor {
    level: u32,
}

impl Default for Compressor {
    fn default() -> Self {
        Self { level: 9 }
    }
}

impl Compressor {
    /// `level` is an LZMA preset in `0..=9`.
    pub fn new(level: u32) -> Self {
        assert!(level <= 9, "LZMA preset must be 0..=9");
        Self { level }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Length of the `.lzma` stream produced for `data`.
    pub fn compressed_len(&self, data: &[u8]) -> usize {
        self.compressed_len_of(&[data])
    }

    fn compressed_len_of(&self, parts: &[&[u8]]) -> usize {
        let total: usize = parts.iter().map(|p| p.len()).sum();
        let mut opts = LzmaOptions::new_preset(self.level).expect("valid preset");
        let preset_dict = preset_dict_size(self.level);
        let wanted = u32::try_from(total)
            .unwrap_or(u32::MAX)
            .checked_next_power_of_two()
            .unwrap_or(preset_dict)
            .clamp(MIN_DICT, preset_dict.max(MIN_DICT));
        opts.dict_size(wanted);
        let stream = Stream::new_lzma_encoder(&opts).expect("lzma encoder");
        let mut enc = XzEncoder::new_stream(CountingSink::default(), stream);
        for part in parts {
            enc.write_all(part).expect("in-memory write");
        }
        enc.finish().expect("in-memory finish").0
    }

    /// NCD with the compressed sizes of `x` and `y` already known.
    pub fn ncd_with(&self, x: &[u8], cx: usize, y: &[u8], cy: usize) -> f64 {
        if x.is_empty() && y.is_empty() {
            return 0.0;
        }
        let cxy = self.compressed_len_of(&[x, y]) as f64;
        let (lo, hi) = if cx <= cy { (cx, cy) } else { (cy, cx) };
        ((cxy - lo as f64) / hi as f64).clamp(0.0, 1.0)
    }

    /// `(C(x‖y) − min(C(x), C(y))) / max(C(x), C(y))`, clamped to `[0, 1]`.
    pub fn ncd(&self, x: &[u8], y: &[u8]) -> f64 {
        if x.is_empty() && y.is_empty() {
            return 0.0;
        }
        self.ncd_with(x, self.compressed_len(x), y, self.compressed_len(y))
    }
}

fn preset_dict_size(level: u32) -> u32 {
    // liblzma preset dictionary sizes
    const SIZES: [u32; 10] = [
        1 << 18,
        1 << 20,
        1 << 21,
        1 << 22,
        1 << 22,
        1 << 23,
        1 << 23,
        1 << 24,
        1 << 25,
        1 << 26,
    ];
    SIZES[level as usize]
}

#[derive(Default)]
struct CountingSink(usize);

impl Write for CountingSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0 += buf.len();
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// NCD under the default compressor.
pub fn ncd(x: &[u8], y: &[u8]) -> f64 {
    Compressor::default().ncd(x, y)
}
