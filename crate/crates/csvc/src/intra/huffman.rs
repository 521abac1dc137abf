//! Canonical prefix codes for the entropy layer.
//!
//! The code-length specs are the classic baseline-JPEG luminance tables,
//! frozen here as constants so bitstreams stay stable across versions. Codes
//! are derived canonically from (counts-per-length, symbol list).

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::intra::bits::{BitReader, BitWriter};

/// Count of codes per code length 1..=16, then the symbols in code order.
struct CodeSpec {
    counts: [u8; 16],
    symbols: &'static [u8],
}

const DC_SPEC: CodeSpec = CodeSpec {
    counts: [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
    symbols: &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
};

const AC_SPEC: CodeSpec = CodeSpec {
    counts: [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125],
    symbols: &[
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
        0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52,
        0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25,
        0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
        0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64,
        0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83,
        0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
        0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
        0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3,
        0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8,
        0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa,
    ],
};

/// Built table: per-symbol (code, length) for encoding plus per-length
/// ranges for canonical decoding.
pub struct CodeTable {
    enc: [(u16, u8); 256],
    /// For each length 1..=16: smallest code, largest code + 1, and the
    /// index of the first symbol of that length.
    min_code: [u32; 17],
    max_code: [u32; 17],
    val_ptr: [usize; 17],
    symbols: &'static [u8],
}

fn build(spec: &CodeSpec) -> CodeTable {
    let mut enc = [(0u16, 0u8); 256];
    let mut min_code = [0u32; 17];
    let mut max_code = [0u32; 17];
    let mut val_ptr = [0usize; 17];

    let mut code = 0u32;
    let mut idx = 0usize;
    for len in 1..=16usize {
        val_ptr[len] = idx;
        min_code[len] = code;
        for _ in 0..spec.counts[len - 1] {
            enc[spec.symbols[idx] as usize] = (code as u16, len as u8);
            code += 1;
            idx += 1;
        }
        max_code[len] = code;
        code <<= 1;
    }
    CodeTable {
        enc,
        min_code,
        max_code,
        val_ptr,
        symbols: spec.symbols,
    }
}

pub fn dc_table() -> &'static CodeTable {
    static T: OnceLock<CodeTable> = OnceLock::new();
    T.get_or_init(|| build(&DC_SPEC))
}

pub fn ac_table() -> &'static CodeTable {
    static T: OnceLock<CodeTable> = OnceLock::new();
    T.get_or_init(|| build(&AC_SPEC))
}

impl CodeTable {
    pub fn encode(&self, symbol: u8, w: &mut BitWriter) {
        let (code, len) = self.enc[symbol as usize];
        debug_assert!(len > 0, "symbol {symbol:#x} has no code");
        w.put(code as u32, len as u32);
    }

    pub fn decode(&self, r: &mut BitReader) -> Result<u8> {
        let mut code = 0u32;
        for len in 1..=16usize {
            code = (code << 1) | r.bit()?;
            if code < self.max_code[len] {
                let offset = (code - self.min_code[len]) as usize;
                return Ok(self.symbols[self.val_ptr[len] + offset]);
            }
        }
        Err(Error::CorruptIntra("invalid prefix code".into()))
    }
}

/// Magnitude category of `v`: the bit length of `|v|`.
pub fn category(v: i32) -> u32 {
    32 - v.unsigned_abs().leading_zeros()
}

/// Writes the variable-length amplitude bits for a nonzero value of the
/// given category (one's-complement convention for negatives).
pub fn put_amplitude(v: i32, cat: u32, w: &mut BitWriter) {
    let bits = if v >= 0 { v } else { v + (1 << cat) - 1 } as u32;
    w.put(bits, cat);
}

/// Reads back an amplitude of the given category.
pub fn take_amplitude(cat: u32, r: &mut BitReader) -> Result<i32> {
    if cat == 0 {
        return Ok(0);
    }
    let raw = r.take(cat)? as i32;
    if raw < (1 << (cat - 1)) {
        Ok(raw - (1 << cat) + 1)
    } else {
        Ok(raw)
    }
}
