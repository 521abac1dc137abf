//! MSB-first bit I/O for the entropy coder.

use crate::error::{Error, Result};

pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    /// Writes the low `count` bits of `value`, most significant first.
    pub fn put(&mut self, value: u32, count: u32) {
        debug_assert!(count <= 24);
        self.acc = (self.acc << count) | (value & ((1u32 << count) - 1));
        self.nbits += count;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
    }

    /// Pads the final partial byte with ones and returns the buffer.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1 << pad) - 1, pad);
        }
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            acc: 0,
            nbits: 0,
        }
    }

    /// Reads one bit; running past the end is a corruption error.
    pub fn bit(&mut self) -> Result<u32> {
        if self.nbits == 0 {
            if self.pos >= self.bytes.len() {
                return Err(Error::CorruptIntra("bitstream exhausted".into()));
            }
            self.acc = self.bytes[self.pos] as u32;
            self.pos += 1;
            self.nbits = 8;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    /// Reads `count` bits, most significant first.
    pub fn take(&mut self, count: u32) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..count {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }
}
