use std::fmt;

use crate::error::{Result, SpnError};

/// An append-only bit string, most significant bit first within each byte.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({} bits: ", self.len)?;
        for i in 0..self.len.min(64) {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        if self.len > 64 {
            f.write_str("…")?;
        }
        f.write_str(")")
    }
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        BitString { bytes: vec![0; len.div_ceil(8)], len }
    }

    /// Takes `len` bits from `bytes`; trailing padding must be zero.
    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(SpnError::Bitstream(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let s = BitString { bytes, len };
        if !len.is_multiple_of(8) && s.bytes[len / 8] & (0xFF >> (len % 8)) != 0 {
            return Err(SpnError::Bitstream("non-zero padding bits".into()));
        }
        Ok(s)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range");
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range");
        self.bytes[i / 8] ^= 0x80 >> (i % 8);
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[self.len / 8] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_uint(&mut self, value: u64, width: u32) {
        assert!(width <= 64 && (width == 64 || value >> width == 0), "{value} does not fit in {width} bits");
        for b in (0..width).rev() {
            self.push((value >> b) & 1 == 1);
        }
    }

    pub fn extend(&mut self, other: &BitString) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, at: 0 }
    }
}

pub struct BitReader<'a> {
    bits: &'a BitString,
    at: usize,
}

impl BitReader<'_> {
    pub fn read_uint(&mut self, width: u32) -> Result<u64> {
        if self.at + width as usize > self.bits.len {
            return Err(SpnError::Bitstream(format!(
                "truncated payload: need {width} bits at offset {}, have {}",
                self.at, self.bits.len
            )));
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.bits.get(self.at) as u64;
            self.at += 1;
        }
        Ok(v)
    }

    pub fn position(&self) -> usize {
        self.at
    }

    pub fn remaining(&self) -> usize {
        self.bits.len - self.at
    }
}

/// Bits needed to index `levels + 1` grid values.
pub fn bit_width(levels: u64) -> u32 {
    64 - levels.leading_zeros()
}
