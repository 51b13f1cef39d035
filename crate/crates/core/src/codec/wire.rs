//! Byte format: `"SPNC"`, version byte, point count (u32 LE), n (u32 LE),
//! points as f64 LE row-major, bit length (u32 LE), bits MSB-first padded
//! with zeros to a byte boundary.

use std::path::Path;

use super::bits::BitString;
use super::spn::CompressedMessage;
use crate::error::{Result, SpnError};

pub const MAGIC: &[u8; 4] = b"SPNC";
pub const VERSION: u8 = 1;

fn u32_of(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| SpnError::Layout(format!("{what} {v} does not fit in 32 bits")))
}

impl CompressedMessage {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(17 + self.points.len() * self.n * 8 + self.bits.as_bytes().len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend(u32_of(self.points.len(), "point count")?);
        out.extend(u32_of(self.n, "dimension")?);
        for p in &self.points {
            if p.len() != self.n {
                return Err(SpnError::Layout("point of the wrong dimension".into()));
            }
            for v in p {
                out.extend(v.to_le_bytes());
            }
        }
        out.extend(u32_of(self.bits.len(), "bit length")?);
        out.extend_from_slice(self.bits.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(SpnError::Bitstream("missing SPNC magic".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(SpnError::Bitstream(format!("unsupported format version {version}")));
        }
        let count = r.u32()? as usize;
        let n = r.u32()? as usize;
        let mut points = Vec::with_capacity(count.min(bytes.len() / 8 + 1));
        for _ in 0..count {
            let mut p = Vec::with_capacity(n);
            for _ in 0..n {
                p.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
            }
            points.push(p);
        }
        let len = r.u32()? as usize;
        let payload = r.take(len.div_ceil(8))?.to_vec();
        if r.at != bytes.len() {
            return Err(SpnError::Bitstream(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(CompressedMessage { n, points, bits: BitString::from_bytes(payload, len)? })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            SpnError::Bitstream(format!("truncated message: need {len} bytes at offset {}", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CompressedMessage {
        let mut bits = BitString::new();
        bits.push_uint(0b10110, 5);
        CompressedMessage { n: 2, points: vec![vec![1.5, -0.25], vec![0.0, 3.0]], bits }
    }

    #[test]
    fn layout_is_pinned() {
        let bytes = sample().to_bytes().unwrap();
        let mut expect = b"SPNC\x01".to_vec();
        expect.extend([2, 0, 0, 0, 2, 0, 0, 0]);
        for v in [1.5f64, -0.25, 0.0, 3.0] {
            expect.extend(v.to_le_bytes());
        }
        expect.extend([5, 0, 0, 0, 0b1011_0000]);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn round_trip() {
        let m = sample();
        assert_eq!(CompressedMessage::from_bytes(&m.to_bytes().unwrap()).unwrap(), m);
        let empty = CompressedMessage { n: 1, points: vec![], bits: BitString::new() };
        assert_eq!(CompressedMessage::from_bytes(&empty.to_bytes().unwrap()).unwrap(), empty);
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes().unwrap();
        assert!(CompressedMessage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(CompressedMessage::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(CompressedMessage::from_bytes(&magic).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(CompressedMessage::from_bytes(&version).is_err());
    }
}
