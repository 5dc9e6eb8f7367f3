//! Little-endian binary encoding shared by every on-disk cache format.

use crate::error::{Error, Result};

/// Append-only little-endian encoder.
#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut enc = Self { buf: Vec::new() };
        enc.buf.extend_from_slice(magic);
        enc.u32(version);
        enc
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// Length-prefixed UTF-8 string.
    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over an encoded buffer; every read is bounds-checked.
#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks the magic tag and version, returning a decoder positioned after them.
    pub fn new(buf: &'a [u8], magic: &[u8; 8], version: u32) -> Result<Self> {
        let mut dec = Self { buf, pos: 0 };
        let tag = dec.take(8)?;
        if tag != magic {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(tag)
            )));
        }
        let found = dec.u32()?;
        if found != version {
            return Err(Error::Format(format!(
                "unsupported version {found} (expected {version})"
            )));
        }
        Ok(dec)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size overflow".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::Format("unexpected end of data".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }

    /// Fails unless the whole buffer has been consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_and_mislabeled_buffers_are_rejected() {
        let mut enc = Encoder::new(b"TESTTEST", 3);
        enc.f64(1.5);
        enc.str("hi");
        let buf = enc.finish();

        let mut dec = Decoder::new(&buf, b"TESTTEST", 3).unwrap();
        assert_eq!(dec.f64().unwrap(), 1.5);
        assert_eq!(dec.str().unwrap(), "hi");
        dec.finish().unwrap();

        assert!(Decoder::new(&buf, b"OTHEROTH", 3).is_err());
        assert!(Decoder::new(&buf, b"TESTTEST", 4).is_err());
        let mut dec = Decoder::new(&buf[..14], b"TESTTEST", 3).unwrap();
        assert!(dec.f64().is_err());
    }
}
