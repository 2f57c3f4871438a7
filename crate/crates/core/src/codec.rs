//! Little-endian framing shared by the binary file formats (corpus cache,
//! model checkpoints, score index).
//!
//! Every format starts with a five-byte magic that also carries the version
//! (`EMJC1`, `EMJT1`, `EMJV1`, `EMJI1`). Strings are a `u32` byte length
//! followed by UTF-8. Floats are IEEE-754 `f64`.

use crate::{Error, Result};

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 5]) -> Self {
        Encoder {
            buf: magic.to_vec(),
        }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn len32(&mut self, v: usize) -> &mut Self {
        self.u32(u32::try_from(v).expect("length exceeds u32 framing"))
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        for &v in values {
            self.f64(v);
        }
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.len32(s.len());
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    what: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks the magic and positions the decoder after it.
    pub fn new(what: &'static str, data: &'a [u8], magic: &[u8; 5]) -> Result<Self> {
        if data.len() < magic.len() || &data[..magic.len()] != magic {
            return Err(Error::decode(
                what,
                format!("missing magic {:?}", String::from_utf8_lossy(magic)),
            ));
        }
        Ok(Decoder {
            what,
            data,
            pos: magic.len(),
        })
    }

    /// A decoder over a nested length-prefixed block, without magic.
    pub fn sub(&mut self, len: usize) -> Result<Decoder<'a>> {
        let data = self.take(len)?;
        Ok(Decoder {
            what: self.what,
            data,
            pos: 0,
        })
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::decode(self.what, format!("{} (at byte {})", message.into(), self.pos))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(self.error(format!("truncated: need {n} bytes")));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn len32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads `count` finite floats, refusing before allocating if the input is
    /// too short to hold them.
    pub fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .filter(|&b| b <= self.remaining())
            .ok_or_else(|| self.error(format!("truncated: need {count} floats")))?;
        let raw = self.take(bytes)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(self.error("non-finite float"));
        }
        Ok(values)
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.len32()?;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.error("invalid UTF-8"))
    }

    /// Fails if unread bytes remain.
    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let mut enc = Encoder::new(b"TEST1");
        enc.u8(7).u32(42).u64(9).f64(1.5).str("héllo").f64s(&[1.0, -2.0]);
        let bytes = enc.finish();

        let mut dec = Decoder::new("test", &bytes, b"TEST1").unwrap();
        assert_eq!(dec.u8().unwrap(), 7);
        assert_eq!(dec.u32().unwrap(), 42);
        assert_eq!(dec.u64().unwrap(), 9);
        assert_eq!(dec.f64().unwrap(), 1.5);
        assert_eq!(dec.str().unwrap(), "héllo");
        assert_eq!(dec.f64s(2).unwrap(), vec![1.0, -2.0]);
        dec.finish().unwrap();

        assert!(Decoder::new("test", &bytes, b"NOPE1").is_err());
        let mut short = Decoder::new("test", &bytes[..8], b"TEST1").unwrap();
        short.u8().unwrap();
        assert!(short.u32().is_err());
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        let bytes = Encoder::new(b"TEST1").finish();
        let mut dec = Decoder::new("test", &bytes, b"TEST1").unwrap();
        assert!(dec.f64s(usize::MAX).is_err());
        assert!(dec.f64s(1 << 40).is_err());
    }
}
