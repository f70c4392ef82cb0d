//! Little-endian byte codec for the two protocol links.
//!
//! Frame: `k: u64` header, then the body. The S→C body starts with
//! `σ: u32`. Real ciphertexts are IEEE-754 doubles, quantized words are
//! packed MSB-first per vector and padded to a byte, and Paillier
//! ciphertexts are `u32` length plus minimal big-endian bytes.

use num_bigint::BigUint;

use super::ProtocolError;
use crate::paillier::HeCiphertext;
use crate::qe::QuantizedWord;

const HEADER_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Real(Vec<f64>),
    Words(Vec<QuantizedWord>),
    He(Vec<HeCiphertext>),
}

impl Body {
    pub fn len(&self) -> usize {
        match self {
            Body::Real(v) => v.len(),
            Body::Words(v) => v.len(),
            Body::He(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn reals(&self) -> Option<&[f64]> {
        match self {
            Body::Real(v) => Some(v),
            _ => None,
        }
    }
}

/// `S → C: (σ, x̃, b̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsgSensorToCloud {
    pub k: u64,
    pub sigma: u32,
    pub x: Body,
    pub b: Body,
}

/// `C → A: (t̃, b̃)`. For Paillier `t` already includes the offset and `b`
/// is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MsgCloudToActuator {
    pub k: u64,
    pub t: Body,
    pub b: Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyKind {
    Real,
    Words { w: u32 },
    He { key_id: u64 },
}

/// Everything a receiver needs to parse frames: body kind and vector lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireFormat {
    pub kind: BodyKind,
    pub x_len: usize,
    pub b_len: usize,
    pub t_len: usize,
    pub fwd_len: usize,
}

/// An encoded frame and the number of payload bits it carries (body bits
/// minus padding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub payload_bits: u64,
}

struct Writer {
    buf: Vec<u8>,
    padding: u64,
}

impl Writer {
    fn new(k: u64) -> Self {
        Self { buf: k.to_le_bytes().to_vec(), padding: 0 }
    }

    fn body(&mut self, body: &Body) {
        match body {
            Body::Real(v) => v.iter().for_each(|x| self.buf.extend_from_slice(&x.to_le_bytes())),
            Body::He(v) => {
                for c in v {
                    let bytes = c.value.to_bytes_be();
                    self.buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
                    self.buf.extend_from_slice(&bytes);
                }
            }
            Body::Words(v) => {
                let mut acc = 0u8;
                let mut used = 0u32;
                for word in v {
                    for j in 0..word.w {
                        acc = (acc << 1) | word.bit(j) as u8;
                        used += 1;
                        if used == 8 {
                            self.buf.push(acc);
                            acc = 0;
                            used = 0;
                        }
                    }
                }
                if used > 0 {
                    self.buf.push(acc << (8 - used));
                    self.padding += (8 - used) as u64;
                }
            }
        }
    }

    fn finish(self) -> Encoded {
        let bits = ((self.buf.len() - HEADER_BYTES) * 8) as u64 - self.padding;
        Encoded { bytes: self.buf, payload_bits: bits }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], ProtocolError> {
        if self.pos + len > self.buf.len() {
            return Err(ProtocolError::Wire(format!("frame truncated at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn body(&mut self, kind: BodyKind, len: usize) -> Result<Body, ProtocolError> {
        match kind {
            BodyKind::Real => {
                let mut v = Vec::with_capacity(len);
                for _ in 0..len {
                    v.push(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")));
                }
                Ok(Body::Real(v))
            }
            BodyKind::He { key_id } => {
                let mut v = Vec::with_capacity(len);
                for _ in 0..len {
                    let n = self.u32()? as usize;
                    v.push(HeCiphertext { value: BigUint::from_bytes_be(self.take(n)?), key_id });
                }
                Ok(Body::He(v))
            }
            BodyKind::Words { w } => {
                let bytes = self.take((len * w as usize).div_ceil(8))?;
                let bit = |i: usize| (bytes[i / 8] >> (7 - i % 8)) & 1;
                let words = (0..len)
                    .map(|j| {
                        let code = (0..w as usize).fold(0u64, |acc, t| (acc << 1) | bit(j * w as usize + t) as u64);
                        QuantizedWord { code, w }
                    })
                    .collect();
                Ok(Body::Words(words))
            }
        }
    }

    fn done(&self) -> Result<(), ProtocolError> {
        if self.pos != self.buf.len() {
            return Err(ProtocolError::Wire(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

impl WireFormat {
    pub fn encode_s2c(&self, msg: &MsgSensorToCloud) -> Encoded {
        let mut w = Writer::new(msg.k);
        w.buf.extend_from_slice(&msg.sigma.to_le_bytes());
        w.body(&msg.x);
        w.body(&msg.b);
        w.finish()
    }

    pub fn decode_s2c(&self, bytes: &[u8]) -> Result<MsgSensorToCloud, ProtocolError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let k = r.u64()?;
        let sigma = r.u32()?;
        let x = r.body(self.kind, self.x_len)?;
        let b = r.body(self.kind, self.b_len)?;
        r.done()?;
        Ok(MsgSensorToCloud { k, sigma, x, b })
    }

    pub fn encode_c2a(&self, msg: &MsgCloudToActuator) -> Encoded {
        let mut w = Writer::new(msg.k);
        w.body(&msg.t);
        w.body(&msg.b);
        w.finish()
    }

    pub fn decode_c2a(&self, bytes: &[u8]) -> Result<MsgCloudToActuator, ProtocolError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let k = r.u64()?;
        let t = r.body(self.kind, self.t_len)?;
        let b = r.body(self.kind, self.fwd_len)?;
        r.done()?;
        Ok(MsgCloudToActuator { k, t, b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(kind: BodyKind) -> WireFormat {
        WireFormat { kind, x_len: 2, b_len: 1, t_len: 2, fwd_len: 1 }
    }

    #[test]
    fn real_frames_roundtrip_and_count_bits() {
        let f = fmt(BodyKind::Real);
        let msg = MsgSensorToCloud { k: 9, sigma: 4, x: Body::Real(vec![1.5, f64::MIN_POSITIVE]), b: Body::Real(vec![3.0]) };
        let enc = f.encode_s2c(&msg);
        assert_eq!(enc.payload_bits, 32 + 3 * 64);
        assert_eq!(&enc.bytes[..8], &9u64.to_le_bytes());
        assert_eq!(&enc.bytes[8..12], &4u32.to_le_bytes());
        assert_eq!(f.decode_s2c(&enc.bytes).unwrap(), msg);

        let back = MsgCloudToActuator { k: 9, t: Body::Real(vec![0.25, 8.0]), b: Body::Real(vec![3.0]) };
        let enc = f.encode_c2a(&back);
        assert_eq!(enc.payload_bits, 3 * 64);
        assert_eq!(f.decode_c2a(&enc.bytes).unwrap(), back);
        assert!(f.decode_c2a(&enc.bytes[..enc.bytes.len() - 1]).is_err());
    }

    #[test]
    fn words_pack_msb_first() {
        let f = fmt(BodyKind::Words { w: 5 });
        let words = |codes: &[u64]| Body::Words(codes.iter().map(|&code| QuantizedWord { code, w: 5 }).collect());
        let msg = MsgSensorToCloud { k: 1, sigma: 0, x: words(&[0b10110, 0b00001]), b: words(&[0b11111]) };
        let enc = f.encode_s2c(&msg);
        assert_eq!(enc.payload_bits, 32 + 15);
        // 10110 00001 → 1011 0000 | 01 (pad 000000)
        assert_eq!(enc.bytes[12], 0b1011_0000);
        assert_eq!(enc.bytes[13], 0b0100_0000);
        assert_eq!(enc.bytes[14], 0b1111_1000);
        assert_eq!(f.decode_s2c(&enc.bytes).unwrap(), msg);
    }

    #[test]
    fn he_frames_are_length_prefixed() {
        let f = fmt(BodyKind::He { key_id: 77 });
        let ct = |v: u64| HeCiphertext { value: BigUint::from(v), key_id: 77 };
        let msg = MsgCloudToActuator { k: 3, t: Body::He(vec![ct(0x01_0203), ct(5)]), b: Body::He(vec![ct(0xffff)]) };
        let enc = f.encode_c2a(&msg);
        assert_eq!(enc.payload_bits, (4 + 3 + 4 + 1 + 4 + 2) * 8);
        assert_eq!(&enc.bytes[8..15], &[3, 0, 0, 0, 1, 2, 3]);
        assert_eq!(f.decode_c2a(&enc.bytes).unwrap(), msg);
    }
}
