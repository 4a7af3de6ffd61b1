//! Packed bit streams.
//!
//! Gate outcomes and extractor outputs are plain bit sequences. Bits are
//! packed MSB-first (stream bit 0 is the most significant bit of byte 0),
//! which makes the raw export format for external test batteries a memcpy
//! of the backing buffer. Padding bits in a final partial byte are always
//! zero.

use std::fmt;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// A packed sequence of bits with an explicit length.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    len: usize,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { bytes: Vec::with_capacity(bits.div_ceil(8)), len: 0 }
    }

    /// Wraps a byte buffer as a stream of `bits` bits. The buffer must be
    /// exactly `ceil(bits / 8)` bytes and any padding bits must be zero.
    pub fn from_bytes(bytes: Vec<u8>, bits: usize) -> Result<Self> {
        if bytes.len() != bits.div_ceil(8) {
            return Err(Error::LengthMismatch { bytes: bytes.len(), bits });
        }
        if bits % 8 != 0 {
            let mask = 0xffu8 >> (bits % 8);
            if bytes.last().copied().unwrap_or(0) & mask != 0 {
                return Err(Error::NonZeroPadding);
            }
        }
        Ok(Self { bytes, len: bits })
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "bit strings may only contain 0 and 1, found {other:?}"
                ))),
            })
            .collect()
    }

    /// `len` i.i.d. fair bits drawn from `rng`.
    pub fn random<R: RngCore>(len: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let mut stream = Self { bytes, len };
        stream.clear_padding();
        stream
    }

    /// `len` i.i.d. bits with `P(1) = p_one`. Panics unless `p_one` is in
    /// `[0, 1]`.
    pub fn random_biased<R: Rng>(len: usize, p_one: f64, rng: &mut R) -> Self {
        assert!((0.0..=1.0).contains(&p_one), "p_one must lie in [0, 1]");
        let mut stream = Self::with_capacity(len);
        for _ in 0..len {
            stream.push(rng.random_bool(p_one));
        }
        stream
    }

    pub fn push(&mut self, bit: bool) {
        let offset = self.len % 8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("just pushed") |= 0x80 >> offset;
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit at `index`; panics when out of range.
    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.len, "bit index {index} out of range ({})", self.len);
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        (index < self.len).then(|| self.bit(index))
    }

    pub fn count_ones(&self) -> u64 {
        // Padding is zero, so whole-byte popcounts are exact.
        self.bytes.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    pub fn count_zeros(&self) -> u64 {
        self.len as u64 - self.count_ones()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    /// Backing bytes, MSB-first, padding bits zero.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// The stream as big-endian 64-bit words (final word zero-padded),
    /// the layout the correlation kernels work on.
    pub fn to_words(&self) -> Vec<u64> {
        self.bytes
            .chunks(8)
            .map(|chunk| {
                let mut w = [0u8; 8];
                w[..chunk.len()].copy_from_slice(chunk);
                u64::from_be_bytes(w)
            })
            .collect()
    }

    /// Shortens the stream to `bits`, zeroing vacated padding.
    pub fn truncate(&mut self, bits: usize) {
        if bits >= self.len {
            return;
        }
        self.len = bits;
        self.bytes.truncate(bits.div_ceil(8));
        self.clear_padding();
    }

    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    fn clear_padding(&mut self) {
        if self.len % 8 != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xff << (8 - self.len % 8);
            }
        }
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut stream = Self::new();
        for bit in iter {
            stream.push(bit);
        }
        stream
    }
}

impl Extend<bool> for BitStream {
    fn extend<I: IntoIterator<Item = bool>>(&mut self, iter: I) {
        for bit in iter {
            self.push(bit);
        }
    }
}

impl fmt::Debug for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "BitStream({})", self.to_bit_string())
        } else {
            write!(f, "BitStream(len={}, ones={})", self.len, self.count_ones())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    #[test]
    fn push_packs_msb_first() {
        let s = BitStream::from_bit_str("10000000").unwrap();
        assert_eq!(s.as_bytes(), &[0x80]);
        let s = BitStream::from_bit_str("10110010").unwrap();
        assert_eq!(s.as_bytes(), &[0xb2]);
    }

    #[test]
    fn partial_byte_pads_with_zeros() {
        let s = BitStream::from_bit_str("111").unwrap();
        assert_eq!(s.as_bytes(), &[0xe0]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.count_ones(), 3);
    }

    #[test]
    fn from_bytes_validates() {
        assert!(BitStream::from_bytes(vec![0x80], 8).is_ok());
        assert_eq!(
            BitStream::from_bytes(vec![0x81], 4),
            Err(Error::NonZeroPadding)
        );
        assert_eq!(
            BitStream::from_bytes(vec![0x80, 0x00], 8),
            Err(Error::LengthMismatch { bytes: 2, bits: 8 })
        );
    }

    #[test]
    fn roundtrip_via_bytes() {
        let mut rng = stream_rng(11, 0);
        let s = BitStream::random(1003, &mut rng);
        let back = BitStream::from_bytes(s.as_bytes().to_vec(), s.len()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn truncate_clears_padding() {
        let mut s = BitStream::from_bit_str("11111111").unwrap();
        s.truncate(3);
        assert_eq!(s.len(), 3);
        assert_eq!(s.as_bytes(), &[0xe0]);
        assert_eq!(s.count_ones(), 3);
    }

    #[test]
    fn words_are_big_endian() {
        let mut s = BitStream::new();
        s.extend(std::iter::repeat(false).take(63));
        s.push(true);
        s.push(true);
        let words = s.to_words();
        assert_eq!(words, vec![1, 0x8000_0000_0000_0000]);
    }

    #[test]
    fn random_is_seed_deterministic() {
        let a = BitStream::random(777, &mut stream_rng(5, 1));
        let b = BitStream::random(777, &mut stream_rng(5, 1));
        assert_eq!(a, b);
    }
}
