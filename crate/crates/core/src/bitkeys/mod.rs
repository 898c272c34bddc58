//! Fixed-length bit sequences and the operations the matching pipeline needs
//! on them: Hamming distance, positionwise median, and the noisy-key record
//! that a data source transmits.
//!
//! Bit `i` of a sequence lives in bit `i % 64` of word `i / 64`. Bits past
//! the logical length are always zero, so word-level popcounts never see
//! stray padding.

mod hash;
mod wire;

pub use hash::{add_noise, hash_value, noise_stream, HashCode, NoiseConfig, NoiseStream};
pub use wire::{decode_key, encode_key, session_id, KeySetFile, KEYSET_MAGIC};

use std::fmt;

use crate::error::{invalid, Result};

/// A fixed-length sequence of bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    /// All-zero sequence of `len` bits.
    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(invalid("bit length must be at least 1"));
        }
        Ok(Bits {
            words: vec![0; len.div_ceil(64)],
            len,
        })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut out = Bits::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            out.set(i, b);
        }
        Ok(out)
    }

    /// Parses a string of `0`/`1` characters; character `i` becomes bit `i`.
    pub fn parse(s: &str) -> Result<Self> {
        let bools = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Bits::from_bools(&bools)
    }

    /// Builds a sequence from bytes packed low-order first: bit `i` is bit
    /// `i % 8` of byte `i / 8`. Exactly `ceil(len / 8)` bytes are required
    /// and unused high bits of the final byte must be zero.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        let mut out = Bits::zeros(len)?;
        if bytes.len() != len.div_ceil(8) {
            return Err(invalid(format!(
                "{len} bits need {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        for (j, &byte) in bytes.iter().enumerate() {
            out.words[j / 8] |= u64::from(byte) << (8 * (j % 8));
        }
        if out.clear_padding() {
            return Err(invalid("nonzero padding bits after the last key bit"));
        }
        Ok(out)
    }

    /// Packs the sequence into `ceil(len / 8)` bytes, low-order first.
    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len.div_ceil(8))
            .map(|j| (self.words[j / 8] >> (8 * (j % 8))) as u8)
            .collect()
    }

    pub(crate) fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(invalid("bit length must be at least 1"));
        }
        words.resize(len.div_ceil(64), 0);
        let mut out = Bits { words, len };
        out.clear_padding();
        Ok(out)
    }

    /// Zeroes bits past `len`; reports whether any were set.
    fn clear_padding(&mut self) -> bool {
        let rem = self.len % 64;
        if rem == 0 {
            return false;
        }
        let last = self.words.last_mut().expect("non-empty");
        let mask = (1u64 << rem) - 1;
        let dirty = *last & !mask != 0;
        *last &= mask;
        dirty
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bitwise complement over the logical length.
    pub fn complement(&self) -> Bits {
        let mut out = Bits {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        out.clear_padding();
        out
    }

    /// Hamming distance without the length check; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn distance_unchecked(&self, other: &Bits) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

impl AsRef<Bits> for Bits {
    fn as_ref(&self) -> &Bits {
        self
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

/// Identifies a noisy key: the source that produced it and its index there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyRef {
    pub source_id: u32,
    pub key_id: u64,
}

impl KeyRef {
    pub fn new(source_id: u32, key_id: u64) -> Self {
        KeyRef { source_id, key_id }
    }
}

impl fmt::Display for KeyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source_id, self.key_id)
    }
}

/// A hash code after bit-flip noise, tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NoisyKey {
    pub bits: Bits,
    pub source_id: u32,
    pub key_id: u64,
}

impl NoisyKey {
    pub fn new(bits: Bits, source_id: u32, key_id: u64) -> Self {
        NoisyKey {
            bits,
            source_id,
            key_id,
        }
    }

    pub fn key_ref(&self) -> KeyRef {
        KeyRef::new(self.source_id, self.key_id)
    }
}

impl AsRef<Bits> for NoisyKey {
    fn as_ref(&self) -> &Bits {
        &self.bits
    }
}

/// Number of positions at which `x` and `y` differ.
pub fn hamming(x: &Bits, y: &Bits) -> Result<u32> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "hamming distance of sequences with lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.distance_unchecked(y))
}

/// Positionwise majority over `keys`. A position where the ones and zeros
/// are exactly tied takes the bit of `reference`.
///
/// With the true hash code as `reference` this is the adversary-favoring
/// guess used to score revelation: every tie is resolved correctly.
pub fn median_key<K: AsRef<Bits>>(keys: &[K], reference: &Bits) -> Result<Bits> {
    if keys.is_empty() {
        return Err(invalid("median of an empty key set"));
    }
    let n = reference.len();
    if let Some(bad) = keys.iter().find(|k| k.as_ref().len() != n) {
        return Err(invalid(format!(
            "median over keys of length {} with reference of length {n}",
            bad.as_ref().len()
        )));
    }
    let z = keys.len();
    let mut ones = vec![0usize; n];
    for key in keys {
        for (i, count) in ones.iter_mut().enumerate() {
            *count += usize::from(key.as_ref().get(i));
        }
    }
    let mut out = Bits::zeros(n)?;
    for (i, &count) in ones.iter().enumerate() {
        let bit = match (2 * count).cmp(&z) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => reference.get(i),
        };
        out.set(i, bit);
    }
    Ok(out)
}
