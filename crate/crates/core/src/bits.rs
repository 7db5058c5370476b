//! Packed bit vectors. Bit `i` lives in word `i / 64` at bit `i % 64`
//! (LSB first); bits past `len` in the final word are always zero.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const WORD_BITS: usize = 64;

#[inline]
pub fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            words: vec![u64::MAX; words_for(len)],
            len,
        };
        v.clear_tail();
        v
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0usize;
        for bit in bits {
            if len.is_multiple_of(WORD_BITS) {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        Self { words, len }
    }

    /// Parse a string of `0`/`1` characters. Whitespace is ignored.
    pub fn from_ascii(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                c if c.is_whitespace() => {}
                other => return Err(invalid(format!("unexpected character {other:?} in bit string"))),
            }
        }
        Ok(Self::from_bools(bits))
    }

    /// Build from raw words; bits beyond `len` must be zero.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(invalid(format!("{} words cannot hold exactly {len} bits", words.len())));
        }
        let v = Self { words, len };
        let mut check = v.clone();
        check.clear_tail();
        if check != v {
            return Err(invalid("non-zero padding bits"));
        }
        Ok(v)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn not(&self) -> Self {
        let mut v = Self {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        v.clear_tail();
        v
    }

    /// Number of differing positions. Panics if lengths differ.
    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "hamming distance on unequal lengths");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Number of differing positions among those kept by `mask`.
    pub fn hamming_masked(&self, other: &Self, mask: &PositionMask) -> usize {
        assert_eq!(self.len, other.len, "hamming distance on unequal lengths");
        assert_eq!(self.len, mask.len(), "mask length differs from signature length");
        self.words
            .iter()
            .zip(&other.words)
            .zip(mask.bits().words())
            .map(|((a, b), m)| ((a ^ b) & m).count_ones() as usize)
            .sum()
    }

    pub fn to_ascii(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

/// Keep-mask over signature positions (`true` = position kept).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionMask {
    bits: BitVector,
}

impl PositionMask {
    pub fn full(n: usize) -> Self {
        Self { bits: BitVector::ones(n) }
    }

    pub fn from_bits(bits: BitVector) -> Self {
        Self { bits }
    }

    pub fn from_kept<I: IntoIterator<Item = usize>>(n: usize, kept: I) -> Result<Self> {
        let mut bits = BitVector::zeros(n);
        for p in kept {
            if p >= n {
                return Err(invalid(format!("position {p} outside signature of length {n}")));
            }
            bits.set(p, true);
        }
        Ok(Self { bits })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn keeps(&self, position: usize) -> bool {
        self.bits.get(position)
    }

    /// Effective signature length under this mask.
    pub fn kept_count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn bits(&self) -> &BitVector {
        &self.bits
    }

    pub fn kept_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&p| self.keeps(p))
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(invalid("mask lengths differ"));
        }
        let words = self.bits.words().iter().zip(other.bits.words()).map(|(a, b)| a & b).collect();
        Ok(Self {
            bits: BitVector::from_words(words, self.len())?,
        })
    }

    pub(crate) fn require_non_empty(self) -> Result<Self> {
        if self.kept_count() == 0 {
            Err(Error::EmptySignature)
        } else {
            Ok(self)
        }
    }
}
