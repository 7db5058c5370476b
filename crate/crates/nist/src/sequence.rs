use crate::error::{Error, Result};

/// Packed bit sequence, bit `i` stored at bit `i % 64` of word `i / 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSequence {
    words: Vec<u64>,
    len: usize,
}

impl BitSequence {
    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { words, len }
    }

    /// Parse `0`/`1` characters; ASCII whitespace is skipped.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(text.len());
        for c in text.chars().filter(|c| !c.is_ascii_whitespace()) {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => return Err(Error::InvalidArgument(format!("unexpected character {other:?} in bit string"))),
            }
        }
        Ok(Self::from_bits(bits))
    }

    /// Unpack bytes most-significant bit first, keeping the first `len` bits.
    pub fn from_bytes_msb_first(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::InvalidArgument(format!("{} bytes hold fewer than {len} bits", bytes.len())));
        }
        Ok(Self::from_bits((0..len).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1)))
    }

    /// Words in the same LSB-first layout as [`BitSequence::words`]; bits past
    /// `len` must be zero.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::InvalidArgument(format!(
                "{} words cannot hold exactly {len} bits",
                words.len()
            )));
        }
        if !len.is_multiple_of(64) && words.last().is_some_and(|w| w >> (len % 64) != 0) {
            return Err(Error::InvalidArgument("bits set past the sequence length".into()));
        }
        Ok(Self { words, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = bool> + ExactSizeIterator + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// Ones in `[start, start + len)`.
    pub fn count_ones_in(&self, start: usize, len: usize) -> usize {
        (start..start + len).filter(|&i| self.get(i)).count()
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self::from_bits((start..start + len).map(|i| self.get(i)))
    }

    pub fn concat<'a, I: IntoIterator<Item = &'a BitSequence>>(parts: I) -> Self {
        Self::from_bits(parts.into_iter().flat_map(|p| p.iter()))
    }

    pub fn to_ascii(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }
}
