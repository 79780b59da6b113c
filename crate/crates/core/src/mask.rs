//! Fixed-width bitset over hypothesis indices.

use std::fmt;

/// Set of hypothesis indices, stored as packed `u64` words.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct HypMask {
    words: Vec<u64>,
    len: usize,
}

pub(crate) fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

#[inline]
pub(crate) fn word_bit(words: &[u64], i: usize) -> bool {
    (words[i / 64] >> (i % 64)) & 1 == 1
}

impl HypMask {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut m = Self::new(len);
        for i in 0..len {
            m.insert(i);
        }
        m
    }

    pub fn from_words(words: &[u64], len: usize) -> Self {
        assert_eq!(words.len(), words_for(len), "word count does not match length");
        let mut m = Self {
            words: words.to_vec(),
            len,
        };
        m.clear_tail();
        m
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::new(len);
        for i in indices {
            m.insert(i);
        }
        m
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Number of addressable indices (not the number of set bits).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && word_bit(&self.words, i)
    }

    pub fn union_with(&mut self, other: &HypMask) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub(crate) fn union_words(&mut self, words: &[u64]) {
        for (a, b) in self.words.iter_mut().zip(words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &HypMask) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn intersects(&self, other: &HypMask) -> bool {
        self.intersects_words(&other.words)
    }

    pub(crate) fn intersects_words(&self, words: &[u64]) -> bool {
        self.words.iter().zip(words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset(&self, other: &HypMask) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn complement(&self) -> HypMask {
        let mut m = Self {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        m.clear_tail();
        m
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| word_bit(&self.words, i))
    }

    /// Grow to `len` indices, keeping the existing bits.
    pub fn resized(&self, len: usize) -> HypMask {
        let mut m = HypMask::new(len);
        for i in self.iter().filter(|&i| i < len) {
            m.insert(i);
        }
        m
    }

    /// Space-separated index list, e.g. `"3 17 42"`. Empty string for the empty set.
    pub fn to_index_string(&self) -> String {
        self.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse_index_string(len: usize, s: &str) -> Option<HypMask> {
        let mut m = HypMask::new(len);
        for tok in s.split_whitespace() {
            let i: usize = tok.parse().ok()?;
            if i >= len {
                return None;
            }
            m.insert(i);
        }
        Some(m)
    }
}

impl fmt::Debug for HypMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
