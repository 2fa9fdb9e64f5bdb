//! Fixed-domain dense bit set used for lamp configurations and visited sets.
//!
//! Coverage tracking needs O(1) inserts over millions of steps, so the set
//! keeps its cardinality alongside the words.

/// A bit set over the domain `0..domain`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DenseBitSet {
    domain: usize,
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn location(bit: usize) -> (usize, u64) {
    (bit >> 6, 1u64 << (bit & 63))
}

impl DenseBitSet {
    pub fn new(domain: usize) -> Self {
        Self {
            domain,
            words: vec![0u64; domain.div_ceil(64)],
            len: 0,
        }
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    /// Number of set bits.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, bit: usize) -> bool {
        debug_assert!(bit < self.domain);
        let (i, mask) = location(bit);
        self.words[i] & mask != 0
    }

    /// Inserts `bit`; returns true if it was not already present.
    #[inline]
    pub fn insert(&mut self, bit: usize) -> bool {
        debug_assert!(bit < self.domain);
        let (i, mask) = location(bit);
        let word = &mut self.words[i];
        let fresh = *word & mask == 0;
        *word |= mask;
        self.len += fresh as usize;
        fresh
    }

    pub fn remove(&mut self, bit: usize) -> bool {
        debug_assert!(bit < self.domain);
        let (i, mask) = location(bit);
        let word = &mut self.words[i];
        let present = *word & mask != 0;
        *word &= !mask;
        self.len -= present as usize;
        present
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
        self.len = 0;
    }

    /// True if every bit of `other` is also set in `self`.
    pub fn is_superset(&self, other: &DenseBitSet) -> bool {
        debug_assert_eq!(self.domain, other.domain);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| b & !a == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some((wi << 6) | b)
                }
            })
        })
    }

    pub fn from_iter(domain: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new(domain);
        for b in bits {
            assert!(b < domain, "bit {b} outside domain {domain}");
            s.insert(b);
        }
        s
    }
}
