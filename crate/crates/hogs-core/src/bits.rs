//! Packed bit vectors and bit matrices.
//!
//! Adjacency rows and perturbed feature vectors are bit vectors with n up to
//! several thousand; packing 64 bits per word keeps a full collection round
//! at a few megabytes and turns pairwise dot products into AND+popcount over
//! a couple dozen words.

use crate::error::{HogsError, Result};

const WORD_BITS: usize = 64;

/// A fixed-length bit vector packed into `u64` words, LSB-first.
///
/// Invariant: bits at positions >= `len` in the last word are always zero,
/// so popcount-based operations never see garbage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBits {
    len: usize,
    words: Vec<u64>,
}

impl PackedBits {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0u64; len.div_ceil(WORD_BITS)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Dot product of two bit vectors: popcount of the bitwise AND.
    pub fn and_popcount(&self, other: &Self) -> u32 {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Serialize to `ceil(len/8)` bytes, LSB-first within each byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_bytes = self.len.div_ceil(8);
        let mut out = vec![0u8; n_bytes];
        for (i, byte) in out.iter_mut().enumerate() {
            let word = self.words[i / 8];
            *byte = (word >> ((i % 8) * 8)) as u8;
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes). Trailing pad bits must be zero.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        let n_bytes = len.div_ceil(8);
        if bytes.len() != n_bytes {
            return Err(HogsError::Dimension {
                what: "packed bit payload",
                expected: n_bytes,
                got: bytes.len(),
            });
        }
        let mut out = Self::zeros(len);
        for (i, &byte) in bytes.iter().enumerate() {
            out.words[i / 8] |= (byte as u64) << ((i % 8) * 8);
        }
        if len % WORD_BITS != 0 || len % 8 != 0 {
            let tail_mask = if len % WORD_BITS == 0 {
                u64::MAX
            } else {
                (1u64 << (len % WORD_BITS)) - 1
            };
            if let Some(last) = out.words.last() {
                if last & !tail_mask != 0 {
                    return Err(HogsError::Protocol(
                        "nonzero padding bits in packed vector".into(),
                    ));
                }
            }
        }
        Ok(out)
    }
}

/// A dense matrix of bits with row-major packed storage.
///
/// Rows are contiguous, so the Gram-style pair scan streams memory linearly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(WORD_BITS);
        Self {
            rows,
            cols,
            words_per_row,
            data: vec![0u64; rows * words_per_row],
        }
    }

    /// Pack a list of equal-length rows.
    pub fn from_rows(rows: &[PackedBits]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut out = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(HogsError::Dimension {
                    what: "bit matrix row",
                    expected: cols,
                    got: row.len(),
                });
            }
            out.data[i * out.words_per_row..(i + 1) * out.words_per_row]
                .copy_from_slice(row.words());
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        (self.row(r)[c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let idx = r * self.words_per_row + c / WORD_BITS;
        let mask = 1u64 << (c % WORD_BITS);
        if value {
            self.data[idx] |= mask;
        } else {
            self.data[idx] &= !mask;
        }
    }

    pub fn row_count_ones(&self, r: usize) -> u32 {
        self.row(r).iter().map(|w| w.count_ones()).sum()
    }

    /// Dot product between row `a` of `self` and row `b` of `other`.
    #[inline]
    pub fn row_dot(&self, a: usize, other: &BitMatrix, b: usize) -> u32 {
        debug_assert_eq!(self.cols, other.cols);
        self.row(a)
            .iter()
            .zip(other.row(b))
            .map(|(x, y)| (x & y).count_ones())
            .sum()
    }

    /// Fill `out[j]` with `dot(row i, row j)` for `j` in `lo..hi`.
    ///
    /// This is the inner kernel of the blocked Gram computation: the caller
    /// keeps row `i` hot while streaming a contiguous band of rows.
    pub fn gram_row_into(&self, i: usize, lo: usize, hi: usize, out: &mut [u32]) {
        debug_assert_eq!(out.len(), hi - lo);
        let row_i = self.row(i);
        for (slot, j) in out.iter_mut().zip(lo..hi) {
            *slot = row_i
                .iter()
                .zip(self.row(j))
                .map(|(x, y)| (x & y).count_ones())
                .sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_get_roundtrip() {
        let mut b = PackedBits::zeros(130);
        b.set(0, true);
        b.set(64, true);
        b.set(129, true);
        assert!(b.get(0) && b.get(64) && b.get(129));
        assert!(!b.get(1) && !b.get(128));
        assert_eq!(b.count_ones(), 3);
        b.set(64, false);
        assert_eq!(b.count_ones(), 2);
    }

    #[test]
    fn and_popcount_matches_naive() {
        let a = PackedBits::from_bools(&[true, false, true, true, false]);
        let b = PackedBits::from_bools(&[true, true, true, false, false]);
        assert_eq!(a.and_popcount(&b), 2);
    }

    #[test]
    fn byte_roundtrip_rejects_dirty_padding() {
        let b = PackedBits::from_bools(&[true, false, true]);
        let bytes = b.to_bytes();
        assert_eq!(bytes, vec![0b101]);
        assert_eq!(PackedBits::from_bytes(3, &bytes).unwrap(), b);
        assert!(PackedBits::from_bytes(3, &[0b1101]).is_err());
        assert!(PackedBits::from_bytes(9, &bytes).is_err());
    }

    #[test]
    fn gram_row_matches_pairwise() {
        let rows: Vec<PackedBits> = (0..5)
            .map(|i| PackedBits::from_bools(&(0..70).map(|j| (i * j) % 3 == 0).collect::<Vec<_>>()))
            .collect();
        let m = BitMatrix::from_rows(&rows).unwrap();
        let mut buf = vec![0u32; 5];
        m.gram_row_into(2, 0, 5, &mut buf);
        for j in 0..5 {
            assert_eq!(buf[j], rows[2].and_popcount(&rows[j]));
        }
    }

    proptest! {
        #[test]
        fn bytes_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let packed = PackedBits::from_bools(&bits);
            let back = PackedBits::from_bytes(bits.len(), &packed.to_bytes()).unwrap();
            prop_assert_eq!(packed, back);
        }

        #[test]
        fn popcount_dot_matches_bool_dot(
            pair in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..300)
        ) {
            let (xs, ys): (Vec<bool>, Vec<bool>) = pair.into_iter().unzip();
            let expected = xs.iter().zip(&ys).filter(|(a, b)| **a && **b).count() as u32;
            let got = PackedBits::from_bools(&xs).and_popcount(&PackedBits::from_bools(&ys));
            prop_assert_eq!(expected, got);
        }
    }
}
