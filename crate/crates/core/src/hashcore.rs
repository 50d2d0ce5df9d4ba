//! Binary code storage with dual views.
//!
//! Solvers work on the ±1 integer view (exact arithmetic, no float drift in
//! code products); retrieval works on the bit-packed view (XOR + popcount).
//! The two views are kept in sync through every mutation.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// n×m matrix over {−1,+1} with a packed backing of ⌈m/64⌉ words per row.
/// Bit 1 means code +1; pad bits past `m` stay zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    n: usize,
    m: usize,
    words_per_row: usize,
    signs: Vec<i8>,
    packed: Vec<u64>,
}

impl CodeMatrix {
    pub fn from_signs(n: usize, m: usize, signs: Vec<i8>) -> Result<CodeMatrix> {
        if signs.len() != n * m {
            return Err(Error::InvalidArgument(format!(
                "expected {} signs for {n}x{m} codes, got {}",
                n * m,
                signs.len()
            )));
        }
        if !signs.iter().all(|&s| s == 1 || s == -1) {
            return Err(Error::InvalidArgument(
                "code entries must be exactly -1 or +1".into(),
            ));
        }
        let words_per_row = m.div_ceil(64).max(1);
        let mut cm = CodeMatrix {
            n,
            m,
            words_per_row,
            signs,
            packed: vec![0u64; n * words_per_row],
        };
        for i in 0..n {
            cm.repack_row(i);
        }
        Ok(cm)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> usize {
        self.m
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.signs[i * self.m + j]
    }

    /// Sets one entry, keeping both views consistent.
    pub fn set(&mut self, i: usize, j: usize, v: i8) {
        debug_assert!(v == 1 || v == -1);
        self.signs[i * self.m + j] = v;
        let word = i * self.words_per_row + j / 64;
        let bit = 1u64 << (j % 64);
        if v > 0 {
            self.packed[word] |= bit;
        } else {
            self.packed[word] &= !bit;
        }
    }

    pub fn row_signs(&self, i: usize) -> &[i8] {
        &self.signs[i * self.m..(i + 1) * self.m]
    }

    pub fn packed_row(&self, i: usize) -> &[u64] {
        &self.packed[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn set_row(&mut self, i: usize, row: &[i8]) {
        debug_assert_eq!(row.len(), self.m);
        self.signs[i * self.m..(i + 1) * self.m].copy_from_slice(row);
        self.repack_row(i);
    }

    fn repack_row(&mut self, i: usize) {
        let words = &mut self.packed[i * self.words_per_row..(i + 1) * self.words_per_row];
        words.fill(0);
        for (j, &s) in self.signs[i * self.m..(i + 1) * self.m].iter().enumerate() {
            if s > 0 {
                words[j / 64] |= 1u64 << (j % 64);
            }
        }
    }

    /// All packed words, row-major (for persistence).
    pub fn packed_words(&self) -> &[u64] {
        &self.packed
    }

    /// Rebuilds a code matrix from packed words.
    pub fn from_packed(n: usize, m: usize, packed: Vec<u64>) -> Result<CodeMatrix> {
        let words_per_row = m.div_ceil(64).max(1);
        if packed.len() != n * words_per_row {
            return Err(Error::InvalidArgument(format!(
                "expected {} packed words, got {}",
                n * words_per_row,
                packed.len()
            )));
        }
        let mut signs = vec![-1i8; n * m];
        for i in 0..n {
            for j in 0..m {
                let w = packed[i * words_per_row + j / 64];
                if w >> (j % 64) & 1 == 1 {
                    signs[i * m + j] = 1;
                }
            }
        }
        // Round-trip through from_signs re-derives pad-free packed words.
        CodeMatrix::from_signs(n, m, signs)
    }

    /// Row sub-selection; repeats allowed, both views stay consistent.
    pub fn select_rows(&self, idx: &[usize]) -> Result<CodeMatrix> {
        let mut signs = Vec::with_capacity(idx.len() * self.m);
        for &i in idx {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!(
                    "row index {i} out of range for {} rows",
                    self.n
                )));
            }
            signs.extend_from_slice(self.row_signs(i));
        }
        CodeMatrix::from_signs(idx.len(), self.m, signs)
    }

    /// Exact ±1 dot product between a row of `self` and a row of `other`,
    /// through the packed views.
    pub fn dot_rows(&self, i: usize, other: &CodeMatrix, j: usize) -> i64 {
        debug_assert_eq!(self.m, other.m);
        let d = hamming(self.packed_row(i), other.packed_row(j));
        self.m as i64 - 2 * d as i64
    }

    /// ±1 view widened to f64 for dense algebra.
    pub fn to_matrix(&self) -> Matrix {
        let data: Vec<f64> = self.signs.iter().map(|&s| s as f64).collect();
        Matrix::from_vec(self.n, self.m, data).expect("±1 codes are finite")
    }

    /// Frobenius norm of the difference between two code matrices,
    /// computed exactly from the flip count: each differing entry
    /// contributes (±2)² = 4.
    pub fn code_change_norm(&self, other: &CodeMatrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        debug_assert_eq!(self.m, other.m);
        let mut flips = 0usize;
        for (a, b) in self.packed.iter().zip(&other.packed) {
            flips += (a ^ b).count_ones() as usize;
        }
        (4.0 * flips as f64).sqrt()
    }
}

/// Hamming distance between two packed code rows of equal width.
pub fn hamming(a: &[u64], b: &[u64]) -> usize {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

/// Element-wise sign with the zero-maps-to-+1 convention.
pub fn sgn_matrix(m: &Matrix) -> Result<CodeMatrix> {
    if m.values().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite);
    }
    let signs: Vec<i8> = m
        .values()
        .iter()
        .map(|&v| if v >= 0.0 { 1 } else { -1 })
        .collect();
    CodeMatrix::from_signs(m.rows(), m.cols(), signs)
}

/// Sign of a scalar under the same convention.
pub fn sgn(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}
