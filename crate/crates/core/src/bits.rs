//! Bit-packed points of `{0,1}^n` and the distance primitives built on them.
//!
//! Coordinates are 1-based at every public entry point: `get(1)` is the first
//! coordinate and witness lists hold values in `1..=len`. Storage is packed
//! into 64-bit words, least significant bit first.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

const WORD: usize = 64;

#[inline]
fn word_count(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// A point of `{0,1}^n`, also used for matrix rows and columns.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; word_count(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            words: vec![u64::MAX; word_count(len)],
            len,
        };
        v.mask_tail();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.words[i / WORD] |= 1 << (i % WORD);
            }
        }
        v
    }

    /// Parses a string of `0`/`1` characters. Returns `None` on any other character.
    pub fn parse01(s: &str) -> Option<Self> {
        let mut v = Self::zeros(s.len());
        for (i, c) in s.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => v.words[i / WORD] |= 1 << (i % WORD),
                _ => return None,
            }
        }
        Some(v)
    }

    /// Builds a vector from packed words; bits beyond `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(word_count(len), 0);
        let mut v = Self { words, len };
        v.mask_tail();
        v
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

    /// Value of coordinate `coord` (1-based).
    ///
    /// # Panics
    /// Panics if `coord` is outside `1..=len`.
    pub fn get(&self, coord: usize) -> bool {
        assert!(
            (1..=self.len).contains(&coord),
            "coordinate {coord} out of range 1..={}",
            self.len
        );
        let i = coord - 1;
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, coord: usize, value: bool) {
        assert!(
            (1..=self.len).contains(&coord),
            "coordinate {coord} out of range 1..={}",
            self.len
        );
        let i = coord - 1;
        if value {
            self.words[i / WORD] |= 1 << (i % WORD);
        } else {
            self.words[i / WORD] &= !(1 << (i % WORD));
        }
    }

    pub fn flip(&mut self, coord: usize) {
        assert!(
            (1..=self.len).contains(&coord),
            "coordinate {coord} out of range 1..={}",
            self.len
        );
        let i = coord - 1;
        self.words[i / WORD] ^= 1 << (i % WORD);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of coordinates where both vectors hold a one.
    pub fn and_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Parity of the inner product over GF(2).
    pub fn dot_parity(&self, other: &Self) -> bool {
        let acc = self
            .words
            .iter()
            .zip(&other.words)
            .fold(0u64, |acc, (a, b)| acc ^ (a & b));
        acc.count_ones() % 2 == 1
    }

    pub fn xor(&self, other: &Self) -> Self {
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Self { words, len: self.len }
    }

    pub fn complement(&self) -> Self {
        let mut v = Self {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        v.mask_tail();
        v
    }

    /// Coordinates holding a one, ascending and 1-based.
    pub fn ones_iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + b + 1)
            })
        })
    }

    /// Copies coordinates `start..start+width` (0-based offset) into the low bits of a word.
    pub(crate) fn extract(&self, start: usize, width: usize) -> u64 {
        debug_assert!(width <= WORD && start + width <= self.len);
        if width == 0 {
            return 0;
        }
        let wi = start / WORD;
        let off = start % WORD;
        let mut v = self.words[wi] >> off;
        if off != 0 && off + width > WORD {
            v |= self.words[wi + 1] << (WORD - off);
        }
        if width < WORD {
            v &= (1u64 << width) - 1;
        }
        v
    }

    /// Writes the low `width` bits of `value` at 0-based offset `start`.
    pub(crate) fn insert(&mut self, start: usize, width: usize, value: u64) {
        debug_assert!(width <= WORD && start + width <= self.len);
        for b in 0..width {
            let i = start + b;
            let bit = (value >> b) & 1;
            self.words[i / WORD] = (self.words[i / WORD] & !(1 << (i % WORD))) | (bit << (i % WORD));
        }
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(Error::Dimension {
                expected: self.len,
                found: other.len,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in 1..=self.len {
            f.write_str(if self.get(c) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Number of coordinates in which `x` and `y` differ.
pub fn hamming_distance(x: &BitVector, y: &BitVector) -> Result<usize> {
    x.check_len(y)?;
    Ok(x.words
        .iter()
        .zip(&y.words)
        .map(|(a, b)| (a ^ b).count_ones() as usize)
        .sum())
}

/// All witnesses of the Hamming distance, ascending and 1-based.
pub fn witnesses(x: &BitVector, y: &BitVector) -> Result<Vec<usize>> {
    x.check_len(y)?;
    Ok(x.xor(y).ones_iter().collect())
}

/// Flips every listed coordinate of `row`.
pub fn apply_witnesses(row: &BitVector, w: &[usize]) -> Result<BitVector> {
    let mut out = row.clone();
    let mut seen = BitVector::zeros(row.len());
    for &c in w {
        if c == 0 || c > row.len() {
            return Err(Error::InvalidWitness {
                index: c,
                len: row.len(),
            });
        }
        if seen.get(c) {
            return Err(Error::DuplicateWitness { index: c });
        }
        seen.flip(c);
        out.flip(c);
    }
    Ok(out)
}

/// Extended Hamming distance: the number of maximal jointly-constant runs of
/// `(s, u)` on which the two strings disagree.
pub fn extended_hamming(s: &BitVector, u: &BitVector) -> Result<usize> {
    s.check_len(u)?;
    let n = s.len();
    let mut total = 0;
    let mut c = 1;
    while c <= n {
        let (s1, u1) = (s.get(c), u.get(c));
        total += usize::from(s1 != u1);
        c += 1;
        while c <= n && s.get(c) == s1 && u.get(c) == u1 {
            c += 1;
        }
    }
    Ok(total)
}

/// Square Boolean matrix stored as bit-packed rows.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BooleanMatrix {
    rows: Vec<BitVector>,
}

impl BooleanMatrix {
    pub fn from_rows(rows: Vec<BitVector>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("matrix has no rows"));
        }
        for r in &rows {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: r.len(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            rows: (0..n).map(|_| BitVector::zeros(n)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 1..=n {
            m.rows[i - 1].set(i, true);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<BitVector> {
        self.rows
    }

    /// Row `i` (1-based).
    pub fn row(&self, i: usize) -> &BitVector {
        &self.rows[i - 1]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i - 1].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.rows[i - 1].set(j, value);
    }

    pub fn transpose(&self) -> Self {
        let n = self.n();
        let mut t = Self::zeros(n);
        for (i, row) in self.rows.iter().enumerate() {
            for j in row.ones_iter() {
                t.rows[j - 1].set(i + 1, true);
            }
        }
        t
    }

    pub fn complement(&self) -> Self {
        Self {
            rows: self.rows.iter().map(BitVector::complement).collect(),
        }
    }
}

impl fmt::Debug for BooleanMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.rows.iter().map(|r| alloc::format!("{r}")))
            .finish()
    }
}

/// Dense square matrix of nonnegative integers, 1-based accessors.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IntMatrix {
    n: usize,
    data: Vec<u64>,
}

impl IntMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> u64) -> Self {
        let mut m = Self::zeros(n);
        for i in 1..=n {
            for j in 1..=n {
                m.data[(i - 1) * n + (j - 1)] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[(i - 1) * self.n + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[(i - 1) * self.n + (j - 1)] = v;
    }

    pub fn is_symmetric(&self) -> bool {
        (1..=self.n).all(|i| (i + 1..=self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// All pairwise Hamming distances from the integer products `P·Pᵗ` and `P̄·P̄ᵗ`:
/// `H[i][j] = n − c[i][j] − c̄[i][j]`.
pub fn distance_matrix_via_products(p: &BooleanMatrix) -> IntMatrix {
    let n = p.n();
    let pbar = p.complement();
    let c = integer_gram(p);
    let cbar = integer_gram(&pbar);
    IntMatrix::from_fn(n, |i, j| n as u64 - c.get(i, j) - cbar.get(i, j))
}

/// `P·Pᵗ` over the integers.
fn integer_gram(p: &BooleanMatrix) -> IntMatrix {
    let rows = p.rows();
    IntMatrix::from_fn(p.n(), |i, j| rows[i - 1].and_count(&rows[j - 1]) as u64)
}

/// Boolean product `C[i][j] = OR_k (A[i][k] AND B[k][j])`.
pub fn boolean_product_naive(a: &BooleanMatrix, b: &BooleanMatrix) -> Result<BooleanMatrix> {
    if a.n() != b.n() {
        return Err(Error::Dimension {
            expected: a.n(),
            found: b.n(),
        });
    }
    let n = a.n();
    let mut c = BooleanMatrix::zeros(n);
    for i in 1..=n {
        let mut acc = BitVector::zeros(n);
        for k in a.row(i).ones_iter() {
            for (w, bw) in acc.words.iter_mut().zip(b.row(k).words()) {
                *w |= bw;
            }
        }
        c.rows[i - 1] = acc;
    }
    Ok(c)
}
