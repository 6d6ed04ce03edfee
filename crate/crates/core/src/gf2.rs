//! Dense bit-packed linear algebra over GF(2).
//!
//! Matrices are stored row-major, one bit per entry, packed into `u64` words.
//! Each row occupies `stride` words and any bits past `cols` in the last word
//! of a row are always zero. Row XOR is the primitive every other operation
//! is built on.
//!
//! Values are immutable once constructed; every operation returns a new value.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

fn tail_mask(bits: usize) -> u64 {
    match bits % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Iterates the positions of set bits in a packed word slice.
fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let bit = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(w * WORD_BITS + bit)
        })
    })
}

fn check_selection(indices: &[usize], limit: usize) -> Result<()> {
    for (pos, &index) in indices.iter().enumerate() {
        if index >= limit {
            return Err(Error::IndexOutOfRange { index, limit });
        }
        if pos > 0 && indices[pos - 1] >= index {
            return Err(Error::UnorderedIndices);
        }
    }
    Ok(())
}

/// A packed vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut v = BitVector::zeros(len);
        for i in 0..len {
            if f(i) {
                v.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        v
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidEntry(bad));
        }
        Ok(BitVector::from_fn(bits.len(), |i| bits[i] == 1))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        write!(f, "BitVector[{s}]")
    }
}

/// A dense matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        BitMatrix {
            rows,
            cols,
            stride,
            words: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("identity of order 0".into()));
        }
        Ok(BitMatrix::from_fn(n, n, |i, j| i == j))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    /// Builds a matrix from rows of 0/1 bytes.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        if let Some(&bad) = rows.iter().flat_map(|r| r.as_ref()).find(|&&b| b > 1) {
            return Err(Error::InvalidEntry(bad));
        }
        Ok(BitMatrix::from_fn(rows.len(), cols, |i, j| {
            rows[i].as_ref()[j] == 1
        }))
    }

    pub fn from_columns(columns: &[BitVector]) -> Result<Self> {
        let rows = columns.first().map_or(0, BitVector::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch("columns differ in length".into()));
        }
        Ok(BitMatrix::from_fn(rows, columns.len(), |i, j| {
            columns[j].get(i)
        }))
    }

    fn set(&mut self, i: usize, j: usize) {
        self.words[i * self.stride + j / WORD_BITS] |= 1 << (j % WORD_BITS);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(
            i < self.rows && j < self.cols,
            "entry ({i}, {j}) outside {}x{}",
            self.rows,
            self.cols
        );
        self.words[i * self.stride + j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1
    }

    /// Packed words of row `i`.
    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.words[i * self.stride..(i + 1) * self.stride]
    }

    /// Full backing storage, row-major with `stride` words per row.
    pub fn raw_words(&self) -> &[u64] {
        &self.words
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn row(&self, i: usize) -> BitVector {
        BitVector {
            len: self.cols,
            words: self.row_words(i).to_vec(),
        }
    }

    pub fn column(&self, j: usize) -> BitVector {
        BitVector::from_fn(self.rows, |i| self.get(i, j))
    }

    /// Column indices set in row `i`, ascending.
    pub fn row_ones(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        ones(self.row_words(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Checks that every padding bit beyond `cols` is clear.
    pub fn padding_is_clear(&self) -> bool {
        if self.stride == 0 {
            return true;
        }
        let mask = tail_mask(self.cols);
        (0..self.rows).all(|i| self.row_words(i)[self.stride - 1] & !mask == 0)
    }

    pub fn multiply(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        let stride = out.stride;
        for i in 0..self.rows {
            let dst = &mut out.words[i * stride..(i + 1) * stride];
            for l in ones(&self.words[i * self.stride..(i + 1) * self.stride]) {
                for (d, s) in dst.iter_mut().zip(other.row_words(l)) {
                    *d ^= s;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vector(&self, v: &BitVector) -> Result<BitVector> {
        if self.cols != v.len {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows, self.cols, v.len
            )));
        }
        Ok(BitVector::from_fn(self.rows, |i| {
            self.row_words(i)
                .iter()
                .zip(&v.words)
                .map(|(a, b)| (a & b).count_ones())
                .sum::<u32>()
                % 2
                == 1
        }))
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut out = BitMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in self.row_ones(i) {
                out.set(j, i);
            }
        }
        out
    }

    pub fn vstack(&self, bottom: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != bottom.cols {
            return Err(Error::DimensionMismatch(format!(
                "vstack of {} and {} columns",
                self.cols, bottom.cols
            )));
        }
        let mut words = self.words.clone();
        words.extend_from_slice(&bottom.words);
        Ok(BitMatrix {
            rows: self.rows + bottom.rows,
            cols: self.cols,
            stride: self.stride,
            words,
        })
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<BitMatrix> {
        check_selection(indices, self.rows)?;
        let mut words = Vec::with_capacity(indices.len() * self.stride);
        for &i in indices {
            words.extend_from_slice(self.row_words(i));
        }
        Ok(BitMatrix {
            rows: indices.len(),
            cols: self.cols,
            stride: self.stride,
            words,
        })
    }

    pub fn select_cols(&self, indices: &[usize]) -> Result<BitMatrix> {
        check_selection(indices, self.cols)?;
        Ok(BitMatrix::from_fn(self.rows, indices.len(), |i, j| {
            self.get(i, indices[j])
        }))
    }

    /// Builds a matrix row by row; `fill(i, words)` writes row `i` into a
    /// zeroed slice of `stride` words. Bits past `cols` are cleared afterwards.
    pub fn from_row_words(rows: usize, cols: usize, mut fill: impl FnMut(usize, &mut [u64])) -> Self {
        let mut m = BitMatrix::zeros(rows, cols);
        let stride = m.stride;
        if stride == 0 {
            return m;
        }
        let mask = tail_mask(cols);
        for (i, row) in m.words.chunks_exact_mut(stride).enumerate() {
            fill(i, row);
            row[stride - 1] &= mask;
        }
        m
    }

    /// Row rank by forward elimination.
    pub fn rank(&self) -> usize {
        if self.stride == 1 {
            return rank_single_word(self.words.clone(), self.cols);
        }
        let mut m = self.clone();
        let mut rank = 0;
        for j in 0..self.cols {
            let Some(p) = (rank..m.rows).find(|&i| m.get(i, j)) else {
                continue;
            };
            m.swap_rows(rank, p);
            for i in rank + 1..m.rows {
                if m.get(i, j) {
                    m.xor_row_into(rank, i, j / WORD_BITS);
                }
            }
            rank += 1;
            if rank == m.rows {
                break;
            }
        }
        rank
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        for w in 0..s {
            self.words.swap(a * s + w, b * s + w);
        }
    }

    /// `row[dst] ^= row[src]`, touching words from `from_word` onwards.
    fn xor_row_into(&mut self, src: usize, dst: usize, from_word: usize) {
        let s = self.stride;
        for w in from_word..s {
            let v = self.words[src * s + w];
            self.words[dst * s + w] ^= v;
        }
    }

    /// Lowercase hex of the packed bits: entry (i, j) is bit `i * cols + j`
    /// of the stream, most significant bit first within each byte, with the
    /// final byte zero-padded.
    pub fn to_hex(&self) -> String {
        let total = self.rows * self.cols;
        let mut bytes = vec![0u8; total.div_ceil(8)];
        for i in 0..self.rows {
            for j in self.row_ones(i) {
                let bit = i * self.cols + j;
                bytes[bit / 8] |= 0x80 >> (bit % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn from_hex(rows: usize, cols: usize, text: &str) -> Result<BitMatrix> {
        let bytes = hex::decode(text).map_err(|e| Error::MalformedEncoding(e.to_string()))?;
        let total = rows * cols;
        if bytes.len() != total.div_ceil(8) {
            return Err(Error::MalformedEncoding(format!(
                "expected {} bytes for {rows}x{cols}, got {}",
                total.div_ceil(8),
                bytes.len()
            )));
        }
        let bit = |b: usize| bytes[b / 8] & (0x80 >> (b % 8)) != 0;
        if (total..bytes.len() * 8).any(bit) {
            return Err(Error::MalformedEncoding("nonzero padding bits".into()));
        }
        Ok(BitMatrix::from_fn(rows, cols, |i, j| bit(i * cols + j)))
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let s: String = (0..self.cols)
                .map(|j| if self.get(i, j) { '1' } else { '0' })
                .collect();
            writeln!(f, "  {s}")?;
        }
        write!(f, "]")
    }
}

fn rank_single_word(mut rows: Vec<u64>, cols: usize) -> usize {
    let mut rank = 0;
    for j in 0..cols {
        let bit = 1u64 << j;
        let Some(p) = (rank..rows.len()).find(|&i| rows[i] & bit != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for r in &mut rows[rank + 1..] {
            if *r & bit != 0 {
                *r ^= pivot;
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// One step of a recorded elimination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowOp {
    Swap(usize, usize),
    /// `row[dst] ^= row[src]`
    Xor { src: usize, dst: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EliminationStats {
    pub pivots: usize,
    pub row_xors: u64,
    /// Entry updates performed: each row XOR over a `cols`-wide row counts `cols`.
    pub pivot_steps: u64,
}

/// Gauss-Jordan reduction of a full-column-rank matrix, recorded so it can be
/// replayed on anything that supports XOR (bit vectors, byte blocks).
///
/// After replay, positions `0..cols` hold the solution in column order.
#[derive(Clone, Debug)]
pub struct Elimination {
    rows: usize,
    cols: usize,
    ops: Vec<RowOp>,
    live_ops: Vec<RowOp>,
    stats: EliminationStats,
}

impl Elimination {
    /// Reduces `a` to `[I; 0]` form. Pivot for column `j` is the first row at
    /// or after the current pivot position holding a 1 in column `j`.
    pub fn new(a: &BitMatrix) -> Result<Elimination> {
        let mut m = a.clone();
        let mut ops = Vec::new();
        let mut stats = EliminationStats::default();
        for j in 0..a.cols {
            let r = j;
            let Some(p) = (r..m.rows).find(|&i| m.get(i, j)) else {
                return Err(Error::Singular {
                    rank: a.rank(),
                    cols: a.cols,
                });
            };
            if p != r {
                m.swap_rows(r, p);
                ops.push(RowOp::Swap(r, p));
            }
            for i in 0..m.rows {
                if i != r && m.get(i, j) {
                    m.xor_row_into(r, i, j / WORD_BITS);
                    ops.push(RowOp::Xor { src: r, dst: i });
                    stats.row_xors += 1;
                    stats.pivot_steps += a.cols as u64;
                }
            }
            stats.pivots += 1;
        }
        let live_ops = prune(&ops, a.rows, a.cols);
        Ok(Elimination {
            rows: a.rows,
            cols: a.cols,
            ops,
            live_ops,
            stats,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Every row operation in the order performed.
    pub fn ops(&self) -> &[RowOp] {
        &self.ops
    }

    /// The subset of `ops` that influences the solution rows.
    pub fn live_ops(&self) -> &[RowOp] {
        &self.live_ops
    }

    pub fn stats(&self) -> EliminationStats {
        self.stats
    }

    /// Applies the live operations to `items` (one per matrix row) using
    /// `xor(dst, src)`. Afterwards `items[..cols]` are the solution.
    pub fn replay<T>(&self, items: &mut [T], mut xor: impl FnMut(&mut T, &T)) {
        assert_eq!(items.len(), self.rows, "replay needs one item per row");
        for op in &self.live_ops {
            match *op {
                RowOp::Swap(a, b) => items.swap(a, b),
                RowOp::Xor { src, dst } => {
                    let (s, d) = pair_mut(items, src, dst);
                    xor(d, s);
                }
            }
        }
    }

    pub fn solve_vector(&self, rhs: &BitVector) -> Result<BitVector> {
        if rhs.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for {} rows",
                rhs.len(),
                self.rows
            )));
        }
        let mut bits: Vec<bool> = (0..rhs.len()).map(|i| rhs.get(i)).collect();
        self.replay(&mut bits, |d, s| *d ^= *s);
        Ok(BitVector::from_fn(self.cols, |i| bits[i]))
    }
}

/// Drops operations whose result never reaches a solution row.
fn prune(ops: &[RowOp], rows: usize, cols: usize) -> Vec<RowOp> {
    let mut live: Vec<bool> = (0..rows).map(|i| i < cols).collect();
    let mut kept = Vec::with_capacity(ops.len());
    for op in ops.iter().rev() {
        match *op {
            RowOp::Swap(a, b) => {
                if live[a] || live[b] {
                    live.swap(a, b);
                    kept.push(*op);
                }
            }
            RowOp::Xor { src, dst } => {
                if live[dst] {
                    live[src] = true;
                    kept.push(*op);
                }
            }
        }
    }
    kept.reverse();
    kept
}

fn pair_mut<T>(items: &mut [T], src: usize, dst: usize) -> (&T, &mut T) {
    assert_ne!(src, dst);
    if src < dst {
        let (lo, hi) = items.split_at_mut(dst);
        (&lo[src], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(src);
        (&hi[0], &mut lo[dst])
    }
}

/// Solves `a · x = rhs` for full-column-rank `a` (rows ≥ cols).
pub fn solve(a: &BitMatrix, rhs: &BitVector) -> Result<BitVector> {
    if a.rows() < a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "underdetermined {}x{} system",
            a.rows(),
            a.cols()
        )));
    }
    Elimination::new(a)?.solve_vector(rhs)
}
