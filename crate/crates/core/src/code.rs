//! The systematic (n, k) code: generator `[I_k; R]`, parity check `[Rᵀ; I_{n-k}]`,
//! XOR-only encoding, erasure decoding and syndrome scrubbing.
//!
//! `R` is the counter-mode random matrix indexed by the `CodeSpec` parity-row IDs
//! and data-column IDs, so it can be regenerated from a [`CodeSpec`] alone.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gf2::{BitMatrix, Elimination, EliminationStats, RowOp};
use crate::randmat::{prob_tall_full_rank, random_matrix_with_ids, RandomMatrixSpec};

/// Reliability margin: extra surviving blocks beyond `k` that make the
/// surviving rows full rank with probability above 0.999.
pub const RELIABILITY_MARGIN: usize = 10;

/// Bytes per XOR word; block XOR costs are counted in these units.
pub const WORD_BYTES: usize = 8;

const REPLAY_CHUNK: usize = 16 * 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub seed: u64,
    pub data_col_ids: Vec<u64>,
    pub parity_row_ids: Vec<u64>,
    pub version: u32,
}

impl CodeSpec {
    pub const VERSION: u32 = 1;

    /// Code with column IDs `0..k` and parity-row IDs `0..n-k`.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<CodeSpec> {
        if k == 0 || n <= k {
            return Err(Error::InvalidSpec(format!("need n > k >= 1, got n={n} k={k}")));
        }
        CodeSpec::with_ids(seed, (0..k as u64).collect(), (0..(n - k) as u64).collect())
    }

    pub fn with_ids(seed: u64, data_col_ids: Vec<u64>, parity_row_ids: Vec<u64>) -> Result<CodeSpec> {
        let spec = CodeSpec {
            seed,
            data_col_ids,
            parity_row_ids,
            version: CodeSpec::VERSION,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CodeSpec::VERSION {
            return Err(Error::InvalidSpec(format!("unsupported version {}", self.version)));
        }
        if self.data_col_ids.is_empty() {
            return Err(Error::InvalidSpec("k must be at least 1".into()));
        }
        if self.parity_row_ids.is_empty() {
            return Err(Error::InvalidSpec("n must exceed k".into()));
        }
        let unique = |ids: &[u64]| ids.iter().collect::<HashSet<_>>().len() == ids.len();
        if !unique(&self.data_col_ids) || !unique(&self.parity_row_ids) {
            return Err(Error::InvalidSpec("duplicate stable identifiers".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.k() + self.parity_row_ids.len()
    }

    pub fn k(&self) -> usize {
        self.data_col_ids.len()
    }

    pub fn random_spec(&self) -> RandomMatrixSpec {
        RandomMatrixSpec::new(self.seed)
    }
}

/// `R`, the `(n-k) x k` random part of the generator.
pub fn build_random_part(spec: &CodeSpec) -> Result<BitMatrix> {
    spec.validate()?;
    Ok(random_matrix_with_ids(&spec.random_spec(), &spec.parity_row_ids, &spec.data_col_ids))
}

pub fn build_generator(spec: &CodeSpec) -> Result<BitMatrix> {
    BitMatrix::identity(spec.k())?.vstack(&build_random_part(spec)?)
}

pub fn build_parity_check(spec: &CodeSpec) -> Result<BitMatrix> {
    build_random_part(spec)?
        .transpose()
        .vstack(&BitMatrix::identity(spec.n() - spec.k())?)
}

/// XORs `src` into `dst` a word at a time; returns the number of words touched.
pub fn xor_into(dst: &mut [u8], src: &[u8]) -> u64 {
    assert_eq!(dst.len(), src.len(), "xor of unequal blocks");
    let mut d_words = dst.chunks_exact_mut(WORD_BYTES);
    let mut s_words = src.chunks_exact(WORD_BYTES);
    for (d, s) in (&mut d_words).zip(&mut s_words) {
        let v = u64::from_ne_bytes(d.try_into().unwrap()) ^ u64::from_ne_bytes(s.try_into().unwrap());
        d.copy_from_slice(&v.to_ne_bytes());
    }
    for (d, s) in d_words.into_remainder().iter_mut().zip(s_words.remainder()) {
        *d ^= s;
    }
    dst.len().div_ceil(WORD_BYTES) as u64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct XorStats {
    /// Whole-block XORs.
    pub block_xors: u64,
    /// 8-byte word XORs across all block XORs.
    pub word_xors: u64,
    pub block_copies: u64,
}

/// Instrumentation hook counting every operation performed on block bytes.
#[derive(Debug, Default)]
pub struct XorCounter {
    block_xors: AtomicU64,
    word_xors: AtomicU64,
    block_copies: AtomicU64,
}

impl XorCounter {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_xors(&self, blocks: u64, words: u64) {
        self.block_xors.fetch_add(blocks, Ordering::Relaxed);
        self.word_xors.fetch_add(words, Ordering::Relaxed);
    }

    fn add_copies(&self, blocks: u64) {
        self.block_copies.fetch_add(blocks, Ordering::Relaxed);
    }

    pub fn stats(&self) -> XorStats {
        XorStats {
            block_xors: self.block_xors.load(Ordering::Relaxed),
            word_xors: self.word_xors.load(Ordering::Relaxed),
            block_copies: self.block_copies.load(Ordering::Relaxed),
        }
    }
}

/// `n` equal-size blocks, `k` data then `n - k` parity, any of which may be
/// missing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codeword {
    k: usize,
    block_size: usize,
    blocks: Vec<Option<Vec<u8>>>,
}

impl Codeword {
    pub fn new(k: usize, block_size: usize, blocks: Vec<Option<Vec<u8>>>) -> Result<Codeword> {
        if k == 0 || blocks.len() <= k {
            return Err(Error::InvalidSpec(format!("{} blocks with k={k}", blocks.len())));
        }
        if blocks.iter().flatten().any(|b| b.len() != block_size) {
            return Err(Error::UnequalBlockLengths);
        }
        Ok(Codeword { k, block_size, blocks })
    }

    pub fn complete(k: usize, blocks: Vec<Vec<u8>>) -> Result<Codeword> {
        let block_size = blocks.first().map_or(0, Vec::len);
        Codeword::new(k, block_size, blocks.into_iter().map(Some).collect())
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block(&self, i: usize) -> Option<&[u8]> {
        self.blocks[i].as_deref()
    }

    pub fn block_mut(&mut self, i: usize) -> Option<&mut [u8]> {
        self.blocks[i].as_deref_mut()
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.blocks[i].is_some()
    }

    pub fn present_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_present(i)).collect()
    }

    pub fn erase(&mut self, i: usize) {
        self.blocks[i] = None;
    }

    pub fn blocks(&self) -> &[Option<Vec<u8>>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Option<Vec<u8>>> {
        self.blocks
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DecodeReport {
    pub fast_path: bool,
    pub xor: XorStats,
    pub elimination: EliminationStats,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScrubOutcome {
    Consistent,
    /// Parity rows (0-based, relative to the parity part) whose syndrome is nonzero.
    Inconsistent { firing: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CodeMetrics {
    pub n: usize,
    pub k: usize,
    pub fault_tolerance_estimate: usize,
    pub storage_efficiency: f64,
    pub ones_in_r: usize,
    /// Probability that the rows left after losing `fault_tolerance_estimate`
    /// blocks still have full column rank, treating them as uniformly random.
    pub survival_at_estimate: f64,
}

/// A code with its matrices built.
#[derive(Clone, Debug)]
pub struct Rbec {
    spec: CodeSpec,
    random: BitMatrix,
    generator: BitMatrix,
}

impl Rbec {
    pub fn new(spec: CodeSpec) -> Result<Rbec> {
        let random = build_random_part(&spec)?;
        let generator = BitMatrix::identity(spec.k())?.vstack(&random)?;
        Ok(Rbec { spec, random, generator })
    }

    pub fn spec(&self) -> &CodeSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn k(&self) -> usize {
        self.spec.k()
    }

    pub fn generator(&self) -> &BitMatrix {
        &self.generator
    }

    pub fn random_part(&self) -> &BitMatrix {
        &self.random
    }

    pub fn parity_check(&self) -> BitMatrix {
        self.random
            .transpose()
            .vstack(&BitMatrix::identity(self.n() - self.k()).expect("n > k"))
            .expect("same width")
    }

    fn check_data<B: AsRef<[u8]>>(&self, data: &[B]) -> Result<usize> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if data.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "{} data blocks for k={}",
                data.len(),
                self.k()
            )));
        }
        let size = data[0].as_ref().len();
        if data.iter().any(|b| b.as_ref().len() != size) {
            return Err(Error::UnequalBlockLengths);
        }
        if size == 0 {
            return Err(Error::EmptyData);
        }
        Ok(size)
    }

    /// Parity block `i` (0-based within the parity part): XOR of the data
    /// blocks selected by row `i` of `R`.
    pub fn parity_block<B: AsRef<[u8]>>(&self, i: usize, data: &[B], counter: &XorCounter) -> Vec<u8> {
        let size = data[0].as_ref().len();
        let mut out = vec![0u8; size];
        let (mut blocks, mut words) = (0, 0);
        for j in self.random.row_ones(i) {
            words += xor_into(&mut out, data[j].as_ref());
            blocks += 1;
        }
        counter.add_xors(blocks, words);
        out
    }

    pub fn encode<B: AsRef<[u8]> + Sync>(&self, data: &[B]) -> Result<Codeword> {
        self.encode_with(data, Exec::default(), &XorCounter::new())
    }

    pub fn encode_with<B: AsRef<[u8]> + Sync>(
        &self,
        data: &[B],
        exec: Exec,
        counter: &XorCounter,
    ) -> Result<Codeword> {
        self.check_data(data)?;
        let parity = exec.map_indices(self.n() - self.k(), |i| self.parity_block(i, data, counter));
        counter.add_copies(self.k() as u64);
        let blocks: Vec<Vec<u8>> = data
            .iter()
            .map(|b| b.as_ref().to_vec())
            .chain(parity)
            .collect();
        Codeword::complete(self.k(), blocks)
    }

    fn check_word(&self, word: &Codeword) -> Result<()> {
        if word.n() != self.n() || word.k() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "codeword ({}, {}) for code ({}, {})",
                word.n(),
                word.k(),
                self.n(),
                self.k()
            )));
        }
        Ok(())
    }

    pub fn decode(&self, word: &Codeword) -> Result<Vec<Vec<u8>>> {
        Ok(self.decode_with(word, Exec::default(), &XorCounter::new())?.0)
    }

    /// Recovers the `k` data blocks from every present block.
    ///
    /// When all data blocks are present they are returned as-is. Otherwise the
    /// generator rows of the present blocks are eliminated once and the
    /// recorded row operations are replayed over the block bytes.
    pub fn decode_with(
        &self,
        word: &Codeword,
        exec: Exec,
        counter: &XorCounter,
    ) -> Result<(Vec<Vec<u8>>, DecodeReport)> {
        self.check_word(word)?;
        let k = self.k();
        let present = word.present_indices();
        if present.len() < k {
            return Err(Error::InsufficientBlocks {
                present: present.len(),
                required: k,
            });
        }
        if (0..k).all(|i| word.is_present(i)) {
            counter.add_copies(k as u64);
            let data = (0..k).map(|i| word.block(i).unwrap().to_vec()).collect();
            let report = DecodeReport {
                fast_path: true,
                xor: counter.stats(),
                ..Default::default()
            };
            return Ok((data, report));
        }

        let sub = self.generator.select_rows(&present)?;
        let elim = Elimination::new(&sub).map_err(|e| match e {
            Error::Singular { rank, .. } => Error::DecodeFailure { rank, required: k },
            other => other,
        })?;
        let sources: Vec<&[u8]> = present.iter().map(|&i| word.block(i).unwrap()).collect();
        let data = replay_blocks(&elim, &sources, word.block_size(), exec, counter);
        counter.add_copies(present.len() as u64);
        let report = DecodeReport {
            fast_path: false,
            xor: counter.stats(),
            elimination: elim.stats(),
        };
        Ok((data, report))
    }

    /// Checks `Hᵀ · C = 0` block-wise.
    pub fn scrub(&self, word: &Codeword) -> Result<ScrubOutcome> {
        self.check_word(word)?;
        let missing = word.n() - word.present_indices().len();
        if missing > 0 {
            return Err(Error::IncompleteCodeword { missing });
        }
        let data: Vec<&[u8]> = (0..self.k()).map(|j| word.block(j).unwrap()).collect();
        let counter = XorCounter::new();
        let firing: Vec<usize> = (0..self.n() - self.k())
            .filter(|&i| {
                let mut syndrome = self.parity_block(i, &data, &counter);
                xor_into(&mut syndrome, word.block(self.k() + i).unwrap());
                syndrome.iter().any(|&b| b != 0)
            })
            .collect();
        Ok(if firing.is_empty() {
            ScrubOutcome::Consistent
        } else {
            ScrubOutcome::Inconsistent { firing }
        })
    }

    pub fn metrics(&self) -> CodeMetrics {
        let (n, k) = (self.n(), self.k());
        let t = n.saturating_sub(k + RELIABILITY_MARGIN);
        CodeMetrics {
            n,
            k,
            fault_tolerance_estimate: t,
            storage_efficiency: k as f64 / n as f64,
            ones_in_r: self.random.count_ones(),
            survival_at_estimate: prob_tall_full_rank(k, n - k - t).expect("k >= 1"),
        }
    }
}

/// Replays the live elimination ops over byte ranges of the source blocks.
/// Ranges are independent, so they may be processed in parallel.
fn replay_blocks(
    elim: &Elimination,
    sources: &[&[u8]],
    block_size: usize,
    exec: Exec,
    counter: &XorCounter,
) -> Vec<Vec<u8>> {
    let k = elim.cols();
    let chunks = block_size.div_ceil(REPLAY_CHUNK).max(1);
    let pieces = exec.map_indices(chunks, |c| {
        let lo = c * REPLAY_CHUNK;
        let hi = (lo + REPLAY_CHUNK).min(block_size);
        let mut rows: Vec<Vec<u8>> = sources.iter().map(|s| s[lo..hi].to_vec()).collect();
        let mut words = 0;
        elim.replay(&mut rows, |d, s| words += xor_into(d, s));
        rows.truncate(k);
        (rows, words)
    });
    let xors = elim
        .live_ops()
        .iter()
        .filter(|op| matches!(op, RowOp::Xor { .. }))
        .count() as u64;
    let mut out: Vec<Vec<u8>> = (0..k).map(|_| Vec::with_capacity(block_size)).collect();
    let mut words = 0;
    for (rows, w) in pieces {
        words += w;
        for (o, r) in out.iter_mut().zip(rows) {
            o.extend_from_slice(&r);
        }
    }
    counter.add_xors(xors, words);
    out
}
