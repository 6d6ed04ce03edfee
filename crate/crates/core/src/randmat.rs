//! Seeded random {0,1} matrices and their full-rank probabilities.
//!
//! Entries are derived in counter mode: the bit at `(row_id, col_id)` is a
//! pure function of the seed and the two stable identifiers, so adding or
//! retiring rows and columns never disturbs the entries that remain.
//!
//! The mixing function is frozen under [`DERIVATION_ID`]; arrays record that
//! identifier and refuse to open if it changes.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gf2::BitMatrix;

/// Identifier of the entry-derivation function below. Bump on any change.
pub const DERIVATION_ID: &str = "splitmix64-rowcol-v1";

const SEED_SALT: u64 = 0x5243_4245_435f_5345; // "RCBEC_SE"
const ROW_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const COL_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;
const TRIAL_SALT: u64 = 0x1656_67b1_9e37_79f9;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomMatrixSpec {
    pub seed: u64,
    p: f64,
}

impl RandomMatrixSpec {
    /// Unbiased entries (`p = 1/2`), the only setting used for codes.
    pub fn new(seed: u64) -> Self {
        RandomMatrixSpec { seed, p: 0.5 }
    }

    pub fn with_probability(seed: u64, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(RandomMatrixSpec { seed, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn seed_key(&self) -> u64 {
        mix64(self.seed ^ SEED_SALT)
    }

    fn row_key(&self, row_id: u64) -> u64 {
        self.seed_key() ^ mix64(row_id ^ ROW_SALT)
    }

    fn col_key(col_id: u64) -> u64 {
        mix64(col_id ^ COL_SALT).rotate_left(17)
    }

    /// `u = (h >> 11) / 2^53` is uniform in [0, 1) and the entry is 1 when
    /// `u >= 1 - p`; this is the same test on the integer numerator.
    fn threshold(&self) -> u64 {
        ((1.0 - self.p) * (1u64 << 53) as f64).ceil() as u64
    }

    fn bit_from(&self, row_key: u64, col_key: u64, threshold: u64) -> bool {
        mix64(row_key ^ col_key) >> 11 >= threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EntryAddress {
    pub row_id: u64,
    pub col_id: u64,
}

pub fn derive_entry(spec: &RandomMatrixSpec, addr: EntryAddress) -> bool {
    spec.bit_from(spec.row_key(addr.row_id), RandomMatrixSpec::col_key(addr.col_id), spec.threshold())
}

/// Random matrix over row IDs `0..rows` and column IDs `0..cols`.
pub fn random_matrix(spec: &RandomMatrixSpec, rows: usize, cols: usize) -> Result<BitMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension(format!(
            "random matrix must be at least 1x1, got {rows}x{cols}"
        )));
    }
    let row_ids: Vec<u64> = (0..rows as u64).collect();
    let col_ids: Vec<u64> = (0..cols as u64).collect();
    Ok(random_matrix_with_ids(spec, &row_ids, &col_ids))
}

/// Random matrix whose entry `(i, j)` is `derive_entry(row_ids[i], col_ids[j])`.
pub fn random_matrix_with_ids(spec: &RandomMatrixSpec, row_ids: &[u64], col_ids: &[u64]) -> BitMatrix {
    let row_keys: Vec<u64> = row_ids.iter().map(|&r| spec.row_key(r)).collect();
    let col_keys: Vec<u64> = col_ids.iter().map(|&c| RandomMatrixSpec::col_key(c)).collect();
    let threshold = spec.threshold();
    BitMatrix::from_row_words(row_ids.len(), col_ids.len(), |i, row| {
        for (j, &ck) in col_keys.iter().enumerate() {
            row[j / 64] |= (spec.bit_from(row_keys[i], ck, threshold) as u64) << (j % 64);
        }
    })
}

/// Product of `(1 - 2^-i)` for `i` in `lo..=hi`, largest factors first.
fn survival_product(lo: usize, hi: usize) -> f64 {
    (lo..=hi)
        .rev()
        .map(|i| 1.0 - 0.5f64.powi(i.min(1100) as i32))
        .product()
}

/// Probability that a uniformly random `n x n` matrix over GF(2) is invertible.
pub fn prob_square_nonsingular(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    Ok(survival_product(1, n))
}

/// Probability that a uniformly random `(n + extra) x n` matrix has full
/// column rank.
pub fn prob_tall_full_rank(n: usize, extra: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    Ok(survival_product(extra + 1, n + extra))
}

/// `S(n, n)` for `n = 1..=n_max`.
pub fn monotone_check(n_max: usize) -> Vec<f64> {
    (1..=n_max).map(|n| survival_product(1, n)).collect()
}

pub fn is_strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    pub stderr: f64,
}

impl McEstimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let p = successes as f64 / trials as f64;
        McEstimate {
            trials,
            successes,
            estimate: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// Distance from `expected` in units of the binomial standard error at
    /// `expected` (falls back to the sample error when that is degenerate).
    pub fn sigmas_from(&self, expected: f64) -> f64 {
        let sd = (expected * (1.0 - expected) / self.trials as f64).sqrt().max(self.stderr);
        let diff = (self.estimate - expected).abs();
        if sd == 0.0 {
            if diff == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            diff / sd
        }
    }
}

/// Seed for trial `index` of a Monte-Carlo run based at `base`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index ^ TRIAL_SALT))
}

/// Fraction of `trials` freshly seeded `rows x cols` matrices with rank `cols`.
pub fn monte_carlo_full_rank(
    base: &RandomMatrixSpec,
    rows: usize,
    cols: usize,
    trials: u64,
    exec: Exec,
) -> Result<McEstimate> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension(format!("{rows}x{cols}")));
    }
    if trials == 0 {
        return Err(Error::InvalidDimension("trials must be at least 1".into()));
    }
    let row_ids: Vec<u64> = (0..rows as u64).collect();
    let col_ids: Vec<u64> = (0..cols as u64).collect();
    let successes = exec.count_indices(trials, |t| {
        let spec = RandomMatrixSpec {
            seed: trial_seed(base.seed, t),
            p: base.p,
        };
        random_matrix_with_ids(&spec, &row_ids, &col_ids).rank() == cols
    });
    Ok(McEstimate::from_counts(successes, trials))
}

/// One line of a rank-probability table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankRow {
    pub n: usize,
    pub analytic: f64,
    pub empirical: Option<McEstimate>,
}

/// `S(n, n)` for `n = 1..=max_n`, with Monte-Carlo estimates when `trials > 0`.
pub fn square_table(max_n: usize, trials: u64, seed: u64, exec: Exec) -> Result<Vec<RankRow>> {
    (1..=max_n)
        .map(|n| {
            let empirical = (trials > 0)
                .then(|| monte_carlo_full_rank(&RandomMatrixSpec::new(trial_seed(seed, n as u64)), n, n, trials, exec))
                .transpose()?;
            Ok(RankRow {
                n,
                analytic: prob_square_nonsingular(n)?,
                empirical,
            })
        })
        .collect()
}

/// `S(m + extra, m)` for `m = 1..=max_n` at fixed `extra`.
pub fn tall_table(max_n: usize, extra: usize, trials: u64, seed: u64, exec: Exec) -> Result<Vec<RankRow>> {
    (1..=max_n)
        .map(|n| {
            let base = RandomMatrixSpec::new(trial_seed(seed ^ (extra as u64).rotate_left(32), n as u64));
            let empirical = (trials > 0)
                .then(|| monte_carlo_full_rank(&base, n + extra, n, trials, exec))
                .transpose()?;
            Ok(RankRow {
                n,
                analytic: prob_tall_full_rank(n, extra)?,
                empirical,
            })
        })
        .collect()
}
