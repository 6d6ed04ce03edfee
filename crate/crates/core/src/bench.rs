//! Timed encode/decode runs that also report operation counts, so scaling can
//! be checked independently of the machine.

use std::time::Instant;

use serde::Serialize;

use crate::code::{CodeSpec, Rbec, XorCounter, WORD_BYTES};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::layout::ArrayGeometry;
use crate::randmat::{mix64, trial_seed};

pub const CSV_HEADER: &str =
    "operation,data_bytes,data_disks,parity_disks,strip_depth,n,k,block_size,wall_ns,xor_ops,pivot_steps,throughput_bps";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub operation: String,
    pub data_bytes: u64,
    pub geometry: ArrayGeometry,
    pub block_size: usize,
    /// Median wall time over the repetitions.
    pub wall_ns: u64,
    /// 8-byte word XORs on block data.
    pub xor_ops: u64,
    /// Bit-matrix entry updates during elimination (decode only).
    pub pivot_steps: u64,
    pub throughput_bps: f64,
}

impl BenchReport {
    pub fn csv_row(&self) -> String {
        let g = self.geometry;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.0}",
            self.operation,
            self.data_bytes,
            g.data_disks,
            g.parity_disks,
            g.strip_depth,
            g.n(),
            g.k(),
            self.block_size,
            self.wall_ns,
            self.xor_ops,
            self.pivot_steps,
            self.throughput_bps
        )
    }
}

/// Block size for `data_bytes` spread over `k` blocks, rounded up to whole words.
pub fn block_size_for(data_bytes: u64, k: usize) -> usize {
    let per_block = (data_bytes as usize).div_ceil(k).max(1);
    per_block.div_ceil(WORD_BYTES) * WORD_BYTES
}

fn test_data(k: usize, block_size: usize, seed: u64) -> Vec<Vec<u8>> {
    (0..k)
        .map(|j| {
            (0..block_size)
                .map(|b| mix64(seed ^ ((j as u64) << 32) ^ b as u64) as u8)
                .collect()
        })
        .collect()
}

fn median(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

fn report(op: &str, data_bytes: u64, geometry: ArrayGeometry, block_size: usize, times: Vec<u64>, xor_ops: u64, pivot_steps: u64) -> BenchReport {
    let wall_ns = median(times).max(1);
    BenchReport {
        operation: op.to_string(),
        data_bytes,
        geometry,
        block_size,
        wall_ns,
        xor_ops,
        pivot_steps,
        throughput_bps: data_bytes as f64 / (wall_ns as f64 * 1e-9),
    }
}

fn check(data_bytes: u64, repeat: usize) -> Result<()> {
    if data_bytes == 0 || repeat == 0 {
        return Err(Error::InvalidDimension("sizes and repeat must be positive".into()));
    }
    Ok(())
}

pub fn bench_encode(geometry: ArrayGeometry, data_bytes: u64, repeat: usize, seed: u64, exec: Exec) -> Result<BenchReport> {
    check(data_bytes, repeat)?;
    let code = Rbec::new(CodeSpec::new(geometry.n(), geometry.k(), seed)?)?;
    let block_size = block_size_for(data_bytes, geometry.k());
    let data = test_data(geometry.k(), block_size, seed);
    let mut times = Vec::with_capacity(repeat);
    let mut xor_ops = 0;
    for _ in 0..repeat {
        let counter = XorCounter::new();
        let start = Instant::now();
        std::hint::black_box(code.encode_with(&data, exec, &counter)?);
        times.push(start.elapsed().as_nanos() as u64);
        xor_ops = counter.stats().word_xors;
    }
    Ok(report("encode", data_bytes, geometry, block_size, times, xor_ops, 0))
}

/// Decode with the heaviest erasure pattern: `min(k, n - k)` randomly chosen
/// data blocks lost, so every parity block takes part. Code seeds are tried
/// in sequence from `seed` until the surviving rows have full rank.
pub fn bench_decode(geometry: ArrayGeometry, data_bytes: u64, repeat: usize, seed: u64, exec: Exec) -> Result<BenchReport> {
    check(data_bytes, repeat)?;
    let (n, k) = (geometry.n(), geometry.k());
    let block_size = block_size_for(data_bytes, k);
    let data = test_data(k, block_size, seed);
    let lost = k.min(n - k);
    for attempt in 0..1000u64 {
        let code_seed = trial_seed(seed, attempt);
        let code = Rbec::new(CodeSpec::new(n, k, code_seed)?)?;
        let mut word = code.encode(&data)?;
        let mut order: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            order.swap(i, (mix64(code_seed ^ i as u64) % (i as u64 + 1)) as usize);
        }
        order[..lost].iter().for_each(|&i| word.erase(i));

        let mut times = Vec::with_capacity(repeat);
        let mut outcome = None;
        for _ in 0..repeat {
            let counter = XorCounter::new();
            let start = Instant::now();
            match code.decode_with(&word, exec, &counter) {
                Ok((out, rep)) => {
                    times.push(start.elapsed().as_nanos() as u64);
                    debug_assert_eq!(out, data);
                    outcome = Some(rep);
                }
                Err(Error::DecodeFailure { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        if let Some(rep) = outcome {
            return Ok(report("decode", data_bytes, geometry, block_size, times, rep.xor.word_xors, rep.elimination.pivot_steps));
        }
    }
    Err(Error::DecodeFailure { rank: 0, required: k })
}
