//! Acceptance criteria, run as a plain binary (`harness = false`) so that the
//! one-line `[criterion N] PASS|FAIL` verdicts are always printed.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use rbec::bench::bench_decode;
use rbec::code::{build_generator, build_parity_check, XorCounter, WORD_BYTES};
use rbec::randmat::{prob_square_nonsingular, prob_tall_full_rank, monte_carlo_full_rank, McEstimate, RandomMatrixSpec};
use rbec::{ArrayGeometry, BitMatrix, CodeSpec, Error, Exec, Rbec, ScrubOutcome, DiskArray};

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "[criterion {id}] {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn example_geometry() -> ArrayGeometry {
    ArrayGeometry::new(5, 3, 5).unwrap()
}

fn object(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen()).collect()
}

/// Columns of `r` (as a column subset) must equal `sub` exactly.
fn columns_preserved(old: &BitMatrix, keep_cols: &[usize], new: &BitMatrix, new_cols: &[usize]) -> bool {
    old.select_cols(keep_cols).unwrap() == new.select_cols(new_cols).unwrap()
}

fn criterion_01_rank_probability_constant() {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_rbec"))
        .args(["rankprob", "--max-n", "30", "--trials", "100000"])
        .output()
        .expect("run rbec");
    let elapsed = start.elapsed();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,analytic,empirical,stderr"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 30);
    let last = rows[29][1];
    let mut worst = 0.0f64;
    let all_within = rows.iter().all(|r| {
        let z = (r[2] - r[1]).abs() / r[3];
        worst = worst.max(z);
        (r[2] - r[1]).abs() <= 4.0 * r[3]
    });
    let pass = (last - 0.28879).abs() <= 1e-4 && all_within && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "rank-probability constant",
        pass,
        format!("S(30,30)={last:.8}, worst |emp-analytic|/stderr={worst:.2}, runtime={elapsed:.1?}"),
    );
}

fn criterion_02_tall_matrix_reliability() {
    let analytic = prob_tall_full_rank(20, 10).unwrap();
    let est = monte_carlo_full_rank(&RandomMatrixSpec::new(2), 30, 20, 100_000, Exec::default()).unwrap();
    let sigmas = est.sigmas_from(analytic);
    verdict(
        2,
        "tall-matrix reliability",
        analytic >= 0.999 && sigmas <= 4.0,
        format!("analytic={analytic:.6} empirical={:.6} ({sigmas:.2} sigma)", est.estimate),
    );
}

fn criterion_03_orthogonality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=64);
        let k = rng.gen_range(1..n);
        let spec = CodeSpec::new(n, k, rng.gen()).unwrap();
        let g = build_generator(&spec).unwrap();
        let h = build_parity_check(&spec).unwrap();
        if !g.transpose().multiply(&h).unwrap().is_zero() {
            bad += 1;
        }
    }
    verdict(3, "orthogonality", bad == 0, format!("{bad} of 1000 specs with nonzero G^T H"));
}

/// Full-rank probability of the surviving generator rows when the given
/// disks of the example geometry fail: the identity rows of surviving data
/// disks always pivot, so what remains is the random block formed by the
/// surviving parity rows and the lost data columns.
fn survival_oracle(geometry: ArrayGeometry, failed: &[usize]) -> f64 {
    let lost_cols = failed.iter().filter(|&&d| geometry.is_data_disk(d)).count() * geometry.strip_depth;
    let lost_parity = failed.len() * geometry.strip_depth - lost_cols;
    let rows = geometry.n() - geometry.k() - lost_parity;
    match (lost_cols, rows) {
        (0, _) => 1.0,
        (c, r) if r < c => 0.0,
        (c, r) => prob_tall_full_rank(c, r - c).unwrap(),
    }
}

fn erase_disks(word: &mut rbec::Codeword, geometry: ArrayGeometry, disks: &[usize]) {
    for &d in disks {
        for e in geometry.disk_elements(d).unwrap() {
            word.erase(e);
        }
    }
}

fn criterion_04_round_trip_under_erasure() {
    let geometry = example_geometry();
    let (n, k) = (geometry.n(), geometry.k());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 10_000;

    // Mixed run: 0..=3 random whole-disk failures per trial, fresh code each time.
    let mut wrong = 0;
    let mut three = (0u64, 0u64, 0.0f64, 0.0f64); // trials, failures, expected failures, variance
    for _ in 0..trials {
        let code = Rbec::new(CodeSpec::new(n, k, rng.gen()).unwrap()).unwrap();
        let data: Vec<Vec<u8>> = (0..k).map(|_| (0..16).map(|_| rng.gen()).collect()).collect();
        let mut word = code.encode(&data).unwrap();
        let mut disks: Vec<usize> = (0..geometry.disks()).collect();
        disks.shuffle(&mut rng);
        let failed = &disks[..rng.gen_range(0..=3)];
        erase_disks(&mut word, geometry, failed);
        let outcome = code.decode(&word);
        match &outcome {
            Ok(out) if *out == data => {}
            Err(Error::DecodeFailure { .. }) => {}
            _ => wrong += 1,
        }
        if failed.len() == 3 {
            let q = 1.0 - survival_oracle(geometry, failed);
            three.0 += 1;
            three.1 += outcome.is_err() as u64;
            three.2 += q;
            three.3 += q * (1.0 - q);
        }
    }
    let mixed_z = (three.1 as f64 - three.2).abs() / three.3.sqrt();

    // Margin-0 run: three data disks lost leaves exactly 25 of 40 blocks and
    // a square system.
    let mut failures = 0u64;
    for _ in 0..trials {
        let code = Rbec::new(CodeSpec::new(n, k, rng.gen()).unwrap()).unwrap();
        let data: Vec<Vec<u8>> = (0..k).map(|_| (0..16).map(|_| rng.gen()).collect()).collect();
        let mut word = code.encode(&data).unwrap();
        let mut disks: Vec<usize> = (0..geometry.data_disks).collect();
        disks.shuffle(&mut rng);
        erase_disks(&mut word, geometry, &disks[..3]);
        assert_eq!(word.present_indices().len(), 25);
        match code.decode(&word) {
            Ok(out) if out == data => {}
            Err(Error::DecodeFailure { .. }) => failures += 1,
            _ => wrong += 1,
        }
    }
    let expected = 1.0 - prob_tall_full_rank(25, 0).unwrap();
    let est = McEstimate::from_counts(failures, trials);
    let margin0_z = est.sigmas_from(expected);

    verdict(
        4,
        "round trip under erasure",
        wrong == 0 && margin0_z <= 4.0 && mixed_z <= 4.0,
        format!(
            "{wrong} wrong outputs; margin-0 failure rate {:.4} vs {expected:.4} ({margin0_z:.2} sigma); \
             random 3-disk losses {}/{} failed vs {:.1} expected by per-pattern oracle ({mixed_z:.2} sigma)",
            est.estimate, three.1, three.0, three.2
        ),
    );
}

fn criterion_05_expansion_write_minimality() {
    let tmp = TempDir::new().unwrap();
    let mut a = DiskArray::init(tmp.path(), example_geometry(), 32, 5).unwrap();
    let obj = object(25 * 32, 5);
    a.put(&obj).unwrap();
    let before = a.write_counters();

    a.remove_parity_disk(7).unwrap();
    let after_remove = a.write_counters();
    let remove_writes: u64 = before
        .iter()
        .zip(&after_remove)
        .filter(|(b, _)| b.0 != 7)
        .map(|(b, a)| a.1 - b.1)
        .sum();

    let new_id = a.add_parity_disk().unwrap();
    let after_add = a.write_counters();
    let mut other_writes = 0;
    let mut new_writes = 0;
    for &(id, count) in &after_add {
        match after_remove.iter().find(|(i, _)| *i == id) {
            Some(&(_, old)) => other_writes += count - old,
            None => new_writes += count,
        }
    }
    let intact = a.get().unwrap() == obj && a.scrub().unwrap() == ScrubOutcome::Consistent;
    verdict(
        5,
        "expansion write minimality",
        remove_writes == 0 && other_writes == 0 && new_writes == 5 && intact,
        format!(
            "remove-parity wrote {remove_writes} blocks elsewhere; add-parity wrote {new_writes} on disk {new_id} and {other_writes} elsewhere"
        ),
    );
}

fn criterion_06_expansion_matrix_shapes() {
    let shape = |a: &DiskArray| (a.code().generator().rows(), a.code().generator().cols());

    // Data disk: remove disk index 1, then add one back.
    let tmp = TempDir::new().unwrap();
    let mut a = DiskArray::init(tmp.path(), example_geometry(), 32, 6).unwrap();
    let obj = object(20 * 32, 6);
    a.put(&obj).unwrap();
    let mut data_shapes = vec![shape(&a)];
    let r0 = a.code().random_part().clone();
    a.remove_data_disk(1).unwrap();
    data_shapes.push(shape(&a));
    let r1 = a.code().random_part().clone();
    let kept: Vec<usize> = (0..5).chain(10..25).collect();
    let mut stable = columns_preserved(&r0, &kept, &r1, &(0..20).collect::<Vec<_>>());
    let top20 = (0..20).collect::<Vec<_>>();
    stable &= a.code().generator().select_rows(&top20).unwrap() == BitMatrix::identity(20).unwrap();
    a.add_data_disk().unwrap();
    data_shapes.push(shape(&a));
    let r2 = a.code().random_part().clone();
    stable &= columns_preserved(&r1, &top20, &r2, &top20);
    stable &= a.get().unwrap() == obj;

    // Parity disk: remove disk 7, then add one back.
    let tmp = TempDir::new().unwrap();
    let mut a = DiskArray::init(tmp.path(), example_geometry(), 32, 7).unwrap();
    a.put(&obj).unwrap();
    let mut parity_shapes = vec![shape(&a)];
    let r0 = a.code().random_part().clone();
    a.remove_parity_disk(7).unwrap();
    parity_shapes.push(shape(&a));
    let r1 = a.code().random_part().clone();
    let first10: Vec<usize> = (0..10).collect();
    stable &= r0.select_rows(&first10).unwrap() == r1;
    a.add_parity_disk().unwrap();
    parity_shapes.push(shape(&a));
    stable &= a.code().random_part().select_rows(&first10).unwrap() == r1;
    stable &= a.get().unwrap() == obj;

    let pass = data_shapes == [(40, 25), (35, 20), (40, 25)]
        && parity_shapes == [(40, 25), (35, 25), (40, 25)]
        && stable;
    verdict(
        6,
        "expansion matrix shapes",
        pass,
        format!("data {data_shapes:?}, parity {parity_shapes:?}, surviving entries stable: {stable}"),
    );
}

fn criterion_07_metrics_formulas() {
    let m = Rbec::new(CodeSpec::new(40, 25, 0).unwrap()).unwrap().metrics();
    verdict(
        7,
        "metrics formulas",
        m.fault_tolerance_estimate == 5 && m.storage_efficiency == 0.625,
        format!("t_estimate={} e={}", m.fault_tolerance_estimate, m.storage_efficiency),
    );
}

fn criterion_08_complexity_scaling() {
    let start = Instant::now();
    // Encode: (k, n-k, block_size); the work product spans 4x in both k and block size.
    let points = [(32, 64, 4096), (64, 64, 4096), (128, 64, 4096), (32, 64, 16384)];
    let ratios: Vec<f64> = points
        .iter()
        .map(|&(k, parity, bs)| {
            let code = Rbec::new(CodeSpec::new(k + parity, k, 8).unwrap()).unwrap();
            let data = vec![vec![0x5Au8; bs]; k];
            let counter = XorCounter::new();
            code.encode_with(&data, Exec::default(), &counter).unwrap();
            counter.stats().word_xors as f64 / (k * parity * (bs / WORD_BYTES)) as f64
        })
        .collect();
    let encode_ok = ratios.iter().all(|r| (r / ratios[0] - 1.0).abs() <= 0.10);

    // Decode: all data lost, recovered from k + 10 parity blocks.
    let per_k3: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&k| {
            let g = ArrayGeometry::new(k, k + 10, 1).unwrap();
            let r = bench_decode(g, (k * 64) as u64, 1, 8, Exec::default()).unwrap();
            r.pivot_steps as f64 / (k * k * k) as f64
        })
        .collect();
    let spread = per_k3.iter().cloned().fold(f64::MIN, f64::max) / per_k3.iter().cloned().fold(f64::MAX, f64::min);
    let elapsed = start.elapsed();
    verdict(
        8,
        "complexity scaling",
        encode_ok && spread <= 2.0 && elapsed < Duration::from_secs(300),
        format!("encode xor/(k(n-k)words) = {ratios:.4?}; decode pivot_steps/k^3 = {per_k3:.3?} (spread {spread:.2}); {elapsed:.1?}"),
    );
}

fn criterion_09_systematic_fast_path() {
    let tmp = TempDir::new().unwrap();
    let mut a = DiskArray::init(tmp.path(), example_geometry(), 64, 9).unwrap();
    let obj = object(1500, 9);
    a.put(&obj).unwrap();
    let counter = XorCounter::new();
    let (got, report) = a.get_with(Exec::default(), &counter).unwrap();
    let xors = counter.stats().word_xors + counter.stats().block_xors;
    verdict(
        9,
        "systematic fast path",
        got == obj && xors == 0 && report.fast_path,
        format!("identical={} xor ops={xors}", got == obj),
    );
}

fn criterion_10_persistence() {
    let geometry = example_geometry();
    let tmp = TempDir::new().unwrap();
    let obj = object(25 * 16 - 3, 10);
    let (reference, g_before) = {
        let mut a = DiskArray::init(tmp.path(), geometry, 16, 10).unwrap();
        a.put(&obj).unwrap();
        (a.code().clone(), a.code().generator().clone())
    };
    let a = DiskArray::open(tmp.path()).unwrap();
    let same_g = *a.code().generator() == g_before;

    // Criterion 3 on the reopened code.
    let orthogonal = a
        .code()
        .generator()
        .transpose()
        .multiply(&a.code().parity_check())
        .unwrap()
        .is_zero();

    // Criterion 9 on the reopened array.
    let counter = XorCounter::new();
    let (got, _) = a.get_with(Exec::default(), &counter).unwrap();
    let fast = got == obj && counter.stats().word_xors == 0;

    // Criterion 4 on the reopened array: every 1-, 2- and 3-disk failure
    // pattern decodes identically or fails, exactly as the pre-close code does.
    let stored = a.read_codeword().unwrap();
    let mut patterns = 0;
    let mut mismatches = 0;
    let disks = geometry.disks();
    for mask in 1u32..(1 << disks) {
        if mask.count_ones() > 3 {
            continue;
        }
        let failed: Vec<usize> = (0..disks).filter(|d| mask >> d & 1 == 1).collect();
        let mut word = stored.clone();
        erase_disks(&mut word, geometry, &failed);
        let reopened = a.code().decode(&word);
        let before = reference.decode(&word);
        let ok = match (&reopened, &before) {
            (Ok(x), Ok(y)) => x == y && x.concat()[..obj.len()] == obj[..],
            (Err(Error::DecodeFailure { .. }), Err(Error::DecodeFailure { .. })) => true,
            _ => false,
        };
        patterns += 1;
        mismatches += !ok as usize;
    }
    verdict(
        10,
        "persistence",
        same_g && orthogonal && fast && mismatches == 0 && patterns == 92,
        format!("generator identical={same_g}, orthogonal={orthogonal}, fast path={fast}, {mismatches} of {patterns} failure patterns differ"),
    );
}

fn main() {
    // Sanity link between criteria 1 and 4: S(25,25) and S(30,30) agree to 1e-7.
    let gap = (prob_square_nonsingular(25).unwrap() - prob_square_nonsingular(30).unwrap()).abs();
    assert!(gap < 1e-7, "S(25,25) and S(30,30) differ by {gap}");

    let criteria: [fn(); 10] = [
        criterion_01_rank_probability_constant,
        criterion_02_tall_matrix_reliability,
        criterion_03_orthogonality,
        criterion_04_round_trip_under_erasure,
        criterion_05_expansion_write_minimality,
        criterion_06_expansion_matrix_shapes,
        criterion_07_metrics_formulas,
        criterion_08_complexity_scaling,
        criterion_09_systematic_fast_path,
        criterion_10_persistence,
    ];
    let failed = criteria
        .iter()
        .filter(|c| std::panic::catch_unwind(**c).is_err())
        .count();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
