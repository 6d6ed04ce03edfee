use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use rbec::code::RELIABILITY_MARGIN;
use rbec::randmat::{prob_tall_full_rank, McEstimate};
use rbec::{ArrayGeometry, CodeSpec, DiskArray, Error, Rbec, StoreError};

/// k + 10 surviving blocks out of (40, 25): erase five random blocks.
#[test]
fn ten_blocks_of_margin_recover_reliably() {
    let (n, k) = (40, 25);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 10_000;
    let mut failures = 0;
    let mut expected = 0.0;
    for _ in 0..trials {
        let code = Rbec::new(CodeSpec::new(n, k, rng.gen()).unwrap()).unwrap();
        let data: Vec<Vec<u8>> = (0..k).map(|_| vec![rng.gen(); 8]).collect();
        let mut word = code.encode(&data).unwrap();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let erased = &idx[..n - k - RELIABILITY_MARGIN];
        for &i in erased {
            word.erase(i);
        }
        let lost_data = erased.iter().filter(|&&i| i < k).count();
        if lost_data > 0 {
            expected += 1.0 - prob_tall_full_rank(lost_data, RELIABILITY_MARGIN).unwrap();
        }
        match code.decode(&word) {
            Ok(out) => assert_eq!(out, data),
            Err(Error::DecodeFailure { .. }) => failures += 1,
            Err(e) => panic!("unexpected {e}"),
        }
    }
    let est = McEstimate::from_counts(trials - failures, trials);
    let analytic = 1.0 - expected / trials as f64;
    assert!(analytic >= 0.999);
    assert!(est.sigmas_from(analytic) <= 4.0, "{est:?} vs {analytic}");
    assert!(est.estimate >= 0.998, "{est:?}");
}

/// Failing t_estimate whole disks on a margin-heavy array: nearly every
/// seed must still return the object.
#[test]
fn failure_drills_on_disk() {
    let geometry = ArrayGeometry::new(10, 13, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let object: Vec<u8> = (0..300).map(|_| rng.gen()).collect();
    let mut recovered = 0;
    for seed in 0..100 {
        let tmp = TempDir::new().unwrap();
        let mut a = DiskArray::init(tmp.path(), geometry, 32, seed).unwrap();
        a.put(&object).unwrap();
        let t = a.metrics().fault_tolerance_estimate;
        assert_eq!(t, 3);
        let mut disks = a.disk_order();
        disks.shuffle(&mut rng);
        for &d in &disks[..t] {
            a.fail_disk(d).unwrap();
        }
        match a.get() {
            Ok(out) => {
                assert_eq!(out, object);
                recovered += 1;
                for &d in &disks[..t] {
                    a.repair_disk(d).unwrap();
                }
                assert!(a.failed_disk_ids().is_empty());
                assert_eq!(a.get().unwrap(), object);
            }
            Err(StoreError::Unrecoverable(_)) => {}
            Err(e) => panic!("unexpected {e}"),
        }
    }
    assert!(recovered >= 99, "{recovered}/100");
}
