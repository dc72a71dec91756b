mod common;

use std::collections::BTreeMap;
use std::io::Cursor;

use geocurate::dataset_ops::{
    class_counts, class_weights, split_counts, split_dataset, weighted_ce, weighted_ce_batch, DatasetError,
    LossSample, SplitConfig, SplitRatios, WeightTable,
};
use geocurate::manifest::{CountryCode, ImageRecord, RejectionReason, Source, Split};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two percent rounded up, as an integer ceiling over fiftieths.
fn two_percent_up(n: usize) -> usize {
    n.div_ceil(50)
}

fn records(per_country: &[(&str, usize)]) -> Vec<ImageRecord> {
    let mut out = Vec::new();
    for &(code, n) in per_country {
        for i in 0..n {
            let mut r = ImageRecord::new(format!("{code}-{i:05}"), Source::Flickr, 0.0, 0.0, 10, 10, "x.jpg");
            r.country_code = Some(code.parse().unwrap());
            r.class_id = Some((code.as_bytes()[0] - b'A') as u32 % 3);
            out.push(r);
        }
    }
    out
}

#[test]
fn ratios_parse_exactly() {
    assert_eq!(SplitRatios::parse("0.96,0.02,0.02").unwrap(), SplitRatios::default());
    assert_eq!(
        SplitRatios::parse("0.8,0.1,0.1").unwrap(),
        SplitRatios { train: 8, val: 1, test: 1 }
    );
    assert!(SplitRatios::parse("0.9,0.1,0.1").is_err());
    assert!(SplitRatios::parse("0.9,0.1").is_err());
    assert!(SplitRatios::parse("-0.1,0.6,0.5").is_err());
}

#[test]
fn per_country_counts_for_n_up_to_500() {
    let r = SplitRatios::default();
    for n in 1..=500 {
        let c = split_counts(n, &r);
        let test = two_percent_up(n).min(n);
        let val = two_percent_up(n).min(n - test);
        assert_eq!((c.test, c.val, c.train), (test, val, n - test - val), "n={n}");
        if n >= 2 {
            assert_eq!((c.test, c.val), (two_percent_up(n), two_percent_up(n)), "n={n}");
        }
    }
    // A single image cannot be given two held-out slots; train stays non-negative.
    let one = split_counts(1, &r);
    assert_eq!((one.train, one.val, one.test), (0, 0, 1));
    let hundred = split_counts(100, &r);
    assert_eq!((hundred.train, hundred.val, hundred.test), (96, 2, 2));
    assert_eq!(split_counts(0, &r).test, 0);
}

#[test]
fn split_labels_match_counts_per_country() {
    let recs = records(&[("IT", 137), ("FR", 12), ("VA", 1), ("US", 500)]);
    let out = split_dataset(&recs, &SplitConfig { seed: 3, ..Default::default() }).unwrap();
    let mut tally: BTreeMap<(CountryCode, Split), usize> = BTreeMap::new();
    for r in &out {
        *tally.entry((r.country_code.unwrap(), r.split.unwrap())).or_default() += 1;
    }
    for (code, n) in [("IT", 137), ("FR", 12), ("VA", 1), ("US", 500)] {
        let c = split_counts(n, &SplitRatios::default());
        let code: CountryCode = code.parse().unwrap();
        let get = |s| tally.get(&(code, s)).copied().unwrap_or(0);
        assert_eq!((get(Split::Train), get(Split::Val), get(Split::Test)), (c.train, c.val, c.test));
    }
}

#[test]
fn permutation_and_worker_count_invariance() {
    let recs = records(&[("AE", 90), ("EG", 260), ("FJ", 7), ("SD", 41)]);
    let config = SplitConfig { seed: 11, ..Default::default() };
    let label = |rs: &[ImageRecord]| -> BTreeMap<String, Split> {
        split_dataset(rs, &config).unwrap().into_iter().map(|r| (r.id, r.split.unwrap())).collect()
    };
    let reference = label(&recs);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for threads in [1, 2, 3] {
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(|| label(&shuffled)), reference);
    }
    let other = split_dataset(&recs, &SplitConfig { seed: 12, ..config }).unwrap();
    assert!(other.iter().zip(split_dataset(&recs, &config).unwrap()).any(|(a, b)| a.split != b.split));
}

#[test]
fn rejected_records_pass_through_and_missing_country_errors() {
    let mut recs = records(&[("IT", 5)]);
    let mut gone = ImageRecord::new("zz", Source::Unsplash, 0.0, 0.0, 1, 1, "z.jpg");
    gone.reject(RejectionReason::Grey);
    recs.push(gone.clone());
    let out = split_dataset(&recs, &SplitConfig::default()).unwrap();
    assert_eq!(out.last().unwrap(), &gone);
    recs.push(ImageRecord::new("nocountry", Source::Flickr, 0.0, 0.0, 1, 1, "n.jpg"));
    assert!(matches!(split_dataset(&recs, &SplitConfig::default()), Err(DatasetError::MissingCountry(id)) if id == "nocountry"));
}

#[test]
fn weights_are_inverse_square_roots() {
    let t = class_weights(&[4, 829_345, 1, 0]).unwrap();
    assert_eq!(t.weight(0), Some(0.5));
    assert!((t.weight(1).unwrap() - 1.0981e-3).abs() < 1e-7);
    assert_eq!(t.weight(2), Some(1.0));
    assert_eq!(t.weight(3), None);
    assert_eq!(t.excluded, vec![3]);
    assert_eq!(t.n_classes, 4);
    assert!(matches!(class_weights(&[0, 0]), Err(DatasetError::AllZero)));

    let r = t.rescaled_to_mean_one();
    let mean = r.entries.iter().map(|e| e.w).sum::<f64>() / r.entries.len() as f64;
    assert!((mean - 1.0).abs() < 1e-12 && r.rescaled);
}

#[test]
fn weight_file_round_trips() {
    let t = class_weights(&[4, 829_345, 0, 17, 1]).unwrap();
    let mut buf = Vec::new();
    t.write_to(&mut buf, &["from train split"]).unwrap();
    let back = WeightTable::read_from(Cursor::new(&buf)).unwrap();
    assert_eq!(back, t);
    assert!(WeightTable::read_from(Cursor::new("1 4 0.5\n0 1 1.0\n")).is_err());
    assert!(WeightTable::read_from(Cursor::new("0 4\n")).is_err());
}

#[test]
fn class_counts_respect_split_and_status() {
    let recs = split_dataset(&records(&[("AA", 50), ("BB", 50), ("CC", 3)]), &SplitConfig::default()).unwrap();
    let all = class_counts(&recs, 3, None);
    assert_eq!(all, vec![50, 50, 3]);
    let parts: Vec<Vec<u64>> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .map(|s| class_counts(&recs, 3, Some(s)))
        .collect();
    for c in 0..3 {
        assert_eq!(parts.iter().map(|p| p[c]).sum::<u64>(), all[c]);
    }
}

#[test]
fn loss_hand_cases() {
    let t = class_weights(&[4, 1]).unwrap();
    let certain = LossSample { scores: vec![1.0, 0.0], target: 0 };
    assert_eq!(weighted_ce(&certain, &t).unwrap().value, 0.0);
    let e = (-1.0f64).exp();
    let s = LossSample { scores: vec![e, 1.0 - e], target: 0 };
    assert!((weighted_ce(&s, &t).unwrap().value - 0.5).abs() < 1e-12);
    let zero = LossSample { scores: vec![0.0, 1.0], target: 0 };
    let l = weighted_ce(&zero, &t).unwrap();
    assert_eq!(l.clamped, 1);
    assert!(l.value.is_finite() && l.value > 0.0);
}

#[test]
fn loss_rejects_bad_samples() {
    let t = class_weights(&[4, 0, 9]).unwrap();
    assert!(weighted_ce(&LossSample { scores: vec![0.5, 0.6], target: 0 }, &t).is_err());
    assert!(weighted_ce(&LossSample { scores: vec![1.0], target: 3 }, &t).is_err());
    assert!(matches!(
        weighted_ce(&LossSample { scores: vec![0.2, 0.5, 0.3], target: 1 }, &t),
        Err(DatasetError::UnknownClass(1))
    ));
}

fn random_sample(rng: &mut ChaCha8Rng, k: usize) -> LossSample {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.001..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    LossSample {
        scores: raw.iter().map(|v| v / sum).collect(),
        target: rng.random_range(0..k) as u32,
    }
}

#[test]
fn batch_loss_matches_term_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let counts: Vec<u64> = (0..7).map(|_| rng.random_range(1..100_000)).collect();
    let t = class_weights(&counts).unwrap();
    let samples: Vec<LossSample> = (0..1000).map(|_| random_sample(&mut rng, 7)).collect();
    let terms: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (1.0 / (counts[s.target as usize] as f64).sqrt(), s.scores[s.target as usize]))
        .collect();
    let got = weighted_ce_batch(&samples, &t).unwrap().value;
    assert!((got - common::loss_oracle(&terms)).abs() < 1e-9);
}

proptest! {
    #[test]
    fn split_counts_sum_to_n(n in 0usize..100_000, v in 0u64..50, te in 0u64..50) {
        let r = SplitRatios { train: 100 - v - te, val: v, test: te };
        let c = split_counts(n, &r);
        prop_assert_eq!(c.train + c.val + c.test, n);
        let up = |part: u64| (part as usize * n).div_ceil(100);
        if up(te) + up(v) <= n {
            prop_assert_eq!((c.test, c.val), (up(te), up(v)));
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = class_weights(&[3, 30, 300]).unwrap();
        let s = random_sample(&mut rng, 3);
        prop_assert!(weighted_ce(&s, &t).unwrap().value >= 0.0);
    }
}
