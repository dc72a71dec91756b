use std::collections::BTreeSet;
use std::io::Cursor;

use geocurate::geo::LatLon;
use geocurate::grouping::{
    compute_grouping, compute_grouping_seeded, load_grouping, map_country_to_class, ClassGrouping, CountryStat,
    GroupingError, GroupingSeeds,
};
use geocurate::manifest::CountryCode;
use geocurate::synthetic::{toy_grouping_text, TOY_CODES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cc(s: &str) -> CountryCode {
    s.parse().unwrap()
}

fn stat(code: &str, count: u64, lat: f64, lon: f64) -> CountryStat {
    CountryStat {
        code: cc(code),
        count,
        centroid: LatLon::new(lat, lon),
    }
}

fn load(text: &str, expected: Option<&[CountryCode]>) -> Result<ClassGrouping, GroupingError> {
    load_grouping(Cursor::new(text), expected)
}

#[test]
fn vatican_shares_a_class_with_italy() {
    let g = load("# grouping v1\nIT 5 IT+VA\nVA 5 IT+VA\nFR 0 FR\nDE 1 DE\nES 2 ES\nPT 3 PT\nAT 4 AT\n", None).unwrap();
    assert_eq!(g.k(), 6);
    assert_eq!(g.class_of(cc("IT")), Some(5));
    assert_eq!(g.class_of(cc("VA")), Some(5));
    assert_eq!(map_country_to_class(cc("IT"), &g).unwrap(), 5);
}

#[test]
fn missing_country_is_named() {
    let expected = [cc("IT"), cc("VA"), cc("SM")];
    let err = load("IT 0 IT+VA\nVA 0 IT+VA\n", Some(&expected)).unwrap_err();
    assert!(matches!(err, GroupingError::MissingCountry(c) if c == cc("SM")));
    assert!(err.to_string().contains("SM"));
}

#[test]
fn gaps_duplicates_and_labels_are_rejected() {
    assert!(matches!(load("IT 0 IT\nFR 2 FR\n", None), Err(GroupingError::EmptyClass(1))));
    assert!(matches!(load("IT 0 IT\nIT 1 X\n", None), Err(GroupingError::Duplicate(_))));
    assert!(matches!(
        load("IT 0 A\nVA 0 B\n", None),
        Err(GroupingError::InconsistentLabel { class: 0, .. })
    ));
    assert!(matches!(load("IT 0\n", None), Err(GroupingError::Parse { line: 1, .. })));
    assert!(matches!(load("ITA 0 x\n", None), Err(GroupingError::Parse { .. })));
}

#[test]
fn unknown_code_lookup_errors() {
    let g = load(&toy_grouping_text(), Some(&TOY_CODES.map(cc))).unwrap();
    assert_eq!(g.k(), 7);
    assert!(matches!(map_country_to_class(cc("ZZ"), &g), Err(GroupingError::UnknownCountry(_))));
}

#[test]
fn file_round_trip() {
    let g = load(&toy_grouping_text(), None).unwrap();
    let mut buf = Vec::new();
    g.write_to(&mut buf, &["note"]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# grouping v1"));
    assert_eq!(load(&text, None).unwrap(), g);
}

#[test]
fn identity_when_k_equals_country_count() {
    let stats = vec![stat("AA", 50, 0.0, 0.0), stat("BB", 60, 10.0, 10.0), stat("CC", 70, -5.0, 40.0)];
    let g = compute_grouping(&stats, 3, 10).unwrap();
    assert_eq!(g.k(), 3);
    for c in ["AA", "BB", "CC"] {
        assert_eq!(g.members(g.class_of(cc(c)).unwrap()), vec![cc(c)]);
    }
}

#[test]
fn hand_trace_small_country_joins_nearest() {
    // CC (count 1) sits 1 degree from AA and 20 degrees from BB.
    let stats = vec![stat("AA", 10, 0.0, 0.0), stat("BB", 10, 0.0, 20.0), stat("CC", 1, 0.0, 1.0)];
    let run = compute_grouping_seeded(&stats, 2, 0, &GroupingSeeds::default()).unwrap();
    let g = &run.grouping;
    assert_eq!(g.class_of(cc("CC")), g.class_of(cc("AA")));
    assert_ne!(g.class_of(cc("BB")), g.class_of(cc("AA")));
    assert_eq!(run.merges.len(), 1);
    assert_eq!((run.merges[0].from, run.merges[0].into), (cc("CC"), cc("AA")));
    assert!((run.merges[0].distance_km - 111.19).abs() < 0.1);
    assert_eq!(run.class_counts, vec![11, 10]);
}

#[test]
fn k_larger_than_input_or_zero_errors() {
    let stats = vec![stat("AA", 1, 0.0, 0.0)];
    assert!(matches!(compute_grouping(&stats, 2, 0), Err(GroupingError::TooManyClasses { .. })));
    assert!(matches!(compute_grouping(&stats, 0, 0), Err(GroupingError::ZeroClasses)));
}

#[test]
fn seeds_and_sealed_countries_are_respected() {
    let stats = vec![
        stat("IT", 100, 42.0, 12.0),
        stat("VA", 1, 41.9, 12.4),
        stat("SM", 2, 43.9, 12.4),
        stat("US", 1, 39.0, -98.0),
        stat("CA", 50, 56.0, -100.0),
        stat("MX", 40, 23.0, -102.0),
    ];
    let seeds = GroupingSeeds {
        groups: vec![vec![cc("IT"), cc("VA")]],
        sealed: [cc("US")].into_iter().collect(),
    };
    let run = compute_grouping_seeded(&stats, 3, 0, &seeds).unwrap();
    let g = &run.grouping;
    assert_eq!(g.class_of(cc("IT")), g.class_of(cc("VA")));
    assert_eq!(g.members(g.class_of(cc("US")).unwrap()), vec![cc("US")]);
    assert!(run.merges.iter().all(|m| m.from != cc("US") && m.into != cc("US")));
}

fn random_stats(rng: &mut ChaCha8Rng) -> Vec<CountryStat> {
    let n = rng.random_range(1..60);
    let mut codes = BTreeSet::new();
    while codes.len() < n {
        let a = rng.random_range(b'A'..=b'Z') as char;
        let b = rng.random_range(b'A'..=b'Z') as char;
        codes.insert(format!("{a}{b}"));
    }
    codes
        .into_iter()
        .map(|c| {
            stat(
                &c,
                rng.random_range(0..5000),
                rng.random_range(-80.0..80.0),
                rng.random_range(-180.0..180.0),
            )
        })
        .collect()
}

fn check_partition(stats: &[CountryStat], k: usize) {
    let run = compute_grouping_seeded(stats, k, 100, &GroupingSeeds::default()).unwrap();
    let g = &run.grouping;
    assert_eq!(g.k(), k);
    let mut seen = BTreeSet::new();
    for c in 0..k as u32 {
        let m = g.members(c);
        assert!(!m.is_empty());
        for code in m {
            assert!(seen.insert(code));
        }
    }
    let all: BTreeSet<_> = stats.iter().map(|s| s.code).collect();
    assert_eq!(seen, all);
    let total: u64 = stats.iter().map(|s| s.count).sum();
    assert_eq!(run.class_counts.iter().sum::<u64>(), total);
    // The smallest class never shrinks as merges proceed.
    let mut prev = stats.iter().map(|s| s.count).min().unwrap();
    for m in &run.merges {
        assert!(m.min_count >= prev);
        prev = m.min_count;
    }
}

#[test]
fn random_instances_partition_into_k_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let stats = random_stats(&mut rng);
        let k = rng.random_range(1..=stats.len());
        check_partition(&stats, k);
    }
}

#[test]
fn deterministic_across_worker_counts_and_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stats = random_stats(&mut rng);
    let k = (stats.len() / 3).max(1);
    let reference = compute_grouping(&stats, k, 0).unwrap();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let mut shuffled = stats.clone();
        shuffled.reverse();
        let g = pool.install(|| compute_grouping(&shuffled, k, 0).unwrap());
        assert_eq!(g, reference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn grouping_is_a_partition(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = random_stats(&mut rng);
        let k = 1 + ((stats.len() - 1) as f64 * frac) as usize;
        check_partition(&stats, k);
    }
}
