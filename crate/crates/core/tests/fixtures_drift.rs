//! Checked-in fixture files must match what the generators produce.
//!
//! Regenerate with `GEOCURATE_BLESS=1 cargo test --test fixtures_drift`.

use std::fs;
use std::path::{Path, PathBuf};

use geocurate::grouping::{compute_grouping_seeded, load_country_stats, GroupingSeeds};
use geocurate::synthetic::{fixture_config, fixture_files};

pub const FIXTURE_RECORDS: usize = 500;
pub const FIXTURE_SEED: u64 = 42;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn check(path: &Path, expected: &str) {
    if std::env::var_os("GEOCURATE_BLESS").is_some() {
        fs::write(path, expected).unwrap();
        return;
    }
    let actual = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        actual == expected,
        "{} is stale; rerun with GEOCURATE_BLESS=1",
        path.display()
    );
}

#[test]
fn toy_fixture_files_are_current() {
    let dir = root().join("tests/fixtures");
    for (name, text) in fixture_files(FIXTURE_RECORDS, FIXTURE_SEED) {
        check(&dir.join(name), &text);
    }
    check(&dir.join("geocurate.toml"), &fixture_config(false));
}

#[test]
fn canonical_grouping_is_current() {
    let table = root().join("data/country_centroids.tsv");
    let stats = load_country_stats(std::io::BufReader::new(fs::File::open(table).unwrap())).unwrap();
    assert_eq!(stats.len(), 243);
    let code = |s: &str| s.parse().unwrap();
    let seeds = GroupingSeeds {
        groups: vec![vec![code("IT"), code("VA")], vec![code("EG"), code("SD")]],
        sealed: [code("US")].into_iter().collect(),
    };
    let run = compute_grouping_seeded(&stats, 61, 0, &seeds).unwrap();
    let mut out = Vec::new();
    run.grouping
        .write_to(
            &mut out,
            &[
                "pinned: IT+VA, EG+SD; US kept alone",
                "remaining classes from greedy merging of data/country_centroids.tsv",
            ],
        )
        .unwrap();
    check(&root().join("data/grouping_61.txt"), &String::from_utf8(out).unwrap());
}
