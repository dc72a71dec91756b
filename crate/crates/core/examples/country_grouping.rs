//! Computes a K-class country grouping with the greedy merge rule.
//!
//! Reads the bundled centroid table, pins IT+VA and EG+SD together, keeps US
//! as a class of its own and merges the rest down to 61 classes. The result is
//! the canonical `data/grouping_61.txt`; pass a path to write it elsewhere.
//!
//! `cargo run --example country_grouping [-- OUT_FILE]`

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::Path;

use geocurate::grouping::{compute_grouping_seeded, load_country_stats, GroupingSeeds};
use geocurate::manifest::CountryCode;

fn code(s: &str) -> CountryCode {
    s.parse().expect("valid code")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/country_centroids.tsv");
    let stats = load_country_stats(BufReader::new(File::open(&table)?))?;
    let seeds = GroupingSeeds {
        groups: vec![vec![code("IT"), code("VA")], vec![code("EG"), code("SD")]],
        sealed: BTreeSet::from([code("US")]),
    };
    let run = compute_grouping_seeded(&stats, 61, 0, &seeds)?;

    eprintln!("{} countries -> {} classes after {} merges", stats.len(), run.grouping.k(), run.merges.len());
    for m in run.merges.iter().take(5) {
        eprintln!("  merge {} into {} ({:.0} km)", m.from, m.into, m.distance_km);
    }
    let ae = run.grouping.class_of(code("AE")).expect("AE is grouped");
    eprintln!("class holding AE: {}", run.grouping.label(ae).unwrap_or("?"));

    let comments = [
        "pinned: IT+VA, EG+SD; US kept alone",
        "remaining classes from greedy merging of data/country_centroids.tsv",
    ];
    match std::env::args().nth(1) {
        Some(path) => {
            let mut f = File::create(&path)?;
            run.grouping.write_to(&mut f, &comments)?;
            f.flush()?;
        }
        None => run.grouping.write_to(io::stdout().lock(), &comments)?,
    }
    Ok(())
}
