//! Per-country train/val/test split, inverse-square-root class weights and
//! the weighted cross-entropy they feed.
//!
//! `cargo run --example split_and_weights`

use geocurate::dataset_ops::{
    class_counts, class_weights, split_counts, split_dataset, weighted_ce, LossSample, SplitConfig,
};
use geocurate::manifest::{Split, Status};
use geocurate::synthetic::{toy_boundaries, toy_dataset, toy_grouping};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SplitConfig {
        seed: 7,
        ..Default::default()
    };
    for n in [1, 2, 3, 50, 51, 100, 829_345] {
        let c = split_counts(n, &cfg.ratios);
        println!("n={n:7}: train {} / val {} / test {}", c.train, c.val, c.test);
    }

    let world = toy_boundaries();
    let grouping = toy_grouping();
    let mut records = toy_dataset(600, 3).manifest.records;
    for r in &mut records {
        match world.locate(r.lat, r.lon, 25.0).code() {
            Some(code) => {
                r.country_code = Some(code);
                r.class_id = grouping.class_of(code);
                r.status = Status::Kept;
            }
            None => r.reject(geocurate::manifest::RejectionReason::UnassignableGps),
        }
    }
    let split = split_dataset(&records, &cfg)?;
    let counts = class_counts(&split, grouping.k(), Some(Split::Train));
    let weights = class_weights(&counts)?;
    for e in &weights.entries {
        println!(
            "class {} {:8} n={:4} w={:.5}",
            e.class,
            grouping.label(e.class).unwrap_or("?"),
            e.n,
            e.w
        );
    }

    let sample = LossSample {
        scores: vec![0.1, 0.6, 0.05, 0.05, 0.1, 0.05, 0.05],
        target: 1,
    };
    let loss = weighted_ce(&sample, &weights)?;
    println!("weighted loss for p=0.6 on class 1: {:.6}", loss.value);
    Ok(())
}
