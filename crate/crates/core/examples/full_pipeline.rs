//! Runs every stage on a generated toy dataset and prints the summaries.
//!
//! `cargo run --release --example full_pipeline [-- OUT_DIR [N]]`

use std::env;
use std::path::PathBuf;

use geocurate::config::PipelineConfig;
use geocurate::grouping::GroupingSeeds;
use geocurate::pipeline::{self, StageIo};
use geocurate::synthetic::write_fixture_set;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| env::temp_dir().join("geocurate-full-pipeline"));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let set = write_fixture_set(&dir, n, 42)?;
    let cfg = PipelineConfig::load(&set.config, &[])?;
    let io = StageIo::default();

    let q = pipeline::gen_queries(&cfg, None, true, false)?;
    println!("queries: {q:?}");
    let a = pipeline::assign_country(&cfg, &io)?;
    println!("assign: {a:?}");
    let f = pipeline::filter(&cfg, &io)?;
    println!("filter: kept {} of {}, rejected {:?}", f.kept, f.total, f.rejected);
    let nz = pipeline::normalize(&cfg, &io)?;
    println!("normalize: {nz:?}");
    let g = pipeline::group(&cfg, &io, &GroupingSeeds::default())?;
    println!("group: {g:?}");
    let s = pipeline::split(&cfg, &io)?;
    println!("split: {s:?}");
    let w = pipeline::weights(&cfg, &io)?;
    println!("weights: {} classes, {} excluded", w.n_classes, w.excluded.len());
    let c = pipeline::crop_plans(&cfg, &io, None)?;
    println!("crop plans: {c}");
    let e = pipeline::eval(&cfg, &io)?;
    println!("{}", e.to_table());
    pipeline::report(&cfg, &io)?;
    println!("outputs in {}", cfg.work_dir().display());
    Ok(())
}
