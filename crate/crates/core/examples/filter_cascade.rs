//! Runs the date, grey, scene and face filters over synthetic evidence.
//!
//! `cargo run --example filter_cascade`

use std::io::Cursor;

use geocurate::filters::{cascade_report, run_cascade, EvidenceStore, FilterConfig, SceneTaxonomy};
use geocurate::synthetic::{toy_blacklist, toy_dataset, toy_taxonomy_tsv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = toy_dataset(1000, 7);
    let mut taxonomy = SceneTaxonomy::load(Cursor::new(toy_taxonomy_tsv()))?;
    taxonomy.load_blacklist(Cursor::new(toy_blacklist()))?;

    let mut evidence = EvidenceStore::new();
    evidence.load_scene(Cursor::new(&ds.scene_evidence), "scene")?;
    evidence.load_faces(Cursor::new(&ds.face_evidence), "faces")?;
    evidence.load_grey(Cursor::new(&ds.grey_evidence), "grey")?;

    let cfg = FilterConfig::default();
    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for r in &ds.manifest.records {
        match run_cascade(r, evidence.get(&r.id), &taxonomy, &cfg) {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                if errors.len() < 3 {
                    println!("needs attention: {e}");
                }
                errors.push(e);
            }
        }
    }
    let mut report = cascade_report(&outcomes);
    for e in &errors {
        report.observe_error(e);
    }
    println!("{}", report.to_json());

    let first_kept = outcomes.iter().find(|o| o.kept).expect("something survives");
    println!(
        "example survivor {}: urban {:.3}, face ratio {:.4}",
        first_kept.id,
        first_kept.urban_probability.unwrap_or(f64::NAN),
        first_kept.face_ratio.unwrap_or(f64::NAN)
    );
    Ok(())
}
