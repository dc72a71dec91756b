//! Top-k and balanced accuracy for every fusion strategy in a prediction file.
//!
//! Reads the checked-in fixture predictions by default.
//!
//! `cargo run --example eval_report [-- PREDICTIONS.jsonl]`

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use geocurate::eval::{eval_report, strategy_rankings, Confusion, Method, NamedSet, PredictionFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/predictions.jsonl"));
    let file = PredictionFile::read_from(BufReader::new(File::open(&path)?))?;
    let n = file.header.n_classes;
    let mut methods = Vec::new();
    for s in file.available_strategies() {
        methods.push(Method {
            name: s.as_str().to_string(),
            predictions: strategy_rankings(&file, s)?,
        });
    }
    let report = eval_report(&methods, &[NamedSet::all()], n);
    println!("{}", report.to_table());

    let hand = Confusion::from_matrix(vec![vec![8, 1, 1], vec![2, 6, 2], vec![0, 0, 10]]);
    println!("hand-built confusion matrix: balanced accuracy {}", hand.balanced_accuracy()?);
    Ok(())
}
