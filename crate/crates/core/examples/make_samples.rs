//! Regenerate the bundled confidence-training samples:
//!
//! ```text
//! cargo run -p convkg-core --example make_samples -- data data/train/questions.jsonl data/model/samples.tsv
//! ```
//!
//! Each question yields one sample per backend, labelled +1 when that
//! backend's answer set equals the gold set.

use std::path::PathBuf;

use convkg_core::arbiter::{format_samples, AdaBoostModel, Stump, FEATURE_DIM};
use convkg_core::eval::load_benchmark;
use convkg_core::{AssetPaths, Engine};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [data_dir, questions, out] = args.as_slice() else {
        return Err("usage: make_samples <data-dir> <questions.jsonl> <samples.tsv>".into());
    };
    // Context turns need some model; "not failed" is enough to replay them.
    let bootstrap = AdaBoostModel {
        stumps: vec![Stump { feature: FEATURE_DIM - 1, threshold: 0.5, polarity: -1, alpha: 1.0 }],
        rounds: 1,
    };
    let engine = Engine::load_with_model(&AssetPaths::new(PathBuf::from(data_dir), "en"), bootstrap)?;
    let mut samples = Vec::new();
    for item in load_benchmark(questions.as_ref())? {
        samples.extend(engine.labelled_samples(&item.context, &item.question, &item.gold));
    }
    std::fs::write(out, format_samples(&samples))?;
    let positives = samples.iter().filter(|(_, y)| *y > 0).count();
    println!("{} samples ({} positive) written to {out}", samples.len(), positives);
    Ok(())
}
