//! Generates a seeded multi-scene dataset, runs the whole pipeline with file
//! outputs, and scores the clusters.
//!
//!     cargo run --release --example synthetic_end_to_end -- [seed] [min_pairs]

use rotatematch::evaluation::evaluate;
use rotatematch::pipeline::{dataset_dir, run_dataset};
use rotatematch::scene_graph::load_clustering;
use rotatematch::synthetic::{generate_dataset, SynthConfig};
use rotatematch::PipelineConfig;

fn main() -> rotatematch::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut config = PipelineConfig::default();
    if let Some(n) = args.next().and_then(|s| s.parse().ok()) {
        config.min_pairs = n;
    }

    let root = tempfile::tempdir().expect("temp dir");
    let (manifest, truth) = generate_dataset(&SynthConfig { seed, ..SynthConfig::default() }, &root.path().join("data"))?;
    let out = dataset_dir(&root.path().join("out"), &manifest.dataset_id);

    let started = std::time::Instant::now();
    let summary = run_dataset(&manifest, &config, &out)?;
    println!("{summary:#?}");
    println!("elapsed {:.2?}", started.elapsed());

    let predicted = load_clustering(&out.join("clusters.json"))?;
    let report = evaluate(&manifest.dataset_id, &truth, &predicted);
    println!("maa {:.4}  cl {:.4}  score {:.4}", report.maa, report.cl, report.score);
    Ok(())
}
