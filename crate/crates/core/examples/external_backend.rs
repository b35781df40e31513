//! Feeds precomputed global descriptors (RMDF) and local features (RMKP) to
//! the pipeline in place of the built-in extractors, as an offline neural
//! exporter would.
//!
//!     cargo run --release --example external_backend

use rotatematch::global_desc::{builtin_global_descriptor, write_rmdf};
use rotatematch::local_features::{extract_features, write_rmkp};
use rotatematch::pipeline::run_in_memory;
use rotatematch::synthetic::{generate_dataset, SynthConfig};
use rotatematch::{Backend, PipelineConfig};

fn main() -> rotatematch::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let synth = SynthConfig { scenes: 2, views_per_scene: 3, outliers: 1, ..SynthConfig::default() };
    let (manifest, _) = generate_dataset(&synth, dir.path())?;

    // Stand-ins for exported files: any producer writing these formats works.
    let builtin = PipelineConfig::default();
    let mut globals = Vec::new();
    let mut features = Vec::new();
    for rec in &manifest.images {
        let image = rec.load()?;
        globals.push(builtin_global_descriptor(&rec.id, &image)?);
        features.push(extract_features(&rec.id, &image, &builtin)?);
    }
    let rmdf = dir.path().join("global.rmdf");
    let rmkp = dir.path().join("local.rmkp");
    write_rmdf(&rmdf, &globals)?;
    write_rmkp(&rmkp, &features)?;

    let external = PipelineConfig {
        backend: Backend::External { descriptors: Some(rmdf), features: Some(rmkp) },
        ..PipelineConfig::default()
    };
    let a = run_in_memory(&manifest, &builtin)?;
    let b = run_in_memory(&manifest, &external)?;
    println!("builtin:  {} pairs, {} kept, clusters {:?}", a.pairs.len(), a.summary.kept_pairs, a.clustering.clusters);
    println!("external: {} pairs, {} kept, clusters {:?}", b.pairs.len(), b.summary.kept_pairs, b.clustering.clusters);
    println!("identical results: {}", a.matches == b.matches && a.clustering == b.clustering);
    Ok(())
}
