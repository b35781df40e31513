//! Small datasets get every pair; larger ones are ranked by global-descriptor
//! distance and cut at the configured floor.
//!
//!     cargo run --release --example adaptive_pairing

use rotatematch::pairing::{adaptive_pairs, pair_count};
use rotatematch::synthetic::{generate_dataset, SynthConfig};
use rotatematch::global_desc::BuiltinDescriptors;
use rotatematch::PipelineConfig;

fn main() -> rotatematch::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    for (scenes, outliers) in [(2, 1), (3, 4)] {
        let synth = SynthConfig { scenes, outliers, ..SynthConfig::default() };
        let (manifest, _) = generate_dataset(&synth, &dir.path().join(format!("s{scenes}")))?;
        let config = PipelineConfig::default();
        let pairs = adaptive_pairs(&manifest, &BuiltinDescriptors, &config)?;
        let mode = if manifest.len() < config.exhaustive_threshold { "exhaustive" } else { "retrieval" };
        println!("{} images ({mode}): {} of {} possible pairs", manifest.len(), pairs.len(), pair_count(manifest.len()));
        for p in pairs.iter().take(5) {
            if p.scored {
                println!("  {} – {}  d = {:.4}", p.a, p.b, p.distance);
            } else {
                println!("  {} – {}", p.a, p.b);
            }
        }
    }
    Ok(())
}
