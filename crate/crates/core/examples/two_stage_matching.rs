//! Matches a synthetic view against a quarter-turned copy of itself, with
//! and without rotation augmentation, and applies the correspondence gate.
//!
//!     cargo run --release --example two_stage_matching

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotatematch::local_features::{extract_features, rotate_image};
use rotatematch::matching::match_pair_two_stage;
use rotatematch::synthetic::random_texture;
use rotatematch::{CandidatePair, Orientation, PipelineConfig};

fn main() -> rotatematch::Result<()> {
    let image = random_texture(&mut ChaCha8Rng::seed_from_u64(7), 160);
    let turned = rotate_image(&image, Orientation::R90).image;
    let pair = CandidatePair::unscored("a_upright", "b_turned")?;

    for rotations in [vec![Orientation::R0], Orientation::ALL.to_vec()] {
        let config = PipelineConfig::default().with_rotations(&rotations);
        let fa = extract_features("a_upright", &image, &config)?;
        let fb = extract_features("b_turned", &turned, &config)?;
        let r = match_pair_two_stage(&pair, &fa, &fb, &config)?;
        println!("{} rotation(s):", rotations.len());
        for o in Orientation::ALL {
            println!("  {:>3}°  stage 1 {:>4}  stage 2 {:>4}", o.degrees(), r.stage1_counts.get(o), r.stage2_counts.get(o));
        }
        println!(
            "  total {} (gate {}) -> {}; {} distinct correspondences",
            r.total,
            config.match_gate,
            if r.kept { "kept" } else { "dropped" },
            r.correspondences.len()
        );
    }
    Ok(())
}
