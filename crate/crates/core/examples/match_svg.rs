//! Renders the correspondences of one matched pair as an SVG file.
//!
//!     cargo run --release --example match_svg -- pair.svg

use rotatematch::local_features::extract_features;
use rotatematch::matching::match_pair_two_stage;
use rotatematch::synthetic::{generate_images, SynthConfig};
use rotatematch::viz::{caption, save_pair_svg};
use rotatematch::{CandidatePair, PipelineConfig};

fn main() -> rotatematch::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pair.svg".into());
    let data = generate_images(&SynthConfig { scenes: 1, views_per_scene: 2, outliers: 0, ..SynthConfig::default() })?;
    let [(va, ia), (vb, ib)] = [&data.images[0], &data.images[1]];
    let config = PipelineConfig { max_keypoints_per_orientation: 64, ..PipelineConfig::default() };
    let fa = extract_features(&va.id, ia, &config)?;
    let fb = extract_features(&vb.id, ib, &config)?;
    let result = match_pair_two_stage(&CandidatePair::unscored(&va.id, &vb.id)?, &fa, &fb, &config)?;
    save_pair_svg(out.as_ref(), &result, ia, ib)?;
    println!("{}\nwrote {out}", caption(&result));
    Ok(())
}
