//! Detects keypoints on all four quarter-turn rotations of an image and maps
//! them back to the original frame.
//!
//!     cargo run --release --example rotated_extraction

use rotatematch::local_features::{extract_features, rotate_point, unrotate_point};
use rotatematch::{GrayImage, Orientation, PipelineConfig};

fn main() -> rotatematch::Result<()> {
    // A white square on black: four corners, seen once per orientation.
    let image = GrayImage::from_fn(32, 32, |x, y| if (11..21).contains(&x) && (11..21).contains(&y) { 255 } else { 0 })?;

    for rotations in [vec![Orientation::R0], Orientation::ALL.to_vec()] {
        let config = PipelineConfig::default().with_rotations(&rotations);
        let features = extract_features("square", &image, &config)?;
        println!("rotations {:?}: {} keypoints", rotations.iter().map(|o| o.degrees()).collect::<Vec<_>>(), features.len());
        for k in features.keypoints() {
            println!("  ({:>4.1}, {:>4.1}) from {:>3}°  score {:.3e}", k.x, k.y, k.source_orientation.degrees(), k.score);
        }
    }

    let (w, h) = (640, 480);
    for o in Orientation::ALL {
        let (rx, ry) = rotate_point(100.0, 30.0, o, w, h);
        let back = unrotate_point(rx, ry, o, w, h)?;
        println!("{o}: (100, 30) -> ({rx}, {ry}) -> {back:?}");
    }
    Ok(())
}
