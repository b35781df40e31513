//! Seeded multi-scene datasets with known ground truth.
//!
//! Every scene is one random texture; its views are axis-aligned crops,
//! each turned by a quarter-turn multiple and shifted in brightness.
//! Outliers are unrelated textures with a single view each.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::local_features::rotate_image;
use crate::model::{Clustering, DatasetManifest, GrayImage, ImageRecord, Orientation};
use crate::scene_graph::save_clustering;

/// Texture intensities stay inside this range so brightness jitter up to
/// this margin never clips.
const INTENSITY_MARGIN: f64 = 12.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub scenes: usize,
    pub views_per_scene: usize,
    pub outliers: usize,
    pub base_size: usize,
    /// Crop side as a fraction of `base_size`, in (0.5, 1].
    pub crop_fraction: f64,
    /// Maximum absolute brightness shift, in gray levels.
    pub brightness_jitter: i32,
    /// Orientations views are drawn from, uniformly.
    pub orientations: Vec<Orientation>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 3,
            views_per_scene: 8,
            outliers: 4,
            base_size: 256,
            crop_fraction: 0.85,
            brightness_jitter: 10,
            orientations: Orientation::ALL.to_vec(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.scenes < 1 {
            return bad("scenes must be >= 1");
        }
        if self.views_per_scene < 2 {
            return bad("views_per_scene must be >= 2");
        }
        if !(self.crop_fraction > 0.5 && self.crop_fraction <= 1.0) {
            return bad("crop_fraction must lie in (0.5, 1]");
        }
        if self.base_size < 16 {
            return bad("base_size must be >= 16");
        }
        if self.brightness_jitter < 0 || self.brightness_jitter as f64 > INTENSITY_MARGIN {
            return bad("brightness_jitter must lie in [0, 12]");
        }
        if self.orientations.is_empty() {
            return bad("orientations must not be empty");
        }
        Ok(())
    }

    pub fn crop_side(&self) -> usize {
        ((self.base_size as f64 * self.crop_fraction).round() as usize).clamp(1, self.base_size)
    }
}

/// How one view was cut from its texture; kept for tests and diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewInfo {
    pub id: String,
    /// `None` for outliers.
    pub scene: Option<usize>,
    pub offset: (usize, usize),
    pub orientation: Orientation,
    pub brightness_shift: i32,
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub dataset_id: String,
    pub images: Vec<(ViewInfo, GrayImage)>,
    pub ground_truth: Clustering,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// One octave of value noise: random lattice values every `cell` pixels,
/// smoothly interpolated.
fn value_noise(rng: &mut ChaCha8Rng, size: usize, cell: usize) -> Vec<f64> {
    let lattice = size / cell + 2;
    let grid: Vec<f64> = (0..lattice * lattice).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let gy = y / cell;
        let ty = smoothstep((y % cell) as f64 / cell as f64);
        for x in 0..size {
            let gx = x / cell;
            let tx = smoothstep((x % cell) as f64 / cell as f64);
            let g = |i: usize, j: usize| grid[j * lattice + i];
            let top = g(gx, gy) * (1.0 - tx) + g(gx + 1, gy) * tx;
            let bottom = g(gx, gy + 1) * (1.0 - tx) + g(gx + 1, gy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Value-noise octaves plus 6–12 high-contrast rectangles and discs.
pub fn random_texture(rng: &mut ChaCha8Rng, size: usize) -> GrayImage {
    const OCTAVES: [(usize, f64); 4] = [(32, 0.30), (16, 0.25), (8, 0.25), (4, 0.20)];
    let mut field = vec![0.0; size * size];
    for (cell, amp) in OCTAVES {
        for (f, n) in field.iter_mut().zip(value_noise(rng, size, cell)) {
            *f += amp * n;
        }
    }
    let (lo, hi) = (40.0, 215.0);
    let mut pixels: Vec<f64> = field.iter().map(|v| lo + (hi - lo) * v).collect();

    let shapes = rng.random_range(6..=12);
    for _ in 0..shapes {
        let bright = rng.random_bool(0.5);
        let level = if bright {
            rng.random_range(215.0..243.0)
        } else {
            rng.random_range(12.0..40.0)
        };
        let extent = (size / 4).max(4);
        let w = rng.random_range(4..=extent);
        let h = rng.random_range(4..=extent);
        let x0 = rng.random_range(0..size);
        let y0 = rng.random_range(0..size);
        let disc = rng.random_bool(0.5);
        let (cx, cy, r) = (x0 as f64, y0 as f64, w as f64 / 2.0);
        for y in 0..size {
            for x in 0..size {
                let inside = if disc {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    dx * dx + dy * dy <= r * r
                } else {
                    x >= x0 && x < x0 + w && y >= y0 && y < y0 + h
                };
                if inside {
                    pixels[y * size + x] = level;
                }
            }
        }
    }
    let bytes = pixels
        .iter()
        .map(|v| v.round().clamp(INTENSITY_MARGIN, 255.0 - INTENSITY_MARGIN) as u8)
        .collect();
    GrayImage::new(size, size, bytes).expect("size > 0")
}

fn crop(image: &GrayImage, x0: usize, y0: usize, side: usize) -> GrayImage {
    GrayImage::from_fn(side, side, |x, y| image.get(x0 + x, y0 + y)).expect("side > 0")
}

fn shift_brightness(image: GrayImage, shift: i32) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    let pixels = image
        .into_pixels()
        .into_iter()
        .map(|p| (p as i32 + shift).clamp(0, 255) as u8)
        .collect();
    GrayImage::new(w, h, pixels).expect("same size")
}

fn make_view(
    rng: &mut ChaCha8Rng,
    texture: &GrayImage,
    config: &SynthConfig,
    id: String,
    scene: Option<usize>,
) -> (ViewInfo, GrayImage) {
    let side = config.crop_side();
    let span = config.base_size - side;
    let offset = (rng.random_range(0..=span), rng.random_range(0..=span));
    let orientation = config.orientations[rng.random_range(0..config.orientations.len())];
    let shift = rng.random_range(-config.brightness_jitter..=config.brightness_jitter);
    let cropped = crop(texture, offset.0, offset.1, side);
    let rotated = rotate_image(&cropped, orientation).image;
    let info = ViewInfo {
        id,
        scene,
        offset,
        orientation,
        brightness_shift: shift,
    };
    (info, shift_brightness(rotated, shift))
}

/// Builds the dataset in memory. Identical configs give identical output.
pub fn generate_images(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut images = Vec::new();
    let mut clusters = Vec::new();
    for s in 0..config.scenes {
        let texture = random_texture(&mut rng, config.base_size);
        let mut members = BTreeSet::new();
        for v in 0..config.views_per_scene {
            let id = format!("scene{s:02}_view{v:02}");
            members.insert(id.clone());
            images.push(make_view(&mut rng, &texture, config, id, Some(s)));
        }
        clusters.push(members);
    }
    let mut outliers = BTreeSet::new();
    for k in 0..config.outliers {
        let texture = random_texture(&mut rng, config.base_size);
        let id = format!("outlier{k:02}");
        outliers.insert(id.clone());
        images.push(make_view(&mut rng, &texture, config, id, None));
    }
    Ok(SynthDataset {
        dataset_id: format!("synthetic-{}", config.seed),
        images,
        ground_truth: Clustering::new(clusters, outliers)?,
    })
}

/// Writes `images/*.png`, `manifest.json` and `gt.json` under `out_dir`.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path) -> Result<(DatasetManifest, Clustering)> {
    let data = generate_images(config)?;
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut records = Vec::with_capacity(data.images.len());
    for (info, image) in &data.images {
        let path = image_dir.join(format!("{}.png", info.id));
        image.save_png(&path)?;
        records.push(ImageRecord::new(&info.id, path));
    }
    let manifest = DatasetManifest {
        dataset_id: data.dataset_id,
        images: records,
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_json(out_dir)).map_err(|e| Error::io(&manifest_path, e))?;
    save_clustering(&out_dir.join("gt.json"), &data.ground_truth)?;
    Ok((manifest, data.ground_truth))
}
