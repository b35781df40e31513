//! Rotation-augmented keypoint extraction.
//!
//! Each image is rotated by every configured quarter turn (an exact pixel
//! permutation), the detector runs on each rotated view, and keypoints are
//! mapped back to the original frame and tagged with the orientation they
//! came from. Keypoints are not deduplicated across orientations.
//!
//! Clockwise convention, `W × H` original, pixel centers at integers:
//!
//! | orientation | rotated `(x', y')` of original `(x, y)` | rotated size |
//! |-------------|-----------------------------------------|--------------|
//! | R0          | `(x, y)`                                | `W × H`      |
//! | R90         | `(H−1−y, x)`                            | `H × W`      |
//! | R180        | `(W−1−x, H−1−y)`                        | `W × H`      |
//! | R270        | `(y, W−1−x)`                            | `H × W`      |

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{put_f32, put_id, put_u16, put_u32, LeReader};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{DatasetManifest, FeatureSet, GrayImage, Keypoint, Orientation};

pub const HARRIS_K: f64 = 0.06;
/// Responses at or below this fraction of the image maximum are discarded.
pub const RESPONSE_FLOOR: f64 = 1e-6;
/// Keypoints closer than this to any border are dropped.
pub const BORDER_MARGIN: usize = 8;
pub const PATCH_SIDE: usize = 8;
pub const PATCH_STRIDE: f64 = 2.0;
pub const LOCAL_DESCRIPTOR_DIM: usize = PATCH_SIDE * PATCH_SIDE;
/// Views smaller than this in either dimension produce no keypoints.
pub const MIN_DETECT_SIZE: usize = 16;

/// An image after a quarter-turn rotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotatedView {
    pub orientation: Orientation,
    pub image: GrayImage,
}

impl RotatedView {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Size of the rotated frame for an original `width × height` image.
pub fn rotated_size(orientation: Orientation, width: usize, height: usize) -> (usize, usize) {
    if orientation.swaps_axes() {
        (height, width)
    } else {
        (width, height)
    }
}

/// Forward coordinate map, original frame to rotated frame.
pub fn rotate_point(x: f64, y: f64, orientation: Orientation, width: usize, height: usize) -> (f64, f64) {
    let (w1, h1) = ((width - 1) as f64, (height - 1) as f64);
    match orientation {
        Orientation::R0 => (x, y),
        Orientation::R90 => (h1 - y, x),
        Orientation::R180 => (w1 - x, h1 - y),
        Orientation::R270 => (y, w1 - x),
    }
}

/// Maps a rotated-frame point back to the original `width × height` frame.
/// Fails unless the point lies within `[0, w'−1] × [0, h'−1]` of the rotated frame.
pub fn unrotate_point(
    xr: f64,
    yr: f64,
    orientation: Orientation,
    width: usize,
    height: usize,
) -> Result<(f64, f64)> {
    let (rw, rh) = rotated_size(orientation, width, height);
    let inside = |v: f64, len: usize| v >= 0.0 && v <= (len as f64 - 1.0);
    if !inside(xr, rw) || !inside(yr, rh) {
        return Err(Error::OutOfBounds {
            x: xr,
            y: yr,
            width: rw,
            height: rh,
        });
    }
    Ok(unrotate_unchecked(xr, yr, orientation, width, height))
}

#[inline]
fn unrotate_unchecked(xr: f64, yr: f64, orientation: Orientation, width: usize, height: usize) -> (f64, f64) {
    let (w1, h1) = ((width - 1) as f64, (height - 1) as f64);
    match orientation {
        Orientation::R0 => (xr, yr),
        Orientation::R90 => (yr, h1 - xr),
        Orientation::R180 => (w1 - xr, h1 - yr),
        Orientation::R270 => (w1 - yr, xr),
    }
}

/// Exact pixel permutation; no interpolation.
pub fn rotate_image(image: &GrayImage, orientation: Orientation) -> RotatedView {
    let (w, h) = (image.width(), image.height());
    let (rw, rh) = rotated_size(orientation, w, h);
    let rotated = GrayImage::from_fn(rw, rh, |xr, yr| {
        let (x, y) = unrotate_unchecked(xr as f64, yr as f64, orientation, w, h);
        image.get(x as usize, y as usize)
    })
    .expect("rotation preserves area");
    RotatedView {
        orientation,
        image: rotated,
    }
}

/// A keypoint in the frame of the view it was detected on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// Harris response per pixel. Sobel gradients, 3×3 box-summed structure
/// tensor, `det − k·trace²`. Pixels whose window touches the border are 0.
pub fn harris_response(image: &GrayImage) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut response = vec![0.0; w * h];
    if w < 5 || h < 5 {
        return response;
    }
    let p = |x: usize, y: usize| image.get(x, y) as i64;
    let mut ixx = vec![0i64; w * h];
    let mut iyy = vec![0i64; w * h];
    let mut ixy = vec![0i64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
            let gy = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let (mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64);
            for yy in y - 1..=y + 1 {
                let row = yy * w;
                for xx in x - 1..=x + 1 {
                    sxx += ixx[row + xx];
                    syy += iyy[row + xx];
                    sxy += ixy[row + xx];
                }
            }
            let det = (sxx as f64) * (syy as f64) - (sxy as f64) * (sxy as f64);
            let trace = (sxx + syy) as f64;
            response[y * w + x] = det - HARRIS_K * trace * trace;
        }
    }
    response
}

/// Local maxima under 3×3 suppression. Equal neighbors are resolved in
/// favor of the earlier pixel in scan order.
fn non_max_suppression(response: &[f64], w: usize, h: usize, floor: f64) -> Vec<Detection> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let r = response[y * w + x];
            if r <= floor {
                continue;
            }
            let mut is_max = true;
            'nbhd: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if (nx, ny) == (x, y) {
                        continue;
                    }
                    let q = response[ny * w + nx];
                    let earlier = (ny, nx) < (y, x);
                    if q > r || (q == r && earlier) {
                        is_max = false;
                        break 'nbhd;
                    }
                }
            }
            if is_max {
                out.push(Detection {
                    x: x as f64,
                    y: y as f64,
                    score: r,
                });
            }
        }
    }
    out
}

fn bilinear(image: &GrayImage, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (image.width() - 1) as f64);
    let y = y.clamp(0.0, (image.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(image.width() - 1), (y0 + 1).min(image.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = image.get(x0, y0) as f64 * (1.0 - fx) + image.get(x1, y0) as f64 * fx;
    let bottom = image.get(x0, y1) as f64 * (1.0 - fx) + image.get(x1, y1) as f64 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// 8×8 samples at stride 2 centered on `(x, y)`, mean-centered and normalized.
pub fn patch_descriptor(image: &GrayImage, x: f64, y: f64) -> Vec<f32> {
    let half = (PATCH_SIDE as f64 - 1.0) / 2.0;
    let mut samples = Vec::with_capacity(LOCAL_DESCRIPTOR_DIM);
    for r in 0..PATCH_SIDE {
        for c in 0..PATCH_SIDE {
            let sx = x + (c as f64 - half) * PATCH_STRIDE;
            let sy = y + (r as f64 - half) * PATCH_STRIDE;
            samples.push(bilinear(image, sx, sy));
        }
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let norm = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>().sqrt();
    if norm <= 1e-9 {
        return vec![1.0 / (LOCAL_DESCRIPTOR_DIM as f32).sqrt(); LOCAL_DESCRIPTOR_DIM];
    }
    samples.iter().map(|s| ((s - mean) / norm) as f32).collect()
}

/// Harris stand-in detector on one view. Returns rotated-frame detections
/// and a row-major descriptor matrix (one 64-dim row per detection).
pub fn builtin_detect(view: &GrayImage, max_keypoints: usize) -> (Vec<Detection>, Vec<f32>) {
    let (w, h) = (view.width(), view.height());
    if w < MIN_DETECT_SIZE || h < MIN_DETECT_SIZE || max_keypoints == 0 {
        return (Vec::new(), Vec::new());
    }
    let response = harris_response(view);
    let max = response.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return (Vec::new(), Vec::new());
    }
    let mut detections: Vec<Detection> = non_max_suppression(&response, w, h, RESPONSE_FLOOR * max)
        .into_iter()
        .filter(|d| {
            let (x, y) = (d.x as usize, d.y as usize);
            x >= BORDER_MARGIN && y >= BORDER_MARGIN && x + BORDER_MARGIN < w && y + BORDER_MARGIN < h
        })
        .collect();
    // Stable sort keeps scan order among equal scores.
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));
    detections.truncate(max_keypoints);
    let descriptors = detections
        .iter()
        .flat_map(|d| patch_descriptor(view, d.x, d.y))
        .collect();
    (detections, descriptors)
}

/// Runs the detector on every configured rotation and aggregates keypoints
/// in the original frame, in rotation order.
pub fn extract_features(image_id: &str, image: &GrayImage, config: &PipelineConfig) -> Result<FeatureSet> {
    let (w, h) = (image.width(), image.height());
    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    for &orientation in &config.rotations {
        let view = rotate_image(image, orientation);
        let (detections, desc) = builtin_detect(&view.image, config.max_keypoints_per_orientation);
        for d in &detections {
            let (x, y) = unrotate_point(d.x, d.y, orientation, w, h)?;
            keypoints.push(Keypoint {
                x: x as f32,
                y: y as f32,
                score: d.score as f32,
                source_orientation: orientation,
            });
        }
        descriptors.extend(desc);
    }
    FeatureSet::new(image_id, w, h, keypoints, descriptors, LOCAL_DESCRIPTOR_DIM)
}

const RMKP_MAGIC: &[u8; 4] = b"RMKP";
const RMKP_VERSION: u32 = 1;

/// Serializes feature sets as RMKP:
///
/// ```text
/// "RMKP" | u32 version=1 | u32 image_count | u32 descriptor_dim
/// per image: u16 id_len | id | u32 n
///            n × (f32 x | f32 y | f32 score | u16 orientation_degrees)
///            n × dim × f32
/// ```
pub fn encode_rmkp(sets: &[FeatureSet]) -> Result<Vec<u8>> {
    let dim = sets.iter().find(|s| !s.is_empty()).map_or_else(
        || sets.first().map_or(LOCAL_DESCRIPTOR_DIM, |s| s.descriptor_dim()),
        |s| s.descriptor_dim(),
    );
    let mut out = Vec::new();
    out.extend_from_slice(RMKP_MAGIC);
    put_u32(&mut out, RMKP_VERSION);
    put_u32(&mut out, sets.len() as u32);
    put_u32(&mut out, dim as u32);
    for set in sets {
        if !set.is_empty() && set.descriptor_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: set.descriptor_dim(),
            });
        }
        put_id(&mut out, &set.image_id)?;
        put_u32(&mut out, set.len() as u32);
        for kp in set.keypoints() {
            put_f32(&mut out, kp.x);
            put_f32(&mut out, kp.y);
            put_f32(&mut out, kp.score);
            put_u16(&mut out, kp.source_orientation.degrees() as u16);
        }
        for &v in set.descriptors() {
            put_f32(&mut out, v);
        }
    }
    Ok(out)
}

pub fn write_rmkp(path: &Path, sets: &[FeatureSet]) -> Result<()> {
    let bytes = encode_rmkp(sets)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses RMKP. `size_of` supplies each image's original `(width, height)`
/// for the bounds check; ids it does not know are rejected.
pub fn decode_rmkp(bytes: &[u8], size_of: impl Fn(&str) -> Option<(usize, usize)>) -> Result<Vec<FeatureSet>> {
    let mut r = LeReader::new(bytes);
    r.magic(RMKP_MAGIC)?;
    let version = r.u32("version")?;
    if version != RMKP_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let count = r.u32("image count")? as usize;
    let dim = r.u32("descriptor dim")? as usize;
    let mut sets = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id = r.id()?;
        let n = r.u32("keypoint count")? as usize;
        let mut keypoints = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let x = r.f32("keypoint x")?;
            let y = r.f32("keypoint y")?;
            let score = r.f32("keypoint score")?;
            let deg = r.u16("keypoint orientation")?;
            keypoints.push(Keypoint {
                x,
                y,
                score,
                source_orientation: Orientation::from_degrees(deg as u32)?,
            });
        }
        let descriptors = r.f32_vec(n * dim, "descriptor matrix")?;
        let (width, height) = size_of(&id).ok_or_else(|| Error::UnknownId(id.clone()))?;
        sets.push(FeatureSet::new(id, width, height, keypoints, descriptors, dim)?);
    }
    if r.remaining() != 0 {
        return Err(Error::parse("RMKP", format!("{} trailing bytes", r.remaining())));
    }
    Ok(sets)
}

/// Loads an RMKP file, taking image sizes from the manifest's image headers.
pub fn load_external_features(path: &Path, manifest: &DatasetManifest) -> Result<Vec<FeatureSet>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let sizes = image_sizes(manifest)?;
    decode_rmkp(&bytes, |id| sizes.get(id).copied())
}

/// `(width, height)` of every manifest image, read from file headers only.
pub fn image_sizes(manifest: &DatasetManifest) -> Result<HashMap<String, (usize, usize)>> {
    manifest
        .images
        .iter()
        .map(|rec| {
            let (w, h) = image::image_dimensions(&rec.path).map_err(|e| Error::ImageDecode {
                path: rec.path.clone(),
                message: e.to_string(),
            })?;
            Ok((rec.id.clone(), (w as usize, h as usize)))
        })
        .collect()
}

/// Built-in extraction for every manifest image, in manifest order.
pub fn extract_all(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<Vec<FeatureSet>> {
    manifest
        .images
        .par_iter()
        .map(|rec| extract_features(&rec.id, &rec.load()?, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square_image() -> GrayImage {
        GrayImage::from_fn(32, 32, |x, y| if (11..21).contains(&x) && (11..21).contains(&y) { 255 } else { 0 })
            .unwrap()
    }

    /// Naive Harris straight from the definition, one pixel at a time.
    fn oracle_response(img: &GrayImage, x: usize, y: usize) -> f64 {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let px = |x: i64, y: i64| img.get(x as usize, y as usize) as f64;
        let grad = |x: i64, y: i64| -> (f64, f64) {
            if x < 1 || y < 1 || x >= w - 1 || y >= h - 1 {
                return (0.0, 0.0);
            }
            let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..3 {
                for i in 0..3 {
                    let v = px(x + i - 1, y + j - 1);
                    gx += kx[j as usize][i as usize] * v;
                    gy += kx[i as usize][j as usize] * v;
                }
            }
            (gx, gy)
        };
        let (x, y) = (x as i64, y as i64);
        if x < 2 || y < 2 || x >= w - 2 || y >= h - 2 {
            return 0.0;
        }
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (gx, gy) = grad(x + dx, y + dy);
                a += gx * gx;
                b += gy * gy;
                c += gx * gy;
            }
        }
        a * b - c * c - 0.06 * (a + b) * (a + b)
    }

    #[test]
    fn one_pixel_image_is_fixed_under_rotation() {
        let img = GrayImage::new(1, 1, vec![42]).unwrap();
        for o in Orientation::ALL {
            assert_eq!(rotate_image(&img, o).image.pixels(), &[42]);
        }
    }

    #[test]
    fn two_pixel_half_turn_swaps() {
        let img = GrayImage::new(2, 1, vec![7, 9]).unwrap();
        assert_eq!(rotate_image(&img, Orientation::R180).image.pixels(), &[9, 7]);
    }

    #[test]
    fn quarter_turn_worked_example() {
        // W=4, H=3: original (0,2) lands at (H−1−y, x) = (0, 0).
        let img = GrayImage::from_fn(4, 3, |x, y| (y * 4 + x) as u8).unwrap();
        let view = rotate_image(&img, Orientation::R90);
        assert_eq!((view.width(), view.height()), (3, 4));
        assert_eq!(view.image.get(0, 0), img.get(0, 2));
        assert_eq!(rotate_point(0.0, 2.0, Orientation::R90, 4, 3), (0.0, 0.0));
        assert_eq!(unrotate_point(0.0, 0.0, Orientation::R90, 4, 3).unwrap(), (0.0, 2.0));
        assert_eq!(unrotate_point(1.5, 1.25, Orientation::R0, 4, 3).unwrap(), (1.5, 1.25));
    }

    #[test]
    fn unrotate_rejects_out_of_frame_points() {
        assert!(matches!(
            unrotate_point(3.0, 0.0, Orientation::R90, 4, 3),
            Err(Error::OutOfBounds { width: 3, height: 4, .. })
        ));
        assert!(unrotate_point(-0.1, 0.0, Orientation::R0, 4, 3).is_err());
    }

    #[test]
    fn rotating_four_times_is_identity() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 17 + y * 5) as u8).unwrap();
        let mut cur = img.clone();
        for _ in 0..4 {
            cur = rotate_image(&cur, Orientation::R90).image;
        }
        assert_eq!(cur, img);
        let twice = rotate_image(&rotate_image(&img, Orientation::R90).image, Orientation::R90).image;
        assert_eq!(twice, rotate_image(&img, Orientation::R180).image);
    }

    #[test]
    fn uniform_image_has_no_keypoints() {
        let img = GrayImage::new(40, 40, vec![128; 1600]).unwrap();
        assert!(builtin_detect(&img, 100).0.is_empty());
    }

    #[test]
    fn small_views_yield_nothing() {
        let img = GrayImage::from_fn(15, 40, |x, y| ((x ^ y) * 40) as u8).unwrap();
        assert!(builtin_detect(&img, 100).0.is_empty());
    }

    #[test]
    fn response_matches_naive_oracle() {
        let img = square_image();
        let fast = harris_response(&img);
        for y in 0..32 {
            for x in 0..32 {
                let o = oracle_response(&img, x, y);
                assert!((fast[y * 32 + x] - o).abs() <= 1e-9 * o.abs().max(1.0), "({x},{y})");
            }
        }
    }

    fn oracle_corners(img: &GrayImage) -> Vec<(usize, usize, f64)> {
        let (w, h) = (img.width(), img.height());
        let resp: Vec<f64> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| oracle_response(img, x, y)).collect();
        let max = resp.iter().copied().fold(f64::MIN, f64::max);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let r = resp[y * w + x];
                if r <= 1e-6 * max {
                    continue;
                }
                let mut best = true;
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let q = resp[ny * w + nx];
                        if (nx, ny) != (x, y) && (q > r || (q == r && (ny, nx) < (y, x))) {
                            best = false;
                        }
                    }
                }
                if best && x >= 8 && y >= 8 && x + 8 < w && y + 8 < h {
                    out.push((x, y, r));
                }
            }
        }
        out
    }

    #[test]
    fn white_square_gives_four_corners() {
        let img = square_image();
        let (dets, desc) = builtin_detect(&img, 512);
        let oracle = oracle_corners(&img);
        assert_eq!(oracle.len(), 4);
        assert_eq!(dets.len(), 4);
        assert_eq!(desc.len(), 4 * LOCAL_DESCRIPTOR_DIM);
        let corners = [(11.0, 11.0), (20.0, 11.0), (11.0, 20.0), (20.0, 20.0)];
        for (cx, cy) in corners {
            assert!(
                dets.iter().any(|d| (d.x - cx).abs() <= 1.0 && (d.y - cy).abs() <= 1.0),
                "no detection near ({cx},{cy}): {dets:?}"
            );
        }
        for d in &dets {
            assert!(oracle.iter().any(|&(x, y, _)| x as f64 == d.x && y as f64 == d.y));
        }
    }

    #[test]
    fn top_k_follows_score_then_scan_order() {
        let img = square_image();
        let mut oracle = oracle_corners(&img);
        // Stable sort from scan order mirrors the tie rule.
        oracle.sort_by(|a, b| b.2.total_cmp(&a.2));
        let (dets, _) = builtin_detect(&img, 2);
        assert_eq!(dets.len(), 2);
        for (d, o) in dets.iter().zip(&oracle) {
            assert_eq!((d.x, d.y), (o.0 as f64, o.1 as f64));
        }
    }

    #[test]
    fn four_rotations_give_sixteen_keypoints_on_the_square() {
        let img = square_image();
        let fs = extract_features("sq", &img, &PipelineConfig::default()).unwrap();
        assert_eq!(fs.len(), 16);
        let corners = [(11.0, 11.0), (20.0, 11.0), (11.0, 20.0), (20.0, 20.0)];
        for kp in fs.keypoints() {
            assert!(corners
                .iter()
                .any(|&(cx, cy)| (kp.x - cx).abs() <= 1.0 && (kp.y - cy).abs() <= 1.0));
        }
        for o in Orientation::ALL {
            assert_eq!(fs.indices_with_orientation(o).len(), 4);
        }
    }

    #[test]
    fn single_rotation_equals_plain_detection() {
        let img = GrayImage::from_fn(48, 40, |x, y| (((x / 6) ^ (y / 5)) * 37 % 256) as u8).unwrap();
        let cfg = PipelineConfig::default().with_rotations(&[Orientation::R0]);
        let fs = extract_features("p", &img, &cfg).unwrap();
        let (dets, desc) = builtin_detect(&img, cfg.max_keypoints_per_orientation);
        assert_eq!(fs.len(), dets.len());
        for (kp, d) in fs.keypoints().iter().zip(&dets) {
            assert_eq!((kp.x as f64, kp.y as f64), (d.x, d.y));
        }
        assert_eq!(fs.descriptors(), &desc[..]);
    }

    #[test]
    fn detection_is_rotation_equivariant_on_the_square() {
        let img = square_image();
        let base: Vec<(f64, f64)> = builtin_detect(&img, 512).0.iter().map(|d| (d.x, d.y)).collect();
        for o in Orientation::ALL {
            let view = rotate_image(&img, o);
            let (dets, _) = builtin_detect(&view.image, 512);
            assert_eq!(dets.len(), base.len());
            for d in dets {
                let (x, y) = unrotate_point(d.x, d.y, o, 32, 32).unwrap();
                assert!(base.iter().any(|&(bx, by)| (bx - x).abs() <= 1.0 && (by - y).abs() <= 1.0));
            }
        }
    }

    #[test]
    fn feature_count_grows_with_rotations() {
        let img = GrayImage::from_fn(64, 48, |x, y| ((x * x + 3 * y * x + y) % 251) as u8).unwrap();
        let mut prev = 0;
        for n in 1..=4 {
            let cfg = PipelineConfig::default().with_rotations(&Orientation::ALL[..n]);
            let count = extract_features("g", &img, &cfg).unwrap().len();
            assert!(count >= prev);
            prev = count;
        }
    }

    #[test]
    fn rmkp_round_trip_and_validation() {
        let kps: Vec<Keypoint> = (0..100)
            .map(|i| Keypoint {
                x: (i % 10) as f32 + 0.25,
                y: (i / 10) as f32,
                score: i as f32,
                source_orientation: Orientation::ALL[i % 4],
            })
            .collect();
        let desc: Vec<f32> = (0..100 * 128).map(|i| ((i * 7919) % 101) as f32 - 50.0).collect();
        let fs = FeatureSet::new("one", 20, 20, kps, desc, 128).unwrap();
        let empty = FeatureSet::new("two", 5, 5, vec![], vec![], 128).unwrap();
        let bytes = encode_rmkp(&[fs.clone(), empty.clone()]).unwrap();
        let sizes = |id: &str| match id {
            "one" => Some((20, 20)),
            "two" => Some((5, 5)),
            _ => None,
        };
        let back = decode_rmkp(&bytes, sizes).unwrap();
        assert_eq!(back, vec![fs.clone(), empty]);
        assert_eq!(back[0].descriptor_dim(), 128);
        assert_eq!(back[0].len(), 100);

        let narrow = |id: &str| if id == "one" { Some((9, 20)) } else { Some((5, 5)) };
        assert!(matches!(decode_rmkp(&bytes, narrow), Err(Error::CoordOutOfBounds { .. })));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_rmkp(&bad, sizes), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_rmkp(&bytes[..bytes.len() - 3], sizes), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn rmkp_keypoint_at_width_is_out_of_bounds() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RMKP");
        for v in [1u32, 1, 2] {
            put_u32(&mut bytes, v);
        }
        put_id(&mut bytes, "img").unwrap();
        put_u32(&mut bytes, 1);
        put_f32(&mut bytes, 10.0);
        put_f32(&mut bytes, 0.0);
        put_f32(&mut bytes, 1.0);
        put_u16(&mut bytes, 0);
        put_f32(&mut bytes, 1.0);
        put_f32(&mut bytes, 0.0);
        match decode_rmkp(&bytes, |_| Some((10, 10))) {
            Err(Error::CoordOutOfBounds { image_id, index, .. }) => {
                assert_eq!(image_id, "img");
                assert_eq!(index, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn integer_points_round_trip_exactly(w in 1usize..4097, h in 1usize..4097, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let x = (fx * w as f64).floor().min((w - 1) as f64);
            let y = (fy * h as f64).floor().min((h - 1) as f64);
            for o in Orientation::ALL {
                let (xr, yr) = rotate_point(x, y, o, w, h);
                prop_assert_eq!(unrotate_point(xr, yr, o, w, h).unwrap(), (x, y));
            }
        }

        #[test]
        fn rotate_image_matches_point_map(w in 1usize..12, h in 1usize..12, o in 0usize..4) {
            let o = Orientation::ALL[o];
            let img = GrayImage::from_fn(w, h, |x, y| (y * w + x) as u8).unwrap();
            let view = rotate_image(&img, o);
            for y in 0..h {
                for x in 0..w {
                    let (xr, yr) = rotate_point(x as f64, y as f64, o, w, h);
                    prop_assert_eq!(view.image.get(xr as usize, yr as usize), img.get(x, y));
                }
            }
        }
    }
}
