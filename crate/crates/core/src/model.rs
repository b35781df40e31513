//! Shared domain types used by every pipeline stage.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the L2 norm of descriptors that count as already normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Clockwise in-plane rotation applied to an image before feature extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Orientation {
    R0,
    R90,
    R180,
    R270,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::R0,
        Orientation::R90,
        Orientation::R180,
        Orientation::R270,
    ];

    pub fn degrees(self) -> u32 {
        self.index() as u32 * 90
    }

    pub fn from_degrees(degrees: u32) -> Result<Self> {
        match degrees {
            0 => Ok(Orientation::R0),
            90 => Ok(Orientation::R90),
            180 => Ok(Orientation::R180),
            270 => Ok(Orientation::R270),
            other => Err(Error::InvalidOrientation(other)),
        }
    }

    /// Position in `ALL`, also the number of quarter turns.
    pub fn index(self) -> usize {
        match self {
            Orientation::R0 => 0,
            Orientation::R90 => 1,
            Orientation::R180 => 2,
            Orientation::R270 => 3,
        }
    }

    pub fn from_quarter_turns(turns: usize) -> Self {
        Self::ALL[turns % 4]
    }

    /// Group composition: rotate by `self`, then by `other`.
    pub fn then(self, other: Orientation) -> Self {
        Self::from_quarter_turns(self.index() + other.index())
    }

    pub fn inverse(self) -> Self {
        Self::from_quarter_turns(4 - self.index())
    }

    /// Whether width and height trade places under this rotation.
    pub fn swaps_axes(self) -> bool {
        matches!(self, Orientation::R90 | Orientation::R270)
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

/// Single-channel 8-bit image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroAreaImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(Error::PixelBufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Decodes any format the `image` crate understands. Color is reduced to
    /// integer Rec.601 luma, rounded to nearest.
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = image::load_from_memory(&bytes).map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = decoded.to_rgb8();
        let (w, h) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| luma601(p.0[0], p.0[1], p.0[2])).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::ImageDecode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }
}

/// Integer Rec.601 luma: (299 R + 587 G + 114 B) / 1000, rounded to nearest.
pub fn luma601(r: u8, g: u8, b: u8) -> u8 {
    let sum = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((sum + 500) / 1000) as u8
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
        }
    }

    pub fn load(&self) -> Result<GrayImage> {
        GrayImage::open(&self.path)
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    dataset_id: String,
    images: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    path: String,
}

/// An ordered set of images forming one dataset. Image order defines row
/// order in every per-image output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub images: Vec<ImageRecord>,
}

impl DatasetManifest {
    /// Relative image paths are resolved against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Self::from_json(&text, base)
            .map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
                other => other,
            })
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::parse("manifest", e))?;
        let images = file
            .images
            .into_iter()
            .map(|entry| {
                let p = PathBuf::from(&entry.path);
                let path = if p.is_absolute() { p } else { base_dir.join(p) };
                ImageRecord { id: entry.id, path }
            })
            .collect();
        Ok(Self {
            dataset_id: file.dataset_id,
            images,
        })
    }

    /// Paths under `base_dir` are written relative to it.
    pub fn to_json(&self, base_dir: &Path) -> String {
        let file = ManifestFile {
            dataset_id: self.dataset_id.clone(),
            images: self
                .images
                .iter()
                .map(|img| ManifestEntry {
                    id: img.id.clone(),
                    path: img
                        .path
                        .strip_prefix(base_dir)
                        .unwrap_or(&img.path)
                        .to_string_lossy()
                        .into_owned(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Lists every manifest rule violation. An empty list means the manifest is valid.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for image in &manifest.images {
        if image.id.is_empty() {
            violations.push(format!("empty id: {}", image.path.display()));
        }
        if !seen.insert(image.id.as_str()) && reported.insert(image.id.as_str()) {
            violations.push(format!("duplicate id: {}", image.id));
        }
        if !image.path.is_file() {
            violations.push(format!("missing file: {}", image.path.display()));
        }
    }
    violations
}

/// Scales `v` to unit L2 norm unless it is already within
/// [`UNIT_NORM_TOLERANCE`], so normalized inputs pass through bit-exact.
/// Returns the original norm.
pub(crate) fn normalize_in_place(v: &mut [f32]) -> f64 {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 && (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        for x in v.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
    norm
}

#[cfg(test)]
pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDescriptor {
    pub image_id: String,
    vector: Vec<f32>,
}

impl GlobalDescriptor {
    /// Normalizes `vector` to unit length. A zero vector is kept as is.
    pub fn new(image_id: impl Into<String>, mut vector: Vec<f32>) -> Self {
        normalize_in_place(&mut vector);
        Self {
            image_id: image_id.into(),
            vector,
        }
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    #[cfg(test)]
    pub(crate) fn unnormalized_for_test(image_id: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            image_id: image_id.into(),
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn distance(&self, other: &GlobalDescriptor) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .vector
            .iter()
            .zip(&other.vector)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    /// Column, original image frame.
    pub x: f32,
    /// Row, original image frame.
    pub y: f32,
    pub score: f32,
    pub source_orientation: Orientation,
}

/// Keypoints of one image, aggregated over all extraction orientations,
/// with one L2-normalized descriptor row per keypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    keypoints: Vec<Keypoint>,
    descriptors: Vec<f32>,
    descriptor_dim: usize,
}

impl FeatureSet {
    /// Checks row count, coordinate bounds and finiteness, and normalizes
    /// every descriptor row.
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        keypoints: Vec<Keypoint>,
        mut descriptors: Vec<f32>,
        descriptor_dim: usize,
    ) -> Result<Self> {
        let image_id = image_id.into();
        if descriptors.len() != keypoints.len() * descriptor_dim {
            return Err(Error::DimensionMismatch {
                expected: keypoints.len() * descriptor_dim,
                found: descriptors.len(),
            });
        }
        for (index, kp) in keypoints.iter().enumerate() {
            if !kp.x.is_finite() || !kp.y.is_finite() || !kp.score.is_finite() {
                return Err(Error::NonFiniteValue { image_id });
            }
            if kp.x < 0.0 || kp.y < 0.0 || kp.x as f64 >= width as f64 || kp.y as f64 >= height as f64 {
                return Err(Error::CoordOutOfBounds {
                    image_id,
                    index,
                    x: kp.x,
                    y: kp.y,
                    width,
                    height,
                });
            }
        }
        if descriptors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { image_id });
        }
        if descriptor_dim > 0 {
            for row in descriptors.chunks_mut(descriptor_dim) {
                normalize_in_place(row);
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            keypoints,
            descriptors,
            descriptor_dim,
        })
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn descriptors(&self) -> &[f32] {
        &self.descriptors
    }

    pub fn descriptor(&self, index: usize) -> &[f32] {
        &self.descriptors[index * self.descriptor_dim..(index + 1) * self.descriptor_dim]
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Indices of keypoints detected under `orientation`.
    pub fn indices_with_orientation(&self, orientation: Orientation) -> Vec<usize> {
        self.keypoints
            .iter()
            .enumerate()
            .filter(|(_, kp)| kp.source_orientation == orientation)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Unordered image pair in canonical form (`a < b`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: String,
    pub b: String,
    /// Euclidean global-descriptor distance; 0 when `scored` is false.
    pub distance: f64,
    pub scored: bool,
}

impl CandidatePair {
    pub fn new(p: impl Into<String>, q: impl Into<String>, distance: f64, scored: bool) -> Result<Self> {
        let (p, q) = (p.into(), q.into());
        let (a, b) = match p.cmp(&q) {
            std::cmp::Ordering::Less => (p, q),
            std::cmp::Ordering::Greater => (q, p),
            std::cmp::Ordering::Equal => return Err(Error::SelfPair(p)),
        };
        Ok(Self { a, b, distance, scored })
    }

    pub fn unscored(p: impl Into<String>, q: impl Into<String>) -> Result<Self> {
        Self::new(p, q, 0.0, false)
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.a, &self.b)
    }
}

/// Correspondence count per orientation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OrientationCounts(pub [usize; 4]);

impl OrientationCounts {
    pub fn get(&self, o: Orientation) -> usize {
        self.0[o.index()]
    }

    pub fn set(&mut self, o: Orientation, n: usize) {
        self.0[o.index()] = n;
    }

    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }
}

/// One correspondence as `(xa, ya, xb, yb)`, original frames of A and B.
pub type Correspondence = [f32; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct PairMatchResult {
    pub pair: CandidatePair,
    pub stage1_counts: OrientationCounts,
    pub stage2_counts: OrientationCounts,
    pub total: usize,
    pub kept: bool,
    pub correspondences: Vec<Correspondence>,
}

/// A partition of images into scene clusters plus discarded outliers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Clustering {
    pub clusters: Vec<BTreeSet<String>>,
    pub outliers: BTreeSet<String>,
}

impl Clustering {
    /// Fails if any id appears twice across clusters and outliers.
    pub fn new(clusters: Vec<BTreeSet<String>>, outliers: BTreeSet<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for id in clusters.iter().flatten().chain(outliers.iter()) {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidClustering(format!("id {id} appears more than once")));
            }
        }
        Ok(Self { clusters, outliers })
    }

    /// Builds from slices of string-likes; convenient in tests and examples.
    pub fn from_lists<S: AsRef<str>>(clusters: &[&[S]], outliers: &[S]) -> Result<Self> {
        Self::new(
            clusters
                .iter()
                .map(|c| c.iter().map(|s| s.as_ref().to_string()).collect())
                .collect(),
            outliers.iter().map(|s| s.as_ref().to_string()).collect(),
        )
    }

    /// All ids in clusters and outliers.
    pub fn universe(&self) -> BTreeSet<String> {
        self.clusters
            .iter()
            .flatten()
            .chain(self.outliers.iter())
            .cloned()
            .collect()
    }
}
