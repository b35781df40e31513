//! Whole-image descriptors used to rank candidate pairs.
//!
//! The built-in backend is an 8×8 area-averaged thumbnail, mean-centered and
//! L2-normalized (64 dimensions). Descriptors from a neural model can be
//! ingested through the RMDF file format:
//!
//! ```text
//! "RMDF" | u32 version=1 | u32 count | u32 dim
//! count × (u16 id_len | id bytes)
//! count × dim × f32, row-major, rows in id order
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::binio::{put_f32, put_id, put_u32, LeReader};
use crate::error::{Error, Result};
use crate::model::{DatasetManifest, GlobalDescriptor, GrayImage};

pub const THUMBNAIL_SIDE: usize = 8;
pub const BUILTIN_DIM: usize = THUMBNAIL_SIDE * THUMBNAIL_SIDE;

const RMDF_MAGIC: &[u8; 4] = b"RMDF";
const RMDF_VERSION: u32 = 1;

/// Overlap of pixel `[p, p+1)` with each of `cells` equal spans over `[0, len)`.
fn axis_weights(len: usize, cells: usize) -> Vec<Vec<(usize, f64)>> {
    let span = len as f64 / cells as f64;
    (0..cells)
        .map(|c| {
            let lo = c as f64 * span;
            let hi = (c + 1) as f64 * span;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last)
                .filter_map(|p| {
                    let w = hi.min(p as f64 + 1.0) - lo.max(p as f64);
                    (w > 0.0).then_some((p, w))
                })
                .collect()
        })
        .collect()
}

/// Cell means of an area-averaged `side × side` thumbnail, row-major.
pub fn thumbnail(image: &GrayImage, side: usize) -> Vec<f64> {
    let wx = axis_weights(image.width(), side);
    let wy = axis_weights(image.height(), side);
    let cell_area = (image.width() as f64 / side as f64) * (image.height() as f64 / side as f64);
    let mut out = Vec::with_capacity(side * side);
    for ys in &wy {
        for xs in &wx {
            let mut acc = 0.0;
            for &(y, wyv) in ys {
                let mut row = 0.0;
                for &(x, wxv) in xs {
                    row += wxv * image.get(x, y) as f64;
                }
                acc += wyv * row;
            }
            out.push(acc / cell_area);
        }
    }
    out
}

/// Built-in global descriptor. A constant image (zero after centering)
/// yields the uniform vector `1/8` in every component.
pub fn builtin_global_descriptor(image_id: &str, image: &GrayImage) -> Result<GlobalDescriptor> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::ZeroAreaImage {
            width: image.width(),
            height: image.height(),
        });
    }
    let cells = thumbnail(image, THUMBNAIL_SIDE);
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    let centered: Vec<f64> = cells.iter().map(|c| c - mean).collect();
    let norm = centered.iter().map(|c| c * c).sum::<f64>().sqrt();
    // Rounding in the area average can leave ~1e-13 residue on flat images.
    let vector = if norm <= 1e-9 {
        vec![1.0 / (BUILTIN_DIM as f64).sqrt(); BUILTIN_DIM]
    } else {
        centered.iter().map(|c| c / norm).collect()
    };
    Ok(GlobalDescriptor::new(
        image_id,
        vector.into_iter().map(|v| v as f32).collect(),
    ))
}

pub fn encode_rmdf(descriptors: &[GlobalDescriptor]) -> Result<Vec<u8>> {
    let dim = descriptors.first().map_or(0, |d| d.dim());
    if let Some(bad) = descriptors.iter().find(|d| d.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let mut out = Vec::with_capacity(16 + descriptors.len() * (dim * 4 + 16));
    out.extend_from_slice(RMDF_MAGIC);
    put_u32(&mut out, RMDF_VERSION);
    put_u32(&mut out, descriptors.len() as u32);
    put_u32(&mut out, dim as u32);
    for d in descriptors {
        put_id(&mut out, &d.image_id)?;
    }
    for d in descriptors {
        for &v in d.vector() {
            put_f32(&mut out, v);
        }
    }
    Ok(out)
}

pub fn write_rmdf(path: &Path, descriptors: &[GlobalDescriptor]) -> Result<()> {
    let bytes = encode_rmdf(descriptors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses an RMDF buffer. Rows are re-normalized unless already unit length.
pub fn decode_rmdf(bytes: &[u8]) -> Result<Vec<GlobalDescriptor>> {
    let mut r = LeReader::new(bytes);
    r.magic(RMDF_MAGIC)?;
    let version = r.u32("version")?;
    if version != RMDF_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let count = r.u32("count")? as usize;
    let dim = r.u32("dim")? as usize;
    let ids = (0..count).map(|_| r.id()).collect::<Result<Vec<_>>>()?;
    let expected = count * dim * 4;
    if r.remaining() > expected {
        return Err(Error::DimensionMismatch {
            expected: count * dim,
            found: r.remaining() / 4,
        });
    }
    let mut out = Vec::with_capacity(count);
    for id in ids {
        let row = r.f32_vec(dim, "descriptor matrix")?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { image_id: id });
        }
        out.push(GlobalDescriptor::new(id, row));
    }
    Ok(out)
}

pub fn load_external_descriptors(path: &Path) -> Result<Vec<GlobalDescriptor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rmdf(&bytes)
}

/// Source of global descriptors for every image in a manifest, in manifest order.
pub trait DescriptorProvider {
    fn descriptors(&self, manifest: &DatasetManifest) -> Result<Vec<GlobalDescriptor>>;
}

/// Loads each image and computes the thumbnail descriptor.
#[derive(Clone, Copy, Debug, Default)]
pub struct BuiltinDescriptors;

impl DescriptorProvider for BuiltinDescriptors {
    fn descriptors(&self, manifest: &DatasetManifest) -> Result<Vec<GlobalDescriptor>> {
        use rayon::prelude::*;
        manifest
            .images
            .par_iter()
            .map(|rec| builtin_global_descriptor(&rec.id, &rec.load()?))
            .collect()
    }
}

/// Descriptors read from an RMDF file, reordered to manifest order.
#[derive(Clone, Debug)]
pub struct ExternalDescriptors {
    pub path: PathBuf,
}

impl DescriptorProvider for ExternalDescriptors {
    fn descriptors(&self, manifest: &DatasetManifest) -> Result<Vec<GlobalDescriptor>> {
        let mut by_id: HashMap<String, GlobalDescriptor> = load_external_descriptors(&self.path)?
            .into_iter()
            .map(|d| (d.image_id.clone(), d))
            .collect();
        manifest
            .images
            .iter()
            .map(|rec| by_id.remove(&rec.id).ok_or_else(|| Error::MissingDescriptor(rec.id.clone())))
            .collect()
    }
}

impl<F> DescriptorProvider for F
where
    F: Fn(&DatasetManifest) -> Result<Vec<GlobalDescriptor>>,
{
    fn descriptors(&self, manifest: &DatasetManifest) -> Result<Vec<GlobalDescriptor>> {
        self(manifest)
    }
}
