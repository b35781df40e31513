//! Rotation-augmented image matching for structure-from-motion preprocessing.
//!
//! The pipeline turns an unordered image collection into scene clusters:
//!
//! 1. [`pairing`] picks candidate pairs. Small datasets use every pair;
//!    larger ones rank pairs by global-descriptor distance ([`global_desc`]).
//! 2. [`local_features`] detects keypoints on each image rotated by 0°, 90°,
//!    180° and 270°, mapping every keypoint back to the original frame.
//! 3. [`matching`] matches each pair against the other image's per-orientation
//!    feature subsets, in both directions, and keeps pairs whose summed
//!    correspondence count reaches the gate.
//! 4. [`scene_graph`] clusters images by connected components of kept pairs.
//! 5. [`evaluation`] scores predicted clusters against ground truth.
//!
//! [`pipeline`] chains the stages with file outputs, [`synthetic`] generates
//! datasets with known scenes, and [`viz`] renders matches as SVG.

mod binio;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod global_desc;
pub mod local_features;
pub mod matching;
pub mod model;
pub mod pairing;
pub mod pipeline;
pub mod scene_graph;
pub mod synthetic;
pub mod viz;

pub use config::{Backend, DistanceThreshold, PipelineConfig};
pub use error::{Error, Result};
pub use model::{
    CandidatePair, Clustering, DatasetManifest, FeatureSet, GlobalDescriptor, GrayImage, ImageRecord, Keypoint,
    Orientation, OrientationCounts, PairMatchResult,
};
