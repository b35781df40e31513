//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! exhaustive_threshold = 20
//! min_pairs = 20
//! distance_threshold = auto
//! match_gate = 25
//! rotations = 0,90,180,270
//! max_keypoints_per_orientation = 512
//! ratio_test = 0.9
//! backend = builtin
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Orientation;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistanceThreshold {
    /// No pruning; pairs are ranked by distance and the floor applies.
    Auto,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    Builtin,
    /// Precomputed descriptors (RMDF) and features (RMKP) from an offline exporter.
    External {
        descriptors: Option<PathBuf>,
        features: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Datasets with fewer images are paired exhaustively.
    pub exhaustive_threshold: usize,
    /// Minimum number of retrieval pairs per dataset.
    pub min_pairs: usize,
    pub distance_threshold: DistanceThreshold,
    /// Minimum combined correspondence count for a pair to be kept.
    pub match_gate: usize,
    /// Extraction orientations, kept sorted and unique.
    pub rotations: Vec<Orientation>,
    pub max_keypoints_per_orientation: usize,
    pub ratio_test: f64,
    pub backend: Backend,
    /// Worker count; 0 means available parallelism.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            exhaustive_threshold: 20,
            min_pairs: 20,
            distance_threshold: DistanceThreshold::Auto,
            match_gate: 25,
            rotations: Orientation::ALL.to_vec(),
            max_keypoints_per_orientation: 512,
            ratio_test: 0.9,
            backend: Backend::Builtin,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exhaustive_threshold < 2 {
            return Err(Error::InvalidConfig("exhaustive_threshold must be >= 2".into()));
        }
        if self.min_pairs < 1 {
            return Err(Error::InvalidConfig("min_pairs must be >= 1".into()));
        }
        if self.match_gate < 1 {
            return Err(Error::InvalidConfig("match_gate must be >= 1".into()));
        }
        if !self.rotations.contains(&Orientation::R0) {
            return Err(Error::InvalidConfig("rotations must include 0".into()));
        }
        if !(self.ratio_test > 0.0 && self.ratio_test <= 1.0) {
            return Err(Error::InvalidConfig("ratio_test must lie in (0, 1]".into()));
        }
        if let DistanceThreshold::Value(t) = self.distance_threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig("distance_threshold must be >= 0 or auto".into()));
            }
        }
        Ok(())
    }

    pub fn with_rotations(mut self, rotations: &[Orientation]) -> Self {
        self.rotations = normalize_rotations(rotations);
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let mut cfg = Self::default();
        cfg.apply_text(&text, base)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str, base_dir: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim(), base_dir)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        match key {
            "exhaustive_threshold" => self.exhaustive_threshold = num(key, value)?,
            "min_pairs" => self.min_pairs = num(key, value)?,
            "match_gate" => self.match_gate = num(key, value)?,
            "max_keypoints_per_orientation" => self.max_keypoints_per_orientation = num(key, value)?,
            "ratio_test" => self.ratio_test = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "distance_threshold" => {
                self.distance_threshold = if value == "auto" {
                    DistanceThreshold::Auto
                } else {
                    DistanceThreshold::Value(num(key, value)?)
                }
            }
            "rotations" => self.rotations = parse_rotations(value)?,
            "backend" => {
                self.backend = match value {
                    "builtin" => Backend::Builtin,
                    "external" => match &self.backend {
                        Backend::External { .. } => self.backend.clone(),
                        Backend::Builtin => Backend::External {
                            descriptors: None,
                            features: None,
                        },
                    },
                    other => return Err(format!("backend: unknown value {other:?}")),
                }
            }
            "external_descriptors" | "external_features" => {
                let path = base_dir.join(value);
                let (mut descriptors, mut features) = match std::mem::replace(&mut self.backend, Backend::Builtin) {
                    Backend::External { descriptors, features } => (descriptors, features),
                    Backend::Builtin => (None, None),
                };
                if key == "external_descriptors" {
                    descriptors = Some(path);
                } else {
                    features = Some(path);
                }
                self.backend = Backend::External { descriptors, features };
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Canonical text form; also the input to [`PipelineConfig::digest`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "exhaustive_threshold = {}", self.exhaustive_threshold);
        let _ = writeln!(s, "min_pairs = {}", self.min_pairs);
        match self.distance_threshold {
            DistanceThreshold::Auto => s.push_str("distance_threshold = auto\n"),
            DistanceThreshold::Value(v) => {
                let _ = writeln!(s, "distance_threshold = {v:?}");
            }
        }
        let _ = writeln!(s, "match_gate = {}", self.match_gate);
        let rot: Vec<String> = self.rotations.iter().map(|o| o.degrees().to_string()).collect();
        let _ = writeln!(s, "rotations = {}", rot.join(","));
        let _ = writeln!(s, "max_keypoints_per_orientation = {}", self.max_keypoints_per_orientation);
        let _ = writeln!(s, "ratio_test = {:?}", self.ratio_test);
        match &self.backend {
            Backend::Builtin => s.push_str("backend = builtin\n"),
            Backend::External { descriptors, features } => {
                s.push_str("backend = external\n");
                if let Some(p) = descriptors {
                    let _ = writeln!(s, "external_descriptors = {}", p.display());
                }
                if let Some(p) = features {
                    let _ = writeln!(s, "external_features = {}", p.display());
                }
            }
        }
        s
    }

    /// Digest of every field that affects outputs. `jobs` is excluded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Parses `0,90,180,270` style lists.
pub fn parse_rotations(value: &str) -> std::result::Result<Vec<Orientation>, String> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let deg: u32 = part.parse().map_err(|_| format!("rotations: cannot parse {part:?}"))?;
        out.push(Orientation::from_degrees(deg).map_err(|e| e.to_string())?);
    }
    if out.is_empty() {
        return Err("rotations: empty list".into());
    }
    Ok(normalize_rotations(&out))
}

fn normalize_rotations(rotations: &[Orientation]) -> Vec<Orientation> {
    let mut r = rotations.to_vec();
    r.sort();
    r.dedup();
    r
}
