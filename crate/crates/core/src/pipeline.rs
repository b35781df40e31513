//! End-to-end orchestration: pairing → extraction → matching → clustering.
//!
//! Each dataset gets its own output directory holding `pairs.jsonl`,
//! `features.rmkp`, `matches.jsonl`, `clusters.json` and `summary.json`.
//! Stage outputs are reused when `cache.json` records the same input digest.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Backend, PipelineConfig};
use crate::error::{Error, Result};
use crate::global_desc::{BuiltinDescriptors, DescriptorProvider, ExternalDescriptors};
use crate::local_features::{extract_all, load_external_features, write_rmkp};
use crate::matching::{match_all, save_matches};
use crate::model::{validate_manifest, CandidatePair, Clustering, DatasetManifest, FeatureSet, PairMatchResult};
use crate::pairing::{adaptive_pairs, save_pairs};
use crate::scene_graph::{build_clusters, save_clustering};

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const FEATURES_FILE: &str = "features.rmkp";
pub const MATCHES_FILE: &str = "matches.jsonl";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CACHE_FILE: &str = "cache.json";

/// Runs `f` on a pool with `jobs` workers (0 = available parallelism).
pub fn with_workers<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {jobs}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

pub fn ensure_valid(manifest: &DatasetManifest) -> Result<()> {
    let violations = validate_manifest(manifest);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidManifest(violations.join("; ")))
    }
}

fn descriptor_provider(config: &PipelineConfig) -> Result<Box<dyn DescriptorProvider>> {
    match &config.backend {
        Backend::Builtin => Ok(Box::new(BuiltinDescriptors)),
        Backend::External { descriptors: Some(path), .. } => Ok(Box::new(ExternalDescriptors { path: path.clone() })),
        Backend::External { descriptors: None, .. } => Err(Error::InvalidConfig(
            "external backend needs external_descriptors".into(),
        )),
    }
}

pub fn pair_stage(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<Vec<CandidatePair>> {
    let provider = descriptor_provider(config)?;
    adaptive_pairs(manifest, provider.as_ref(), config)
}

/// Features for every manifest image, in manifest order.
pub fn extract_stage(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<Vec<FeatureSet>> {
    match &config.backend {
        Backend::Builtin => extract_all(manifest, config),
        Backend::External { features: Some(path), .. } => {
            let mut by_id: HashMap<String, FeatureSet> = load_external_features(path, manifest)?
                .into_iter()
                .map(|f| (f.image_id.clone(), f))
                .collect();
            manifest
                .images
                .iter()
                .map(|r| by_id.remove(&r.id).ok_or_else(|| Error::MissingFeatures(r.id.clone())))
                .collect()
        }
        Backend::External { features: None, .. } => {
            Err(Error::InvalidConfig("external backend needs external_features".into()))
        }
    }
}

pub fn match_stage(
    pairs: &[CandidatePair],
    features: &[FeatureSet],
    config: &PipelineConfig,
) -> Result<Vec<PairMatchResult>> {
    let map: HashMap<String, FeatureSet> = features.iter().map(|f| (f.image_id.clone(), f.clone())).collect();
    match_all(pairs, &map, config)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset_id: String,
    pub images: usize,
    pub exhaustive: bool,
    pub pairs: usize,
    pub features: usize,
    pub kept_pairs: usize,
    pub clusters: usize,
    pub outliers: usize,
    pub config_digest: String,
}

/// Outputs of a full run, in memory.
#[derive(Clone, Debug)]
pub struct DatasetRun {
    pub pairs: Vec<CandidatePair>,
    pub features: Vec<FeatureSet>,
    pub matches: Vec<PairMatchResult>,
    pub clustering: Clustering,
    pub summary: RunSummary,
}

/// Runs every stage in memory without touching the output directory.
pub fn run_in_memory(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<DatasetRun> {
    config.validate()?;
    ensure_valid(manifest)?;
    with_workers(config.jobs, || {
        let pairs = pair_stage(manifest, config)?;
        let features = extract_stage(manifest, config)?;
        let matches = match_stage(&pairs, &features, config)?;
        let clustering = build_clusters(&manifest.ids(), &matches)?;
        let summary = summarize(manifest, config, &pairs, &features, &matches, &clustering);
        Ok(DatasetRun {
            pairs,
            features,
            matches,
            clustering,
            summary,
        })
    })
}

fn summarize(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    pairs: &[CandidatePair],
    features: &[FeatureSet],
    matches: &[PairMatchResult],
    clustering: &Clustering,
) -> RunSummary {
    RunSummary {
        dataset_id: manifest.dataset_id.clone(),
        images: manifest.len(),
        exhaustive: manifest.len() < config.exhaustive_threshold,
        pairs: pairs.len(),
        features: features.iter().map(FeatureSet::len).sum(),
        kept_pairs: matches.iter().filter(|m| m.kept).count(),
        clusters: clustering.clusters.len(),
        outliers: clustering.outliers.len(),
        config_digest: config.digest(),
    }
}

/// Stage-key store persisted as `cache.json`.
#[derive(Default, Serialize, Deserialize)]
struct StageCache {
    stages: BTreeMap<String, String>,
}

impl StageCache {
    fn load(dir: &Path) -> Self {
        std::fs::read_to_string(dir.join(CACHE_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    fn hit(&self, dir: &Path, stage: &str, file: &str, key: &str) -> bool {
        self.stages.get(stage).is_some_and(|k| k == key) && dir.join(file).is_file()
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CACHE_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("cache serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn digest_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest over image ids, order, and file contents.
fn manifest_digest(manifest: &DatasetManifest) -> Result<String> {
    let mut h = Sha256::new();
    h.update(manifest.dataset_id.as_bytes());
    for rec in &manifest.images {
        h.update([0u8]);
        h.update(rec.id.as_bytes());
        h.update([0u8]);
        h.update(file_digest(&rec.path)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn backend_digest(config: &PipelineConfig) -> Result<String> {
    let mut parts = Vec::new();
    if let Backend::External { descriptors, features } = &config.backend {
        for p in descriptors.iter().chain(features.iter()) {
            parts.push(file_digest(p)?);
        }
    }
    Ok(parts.join(","))
}

/// Full pipeline for one dataset, writing all intermediate files to `out_dir`.
/// Outputs from earlier stages stay on disk if a later stage fails.
pub fn run_dataset(manifest: &DatasetManifest, config: &PipelineConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    ensure_valid(manifest)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut cache = StageCache::load(out_dir);
    let cfg = config.digest();
    let inputs = manifest_digest(manifest)?;
    let backend = backend_digest(config)?;

    with_workers(config.jobs, || -> Result<RunSummary> {
        let pairs_key = digest_parts(&[b"pair", cfg.as_bytes(), inputs.as_bytes(), backend.as_bytes()]);
        let pairs = if cache.hit(out_dir, "pair", PAIRS_FILE, &pairs_key) {
            log::info!("{}: reusing {PAIRS_FILE}", manifest.dataset_id);
            crate::pairing::load_pairs(&out_dir.join(PAIRS_FILE))?
        } else {
            let pairs = pair_stage(manifest, config)?;
            save_pairs(&out_dir.join(PAIRS_FILE), &pairs)?;
            cache.stages.insert("pair".into(), pairs_key);
            cache.save(out_dir)?;
            pairs
        };
        log::info!("{}: {} candidate pairs", manifest.dataset_id, pairs.len());

        let feat_key = digest_parts(&[b"extract", cfg.as_bytes(), inputs.as_bytes(), backend.as_bytes()]);
        let features = if cache.hit(out_dir, "extract", FEATURES_FILE, &feat_key) {
            log::info!("{}: reusing {FEATURES_FILE}", manifest.dataset_id);
            load_external_features(&out_dir.join(FEATURES_FILE), manifest)?
        } else {
            let features = extract_stage(manifest, config)?;
            write_rmkp(&out_dir.join(FEATURES_FILE), &features)?;
            cache.stages.insert("extract".into(), feat_key);
            cache.save(out_dir)?;
            features
        };

        let match_key = digest_parts(&[
            b"match",
            cfg.as_bytes(),
            file_digest(&out_dir.join(PAIRS_FILE))?.as_bytes(),
            file_digest(&out_dir.join(FEATURES_FILE))?.as_bytes(),
        ]);
        let matches = if cache.hit(out_dir, "match", MATCHES_FILE, &match_key) {
            log::info!("{}: reusing {MATCHES_FILE}", manifest.dataset_id);
            crate::matching::load_matches(&out_dir.join(MATCHES_FILE))?
        } else {
            let matches = match_stage(&pairs, &features, config)?;
            save_matches(&out_dir.join(MATCHES_FILE), &matches)?;
            cache.stages.insert("match".into(), match_key);
            cache.save(out_dir)?;
            matches
        };

        let clustering = build_clusters(&manifest.ids(), &matches)?;
        save_clustering(&out_dir.join(CLUSTERS_FILE), &clustering)?;

        let summary = summarize(manifest, config, &pairs, &features, &matches, &clustering);
        let path = out_dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        log::info!(
            "{}: {} kept pairs, {} clusters, {} outliers",
            summary.dataset_id,
            summary.kept_pairs,
            summary.clusters,
            summary.outliers
        );
        Ok(summary)
    })
}

/// Output directory for one dataset under a run root.
pub fn dataset_dir(root: &Path, dataset_id: &str) -> PathBuf {
    let safe: String = dataset_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    root.join(safe)
}
