//! Two-stage, orientation-partitioned matching with a correspondence gate.
//!
//! Stage 1 matches every feature of A against B's features from one source
//! orientation at a time; stage 2 does the same with the roles swapped. All
//! eight per-orientation counts are summed and compared to the gate. The
//! same correspondence may count in both stages; only the reported
//! correspondence list is deduplicated.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{CandidatePair, Correspondence, FeatureSet, OrientationCounts, PairMatchResult};

/// Squared Euclidean distances between every row of `a` and every row of `b`.
struct DistanceMatrix {
    cols: usize,
    values: Vec<f32>,
}

#[inline]
fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            lanes[k] += d * d;
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    lanes.iter().sum::<f32>() + tail
}

impl DistanceMatrix {
    fn new(a: &[&[f32]], b: &[&[f32]]) -> Self {
        let mut values = Vec::with_capacity(a.len() * b.len());
        for ra in a {
            for rb in b {
                values.push(squared_distance(ra, rb));
            }
        }
        Self { cols: b.len(), values }
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }
}

/// Nearest and second-nearest among `candidates` (lowest index wins ties).
fn two_nearest(candidates: &[usize], dist: impl Fn(usize) -> f32) -> Option<(usize, f32, Option<f32>)> {
    let mut best: Option<(usize, f32)> = None;
    let mut second: Option<f32> = None;
    for &c in candidates {
        let d = dist(c);
        match best {
            None => best = Some((c, d)),
            Some((_, bd)) if d < bd => {
                second = Some(bd);
                best = Some((c, d));
            }
            Some(_) => {
                if second.is_none_or(|s| d < s) {
                    second = Some(d);
                }
            }
        }
    }
    best.map(|(c, d)| (c, d, second))
}

/// Mutual nearest neighbors with a ratio test on the query side.
///
/// `queries` are searched against `targets`; a pair survives if the target
/// is the query's nearest neighbor, passes `nearest ≤ ratio × second`
/// (skipped with a single target), and the query is the target's nearest
/// neighbor among `all_queries`. Distances come from `dist(query, target)`.
fn mutual_nn(
    queries: &[usize],
    all_queries: &[usize],
    targets: &[usize],
    ratio: f64,
    dist: &impl Fn(usize, usize) -> f32,
) -> Vec<(usize, usize)> {
    if targets.is_empty() || queries.is_empty() {
        return Vec::new();
    }
    let mut reverse_best: HashMap<usize, usize> = HashMap::with_capacity(targets.len());
    let mut out = Vec::new();
    for &q in queries {
        let Some((t, d1, d2)) = two_nearest(targets, |t| dist(q, t)) else {
            continue;
        };
        if let Some(d2) = d2 {
            // Squared distances: d1 ≤ r·d2  ⇔  d1² ≤ r²·d2².
            if d1 as f64 > ratio * ratio * d2 as f64 {
                continue;
            }
        }
        let back = *reverse_best
            .entry(t)
            .or_insert_with(|| two_nearest(all_queries, |qq| dist(qq, t)).expect("queries non-empty").0);
        if back == q {
            out.push((q, t));
        }
    }
    out
}

/// Mutual nearest-neighbor matching of two descriptor lists.
/// Returns `(index_a, index_b)` pairs in increasing `index_a`.
pub fn mutual_nn_match(a: &[&[f32]], b: &[&[f32]], ratio: f64) -> Result<Vec<(usize, usize)>> {
    if let Some(dim) = a.first().or(b.first()).map(|r| r.len()) {
        if let Some(bad) = a.iter().chain(b).find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
    }
    let matrix = DistanceMatrix::new(a, b);
    let all_a: Vec<usize> = (0..a.len()).collect();
    let all_b: Vec<usize> = (0..b.len()).collect();
    Ok(mutual_nn(&all_a, &all_a, &all_b, ratio, &|i, j| matrix.get(i, j)))
}

fn descriptor_rows(fs: &FeatureSet) -> Vec<&[f32]> {
    (0..fs.len()).map(|i| fs.descriptor(i)).collect()
}

/// Matches one candidate pair in both directions over every configured
/// orientation and applies the gate.
pub fn match_pair_two_stage(
    pair: &CandidatePair,
    fa: &FeatureSet,
    fb: &FeatureSet,
    config: &PipelineConfig,
) -> Result<PairMatchResult> {
    for (expected, fs) in [(&pair.a, fa), (&pair.b, fb)] {
        if &fs.image_id != expected {
            return Err(Error::FeatureIdMismatch {
                expected: expected.clone(),
                found: fs.image_id.clone(),
            });
        }
    }
    if !fa.is_empty() && !fb.is_empty() && fa.descriptor_dim() != fb.descriptor_dim() {
        return Err(Error::DimensionMismatch {
            expected: fa.descriptor_dim(),
            found: fb.descriptor_dim(),
        });
    }
    let matrix = DistanceMatrix::new(&descriptor_rows(fa), &descriptor_rows(fb));
    let all_a: Vec<usize> = (0..fa.len()).collect();
    let all_b: Vec<usize> = (0..fb.len()).collect();
    let a_to_b = |i: usize, j: usize| matrix.get(i, j);
    let b_to_a = |j: usize, i: usize| matrix.get(i, j);

    let mut stage1 = OrientationCounts::default();
    let mut stage2 = OrientationCounts::default();
    let mut seen = HashSet::new();
    let mut links: Vec<(usize, usize)> = Vec::new();

    for &o in &config.rotations {
        let b_sub = fb.indices_with_orientation(o);
        let m = mutual_nn(&all_a, &all_a, &b_sub, config.ratio_test, &a_to_b);
        stage1.set(o, m.len());
        for (i, j) in m {
            if seen.insert((i, j)) {
                links.push((i, j));
            }
        }
    }
    for &o in &config.rotations {
        let a_sub = fa.indices_with_orientation(o);
        let m = mutual_nn(&all_b, &all_b, &a_sub, config.ratio_test, &b_to_a);
        stage2.set(o, m.len());
        for (j, i) in m {
            if seen.insert((i, j)) {
                links.push((i, j));
            }
        }
    }

    let correspondences = links
        .into_iter()
        .map(|(i, j)| {
            let (ka, kb) = (fa.keypoints()[i], fb.keypoints()[j]);
            [ka.x, ka.y, kb.x, kb.y]
        })
        .collect();
    Ok(gated_result(pair.clone(), stage1, stage2, correspondences, config.match_gate))
}

/// Assembles a result from per-orientation counts; `kept` iff the summed
/// count reaches `match_gate`.
pub fn gated_result(
    pair: CandidatePair,
    stage1_counts: OrientationCounts,
    stage2_counts: OrientationCounts,
    correspondences: Vec<Correspondence>,
    match_gate: usize,
) -> PairMatchResult {
    let total = stage1_counts.sum() + stage2_counts.sum();
    PairMatchResult {
        pair,
        stage1_counts,
        stage2_counts,
        total,
        kept: total >= match_gate,
        correspondences,
    }
}

/// One result per input pair, in input order. Dropped pairs are reported
/// with `kept = false`.
pub fn match_all(
    pairs: &[CandidatePair],
    features: &HashMap<String, FeatureSet>,
    config: &PipelineConfig,
) -> Result<Vec<PairMatchResult>> {
    for p in pairs {
        for id in [&p.a, &p.b] {
            if !features.contains_key(id) {
                return Err(Error::MissingFeatures(id.clone()));
            }
        }
    }
    pairs
        .par_iter()
        .map(|p| match_pair_two_stage(p, &features[&p.a], &features[&p.b], config))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CountsJson {
    #[serde(rename = "0")]
    r0: usize,
    #[serde(rename = "90")]
    r90: usize,
    #[serde(rename = "180")]
    r180: usize,
    #[serde(rename = "270")]
    r270: usize,
}

impl From<OrientationCounts> for CountsJson {
    fn from(c: OrientationCounts) -> Self {
        let [r0, r90, r180, r270] = c.0;
        Self { r0, r90, r180, r270 }
    }
}

impl From<CountsJson> for OrientationCounts {
    fn from(c: CountsJson) -> Self {
        OrientationCounts([c.r0, c.r90, c.r180, c.r270])
    }
}

#[derive(Serialize, Deserialize)]
struct MatchLine {
    a: String,
    b: String,
    stage1: CountsJson,
    stage2: CountsJson,
    total: usize,
    kept: bool,
    correspondences: Vec<[f32; 4]>,
}

pub fn write_matches_jsonl(mut out: impl Write, results: &[PairMatchResult]) -> std::io::Result<()> {
    for r in results {
        let line = MatchLine {
            a: r.pair.a.clone(),
            b: r.pair.b.clone(),
            stage1: r.stage1_counts.into(),
            stage2: r.stage2_counts.into(),
            total: r.total,
            kept: r.kept,
            correspondences: r.correspondences.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_matches(path: &Path, results: &[PairMatchResult]) -> Result<()> {
    let mut buf = Vec::new();
    write_matches_jsonl(&mut buf, results).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Parses a matches file. `total` must equal the sum of the counts.
pub fn parse_matches_jsonl(text: &str) -> Result<Vec<PairMatchResult>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: MatchLine =
            serde_json::from_str(line).map_err(|e| Error::parse("matches", format!("line {}: {e}", i + 1)))?;
        let stage1: OrientationCounts = l.stage1.into();
        let stage2: OrientationCounts = l.stage2.into();
        if stage1.sum() + stage2.sum() != l.total {
            return Err(Error::parse(
                "matches",
                format!("line {}: total {} disagrees with counts", i + 1, l.total),
            ));
        }
        out.push(PairMatchResult {
            pair: CandidatePair::new(l.a, l.b, 0.0, false)?,
            stage1_counts: stage1,
            stage2_counts: stage2,
            total: l.total,
            kept: l.kept,
            correspondences: l.correspondences,
        });
    }
    Ok(out)
}

pub fn load_matches(path: &Path) -> Result<Vec<PairMatchResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matches_jsonl(&text)
}
