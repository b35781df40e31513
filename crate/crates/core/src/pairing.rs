//! Candidate pair generation.
//!
//! Small datasets are paired exhaustively. Larger ones rank every unordered
//! pair by global-descriptor distance, keep pairs under the distance
//! threshold, and top up from the ranking until the per-dataset floor is met.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DistanceThreshold, PipelineConfig};
use crate::error::{Error, Result};
use crate::global_desc::DescriptorProvider;
use crate::model::{CandidatePair, DatasetManifest, GlobalDescriptor};

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Every unordered pair of `ids`, canonical and in lexicographic order.
pub fn exhaustive_pairs<S: AsRef<str>>(ids: &[S]) -> Result<Vec<CandidatePair>> {
    let mut pairs = Vec::with_capacity(pair_count(ids.len()));
    for (i, p) in ids.iter().enumerate() {
        for q in &ids[i + 1..] {
            pairs.push(CandidatePair::unscored(p.as_ref(), q.as_ref())?);
        }
    }
    pairs.sort_by(|x, y| x.key().cmp(&y.key()));
    Ok(pairs)
}

fn rank_order(x: &CandidatePair, y: &CandidatePair) -> Ordering {
    x.distance
        .total_cmp(&y.distance)
        .then_with(|| x.key().cmp(&y.key()))
}

/// Distance-ranked pairs: all pairs within the threshold, extended with the
/// next-closest pairs until `min(min_pairs, C(N,2))` are present.
pub fn retrieval_pairs(descriptors: &[GlobalDescriptor], config: &PipelineConfig) -> Result<Vec<CandidatePair>> {
    let n = descriptors.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let dim = descriptors[0].dim();
    if let Some(bad) = descriptors.iter().find(|d| d.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let rows: Vec<Vec<CandidatePair>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let d = descriptors[i].distance(&descriptors[j])?;
                    CandidatePair::new(&descriptors[i].image_id, &descriptors[j].image_id, d, true)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranked: Vec<CandidatePair> = rows.into_iter().flatten().collect();
    ranked.sort_by(rank_order);
    // Two descriptors sharing an id would collapse onto one canonical pair.
    ranked.dedup_by(|x, y| x.key() == y.key());

    let within = match config.distance_threshold {
        DistanceThreshold::Auto => 0,
        DistanceThreshold::Value(t) => ranked.iter().take_while(|p| p.distance <= t).count(),
    };
    let floor = config.min_pairs.min(ranked.len());
    ranked.truncate(within.max(floor));
    Ok(ranked)
}

/// Exhaustive below `exhaustive_threshold` images (no descriptors are
/// computed), retrieval otherwise.
pub fn adaptive_pairs(
    manifest: &DatasetManifest,
    provider: &dyn DescriptorProvider,
    config: &PipelineConfig,
) -> Result<Vec<CandidatePair>> {
    if manifest.len() < config.exhaustive_threshold {
        log::debug!("{}: {} images, exhaustive pairing", manifest.dataset_id, manifest.len());
        exhaustive_pairs(&manifest.ids())
    } else {
        log::debug!("{}: {} images, retrieval pairing", manifest.dataset_id, manifest.len());
        let descriptors = provider.descriptors(manifest)?;
        retrieval_pairs(&descriptors, config)
    }
}

#[derive(Serialize, Deserialize)]
struct PairLine {
    a: String,
    b: String,
    distance: f64,
    scored: bool,
}

pub fn write_pairs_jsonl(mut out: impl Write, pairs: &[CandidatePair]) -> std::io::Result<()> {
    for p in pairs {
        let line = PairLine {
            a: p.a.clone(),
            b: p.b.clone(),
            distance: p.distance,
            scored: p.scored,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_pairs(path: &Path, pairs: &[CandidatePair]) -> Result<()> {
    let mut buf = Vec::new();
    write_pairs_jsonl(&mut buf, pairs).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a pairs file, canonicalizing each line and dropping repeated pairs.
pub fn load_pairs(path: &Path) -> Result<Vec<CandidatePair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs_jsonl(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

pub fn parse_pairs_jsonl(text: &str) -> Result<Vec<CandidatePair>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: PairLine =
            serde_json::from_str(line).map_err(|e| Error::parse("pairs", format!("line {}: {e}", i + 1)))?;
        let pair = CandidatePair::new(l.a, l.b, l.distance, l.scored)?;
        if seen.insert((pair.a.clone(), pair.b.clone())) {
            out.push(pair);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    /// 1-D points; the vectors bypass normalization so distances are the
    /// plain position differences.
    fn line_descriptors(positions: &[f32]) -> Vec<GlobalDescriptor> {
        positions
            .iter()
            .enumerate()
            .map(|(i, &p)| GlobalDescriptor::unnormalized_for_test(((b'A' + i as u8) as char).to_string(), vec![p]))
            .collect()
    }

    fn config(threshold: DistanceThreshold, min_pairs: usize) -> PipelineConfig {
        PipelineConfig {
            distance_threshold: threshold,
            min_pairs,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn exhaustive_counts_and_order() {
        let ids: Vec<String> = (0..5).map(|i| format!("i{i}")).collect();
        assert_eq!(exhaustive_pairs(&ids).unwrap().len(), 10);
        assert!(exhaustive_pairs(&["solo"]).unwrap().is_empty());
        let keys: Vec<(String, String)> = exhaustive_pairs(&["c", "a", "b"])
            .unwrap()
            .into_iter()
            .map(|p| (p.a, p.b))
            .collect();
        assert_eq!(
            keys,
            vec![("a".into(), "b".into()), ("a".into(), "c".into()), ("b".into(), "c".into())]
        );
    }

    #[test]
    fn threshold_and_floor_worked_example() {
        // Positions 0, 1, 5 on a line: distances AB = 1, BC = 4, AC = 5.
        let descs = line_descriptors(&[0.0, 1.0, 5.0]);
        let one = retrieval_pairs(&descs, &config(DistanceThreshold::Value(2.0), 1)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].a.as_str(), one[0].b.as_str()), ("A", "B"));
        assert!((one[0].distance - 1.0).abs() < 1e-12);
        assert!(one[0].scored);

        let two = retrieval_pairs(&descs, &config(DistanceThreshold::Value(2.0), 2)).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!((two[1].a.as_str(), two[1].b.as_str()), ("B", "C"));
        assert!((two[1].distance - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_on_canonical_order() {
        let descs = line_descriptors(&[0.0, 1.0, 2.0]);
        let pairs = retrieval_pairs(&descs, &config(DistanceThreshold::Auto, 3)).unwrap();
        let keys: Vec<_> = pairs.iter().map(|p| (p.a.as_str(), p.b.as_str())).collect();
        assert_eq!(keys, vec![("A", "B"), ("B", "C"), ("A", "C")]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let descs = vec![GlobalDescriptor::new("a", vec![1.0, 0.0]), GlobalDescriptor::new("b", vec![1.0])];
        assert!(matches!(
            retrieval_pairs(&descs, &PipelineConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_canonicalizes_and_dedups() {
        let text = "{\"a\":\"y\",\"b\":\"x\",\"distance\":0.5,\"scored\":true}\n\
                    {\"a\":\"x\",\"b\":\"y\",\"distance\":0.5,\"scored\":true}\n";
        let pairs = parse_pairs_jsonl(text).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].a, "x");
        let mut buf = Vec::new();
        write_pairs_jsonl(&mut buf, &pairs).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"a\":\"x\",\"b\":\"y\",\"distance\":0.5,\"scored\":true}\n"
        );
    }

    fn random_descriptors(n: usize, seed: u64) -> Vec<GlobalDescriptor> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| GlobalDescriptor::new(format!("img{i:02}"), (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    proptest! {
        #[test]
        fn output_size_follows_threshold_and_floor(n in 2usize..14, seed in any::<u64>(), tau in 0.0f64..2.0, min_pairs in 1usize..100) {
            let descs = random_descriptors(n, seed);
            let cfg = config(DistanceThreshold::Value(tau), min_pairs);
            let pairs = retrieval_pairs(&descs, &cfg).unwrap();
            let mut within = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if descs[i].distance(&descs[j]).unwrap() <= tau {
                        within += 1;
                    }
                }
            }
            prop_assert_eq!(pairs.len(), within.max(min_pairs.min(pair_count(n))));
            let keys: HashSet<_> = pairs.iter().map(|p| (p.a.clone(), p.b.clone())).collect();
            prop_assert_eq!(keys.len(), pairs.len());
            prop_assert!(pairs.iter().all(|p| p.a < p.b));
            prop_assert!(pairs.windows(2).all(|w| rank_order(&w[0], &w[1]) == Ordering::Less));
        }

        #[test]
        fn raising_the_floor_never_removes_pairs(n in 2usize..12, seed in any::<u64>(), lo in 1usize..40, extra in 0usize..40) {
            let descs = random_descriptors(n, seed);
            let small = retrieval_pairs(&descs, &config(DistanceThreshold::Auto, lo)).unwrap();
            let large = retrieval_pairs(&descs, &config(DistanceThreshold::Auto, lo + extra)).unwrap();
            let large_keys: HashSet<_> = large.iter().map(|p| (p.a.clone(), p.b.clone())).collect();
            prop_assert!(small.iter().all(|p| large_keys.contains(&(p.a.clone(), p.b.clone()))));
        }

        #[test]
        fn saturated_floor_equals_exhaustive(n in 2usize..=8, seed in any::<u64>()) {
            let descs = random_descriptors(n, seed);
            let retrieved = retrieval_pairs(&descs, &config(DistanceThreshold::Auto, pair_count(n))).unwrap();
            let ids: Vec<_> = descs.iter().map(|d| d.image_id.clone()).collect();
            let exhaustive = exhaustive_pairs(&ids).unwrap();
            let a: HashSet<_> = retrieved.iter().map(|p| (p.a.clone(), p.b.clone())).collect();
            let b: HashSet<_> = exhaustive.iter().map(|p| (p.a.clone(), p.b.clone())).collect();
            prop_assert_eq!(a, b);
        }
    }
}
