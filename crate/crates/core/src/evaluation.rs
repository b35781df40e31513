//! Clustering-based scoring.
//!
//! Ground-truth scenes are aligned one-to-one with predicted clusters by a
//! maximum-weight assignment on intersection sizes. From that alignment:
//!
//! * `maa` — mean over ground-truth scenes of `|S ∩ C| / |S|` (recall-like),
//! * `cl` — `Σ |S ∩ C| / Σ |C|` over aligned pairs (precision-like),
//! * `score` — harmonic mean of the two.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Clustering;

/// For each ground-truth cluster, the index of its aligned predicted cluster.
pub type Alignment = Vec<Option<usize>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub maa: f64,
    pub cl: f64,
    pub score: f64,
    pub per_cluster_accuracy: Vec<f64>,
    #[serde(skip)]
    pub alignment: Alignment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub maa: f64,
    pub cl: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiDatasetReport {
    pub datasets: Vec<EvalReport>,
    pub aggregate: AggregateScore,
}

/// `|gt_i ∩ pred_j|` for every pair of clusters.
pub fn intersection_matrix(gt: &Clustering, pred: &Clustering) -> Vec<Vec<i64>> {
    gt.clusters
        .iter()
        .map(|s| pred.clusters.iter().map(|c| s.intersection(c).count() as i64).collect())
        .collect()
}

/// Maximum total weight of a one-to-one assignment of rows to columns.
/// Weights must be non-negative; unmatched rows contribute nothing.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> i64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0;
    }
    // The solver needs rows ≤ cols.
    let matrix: Vec<Vec<i64>> = if rows <= cols {
        weights.to_vec()
    } else {
        (0..cols).map(|j| (0..rows).map(|i| weights[i][j]).collect()).collect()
    };
    let assignment = hungarian_min_cost(&matrix.iter().map(|r| r.iter().map(|w| -w).collect()).collect::<Vec<_>>());
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| matrix[i][j])
        .sum()
}

/// Shortest augmenting path Hungarian algorithm with potentials for an
/// `n × m` cost matrix, `n ≤ m`. Returns the column assigned to each row.
fn hungarian_min_cost(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    const INF: i64 = i64::MAX / 4;
    // 1-based internally; column 0 is the virtual source.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Aligns ground-truth clusters to predicted clusters, maximizing the total
/// intersection. Only positive-overlap links are used. Among optimal
/// alignments the lexicographically smallest is returned, comparing ground
/// truth clusters in order, with a lower predicted index ranking before a
/// higher one and any index ranking before `None`.
pub fn align_clusters(gt: &Clustering, pred: &Clustering) -> Alignment {
    let weights = intersection_matrix(gt, pred);
    let best = max_weight_assignment(&weights);
    let n = gt.clusters.len();
    let m = pred.clusters.len();
    let mut alignment = vec![None; n];
    let mut used = vec![false; m];
    let mut fixed = 0i64;
    for i in 0..n {
        for j in 0..m {
            if used[j] || weights[i][j] == 0 {
                continue;
            }
            let rest = remaining_best(&weights, i + 1, &used, Some(j));
            if fixed + weights[i][j] + rest == best {
                alignment[i] = Some(j);
                used[j] = true;
                fixed += weights[i][j];
                break;
            }
        }
    }
    debug_assert_eq!(fixed, best);
    alignment
}

/// Best assignment value for rows `from..` over columns not yet used.
fn remaining_best(weights: &[Vec<i64>], from: usize, used: &[bool], also_used: Option<usize>) -> i64 {
    let free: Vec<usize> = (0..used.len()).filter(|&j| !used[j] && Some(j) != also_used).collect();
    let sub: Vec<Vec<i64>> = weights[from..]
        .iter()
        .map(|row| free.iter().map(|&j| row[j]).collect())
        .collect();
    max_weight_assignment(&sub)
}

/// Total intersection achieved by `alignment`.
pub fn alignment_weight(gt: &Clustering, pred: &Clustering, alignment: &Alignment) -> usize {
    gt.clusters
        .iter()
        .zip(alignment)
        .filter_map(|(s, a)| a.map(|j| s.intersection(&pred.clusters[j]).count()))
        .sum()
}

/// Mean recovered fraction per ground-truth cluster. Returns `(maa, per-cluster accuracy)`.
pub fn compute_maa(gt: &Clustering, pred: &Clustering, alignment: &Alignment) -> (f64, Vec<f64>) {
    let acc: Vec<f64> = gt
        .clusters
        .iter()
        .zip(alignment)
        .map(|(s, a)| match a {
            Some(j) if !s.is_empty() => s.intersection(&pred.clusters[*j]).count() as f64 / s.len() as f64,
            _ => 0.0,
        })
        .collect();
    let maa = if acc.is_empty() {
        0.0
    } else {
        acc.iter().sum::<f64>() / acc.len() as f64
    };
    (maa, acc)
}

/// Total aligned intersection over total aligned predicted-cluster size.
/// Unaligned scenes and predicted outliers do not enter the denominator.
pub fn compute_cl(gt: &Clustering, pred: &Clustering, alignment: &Alignment) -> f64 {
    let (mut num, mut den) = (0usize, 0usize);
    for (s, a) in gt.clusters.iter().zip(alignment) {
        if let Some(j) = a {
            let c = &pred.clusters[*j];
            num += s.intersection(c).count();
            den += c.len();
        }
    }
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn final_score(maa: f64, cl: f64) -> f64 {
    if maa + cl == 0.0 {
        0.0
    } else {
        2.0 * maa * cl / (maa + cl)
    }
}

pub fn evaluate(dataset_id: &str, gt: &Clustering, pred: &Clustering) -> EvalReport {
    let alignment = align_clusters(gt, pred);
    let (maa, per_cluster_accuracy) = compute_maa(gt, pred, &alignment);
    let cl = compute_cl(gt, pred, &alignment);
    EvalReport {
        dataset_id: dataset_id.to_string(),
        maa,
        cl,
        score: final_score(maa, cl),
        per_cluster_accuracy,
        alignment,
    }
}

/// Per-dataset reports plus their unweighted mean. Every ground truth must
/// cover the same ids as its prediction.
pub fn evaluate_datasets(per_dataset: &[(String, Clustering, Clustering)]) -> Result<MultiDatasetReport> {
    if per_dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (_, gt, pred) in per_dataset {
        check_universes(gt, pred)?;
    }
    let datasets: Vec<EvalReport> = per_dataset
        .iter()
        .map(|(id, gt, pred)| evaluate(id, gt, pred))
        .collect();
    let n = datasets.len() as f64;
    let aggregate = AggregateScore {
        maa: datasets.iter().map(|r| r.maa).sum::<f64>() / n,
        cl: datasets.iter().map(|r| r.cl).sum::<f64>() / n,
        score: datasets.iter().map(|r| r.score).sum::<f64>() / n,
    };
    Ok(MultiDatasetReport { datasets, aggregate })
}

/// Both clusterings must cover the same image ids.
pub fn check_universes(gt: &Clustering, pred: &Clustering) -> Result<()> {
    let (g, p) = (gt.universe(), pred.universe());
    if g == p {
        return Ok(());
    }
    let diff = |x: &BTreeSet<String>, y: &BTreeSet<String>| x.difference(y).cloned().collect::<Vec<_>>();
    Err(Error::UniverseMismatch {
        only_gt: diff(&g, &p),
        only_pred: diff(&p, &g),
    })
}

pub fn metrics_to_json(report: &MultiDatasetReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn save_metrics(path: &Path, report: &MultiDatasetReport) -> Result<()> {
    std::fs::write(path, metrics_to_json(report)).map_err(|e| Error::io(path, e))
}
