//! Builds clusters from kept pairs and scores them against ground truth.
//!
//!     cargo run --release --example cluster_evaluation

use rotatematch::evaluation::{evaluate, evaluate_datasets};
use rotatematch::scene_graph::build_clusters;
use rotatematch::{CandidatePair, Clustering, OrientationCounts, PairMatchResult};

fn edge(a: &str, b: &str, total: usize) -> PairMatchResult {
    PairMatchResult {
        pair: CandidatePair::unscored(a, b).unwrap(),
        stage1_counts: OrientationCounts::default(),
        stage2_counts: OrientationCounts::default(),
        total,
        kept: total >= 25,
        correspondences: Vec::new(),
    }
}

fn main() -> rotatematch::Result<()> {
    let ids = ["a", "b", "c", "d", "e", "f"];
    let results = [edge("a", "b", 80), edge("c", "d", 40), edge("d", "e", 31), edge("b", "c", 12)];
    let predicted = build_clusters(&ids, &results)?;
    println!("predicted clusters {:?}, outliers {:?}", predicted.clusters, predicted.outliers);

    let truth = Clustering::from_lists(&[&["a", "b", "c"][..], &["d", "e"][..]], &["f"])?;
    let report = evaluate("toy", &truth, &predicted);
    println!("maa {:.4}  cl {:.4}  score {:.4}", report.maa, report.cl, report.score);
    println!("per-cluster accuracy {:?}, alignment {:?}", report.per_cluster_accuracy, report.alignment);

    let perfect = evaluate_datasets(&[
        ("toy".into(), truth.clone(), predicted),
        ("same".into(), truth.clone(), truth),
    ])?;
    println!("two datasets, mean score {:.4}", perfect.aggregate.score);
    Ok(())
}
