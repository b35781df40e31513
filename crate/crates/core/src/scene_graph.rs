//! Scene clustering over the graph of kept pairs.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Clustering, PairMatchResult};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Connected components of the kept-pair graph. Components with two or more
/// images become clusters, ordered by size (descending) and then by smallest
/// member id; singletons become outliers.
pub fn build_clusters<S: AsRef<str>>(all_ids: &[S], results: &[PairMatchResult]) -> Result<Clustering> {
    let index: HashMap<&str, usize> = all_ids.iter().enumerate().map(|(i, s)| (s.as_ref(), i)).collect();
    let mut uf = UnionFind::new(all_ids.len());
    for r in results {
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string()));
        let (a, b) = (lookup(&r.pair.a)?, lookup(&r.pair.b)?);
        if r.kept {
            uf.union(a, b);
        }
    }
    let mut groups: HashMap<usize, BTreeSet<String>> = HashMap::new();
    for (i, id) in all_ids.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert(id.as_ref().to_string());
    }
    let mut clusters = Vec::new();
    let mut outliers = BTreeSet::new();
    for (_, members) in groups {
        if members.len() >= 2 {
            clusters.push(members);
        } else {
            outliers.extend(members);
        }
    }
    clusters.sort_by(|x, y| y.len().cmp(&x.len()).then_with(|| x.first().cmp(&y.first())));
    Clustering::new(clusters, outliers)
}

#[derive(Serialize, Deserialize)]
struct ClustersFile {
    clusters: Vec<Vec<String>>,
    outliers: Vec<String>,
}

/// `{"clusters": [[ids...], ...], "outliers": [ids...]}`, ids sorted in each set.
pub fn clustering_to_json(c: &Clustering) -> String {
    let file = ClustersFile {
        clusters: c.clusters.iter().map(|s| s.iter().cloned().collect()).collect(),
        outliers: c.outliers.iter().cloned().collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("clusters serialize");
    s.push('\n');
    s
}

pub fn clustering_from_json(text: &str) -> Result<Clustering> {
    let file: ClustersFile = serde_json::from_str(text).map_err(|e| Error::parse("clusters", e))?;
    let clusters: Vec<BTreeSet<String>> = file
        .clusters
        .into_iter()
        .map(|c| {
            let n = c.len();
            let set: BTreeSet<String> = c.into_iter().collect();
            if set.len() != n {
                return Err(Error::InvalidClustering("duplicate id inside a cluster".into()));
            }
            Ok(set)
        })
        .collect::<Result<_>>()?;
    Clustering::new(clusters, file.outliers.into_iter().collect())
}

pub fn save_clustering(path: &Path, c: &Clustering) -> Result<()> {
    std::fs::write(path, clustering_to_json(c)).map_err(|e| Error::io(path, e))
}

pub fn load_clustering(path: &Path) -> Result<Clustering> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    clustering_from_json(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        Error::InvalidClustering(m) => Error::InvalidClustering(format!("{}: {m}", path.display())),
        other => other,
    })
}
