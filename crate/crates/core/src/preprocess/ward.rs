//! Agglomerative clustering with Ward linkage.
//!
//! Merge heights are the increase in within-cluster sum of squares,
//! `n_a n_b / (n_a + n_b) * |c_a - c_b|^2`, so two points at distance `d`
//! merge at `d^2 / 2`. Cluster ids follow the usual convention: leaves are
//! `0..n`, the cluster made by merge `t` is `n + t`. Among equal heights the
//! pair with the smallest `(a, b)` ids wins.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller cluster id.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("nothing to cluster")]
    Empty,
    #[error("vector {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, got: usize, expected: usize },
}

pub fn ward_cluster(vectors: &[Vec<f64>]) -> Result<Dendrogram, ClusterError> {
    let n = vectors.len();
    let dim = vectors.first().ok_or(ClusterError::Empty)?.len();
    if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(ClusterError::Dimension { index, got: v.len(), expected: dim });
    }
    // slot i starts as leaf i; after a merge the lower slot holds the new cluster
    let mut d = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let sq: f64 = vectors[i].iter().zip(&vectors[j]).map(|(x, y)| (x - y) * (x - y)).sum();
            d[i][j] = sq / 2.0;
            d[j][i] = sq / 2.0;
        }
    }
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let (lo, hi) = (id[i].min(id[j]), id[i].max(id[j]));
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => d[i][j] < bd || (d[i][j] == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d[i][j], lo, hi, i, j));
                }
            }
        }
        let (dist, a, b, i, j) = best.expect("at least two active clusters");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((ni + nk) * d[k][i] + (nj + nk) * d[k][j] - nk * dist) / (ni + nj + nk);
            d[k][i] = v;
            d[i][k] = v;
        }
        active[j] = false;
        size[i] += size[j];
        id[i] = n + t;
        merges.push(Merge { a, b, distance: dist, size: size[i] });
    }
    Ok(Dendrogram { n, merges })
}

impl Dendrogram {
    /// Leaves left to right, visiting the smaller-id child first.
    pub fn leaf_order(&self) -> Vec<usize> {
        if self.n == 0 {
            return Vec::new();
        }
        let root = if self.merges.is_empty() { 0 } else { self.n + self.merges.len() - 1 };
        let mut out = Vec::with_capacity(self.n);
        let mut stack = vec![root];
        while let Some(c) = stack.pop() {
            if c < self.n {
                out.push(c);
            } else {
                let m = &self.merges[c - self.n];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out
    }
}
