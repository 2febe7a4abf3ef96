//! Agglomerative hierarchical clustering with Ward linkage.

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Real;

/// One agglomeration step. Node numbering follows the usual convention:
/// leaves are `0..n`, the k-th merge creates node `n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Leaves under the created node.
    pub size: usize,
}

/// Stepwise dendrogram over `leaves` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Flat labels after cutting at `clusters` clusters. Labels are assigned
    /// by order of first leaf appearance, so they are canonical.
    pub fn cut(&self, clusters: usize) -> Result<Vec<usize>> {
        if clusters == 0 || clusters > self.leaves {
            return Err(Error::validation(format!(
                "cannot cut {} leaves into {clusters} clusters",
                self.leaves
            )));
        }
        let n = self.leaves;
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (k, merge) in self.merges.iter().take(n - clusters).enumerate() {
            let node = n + k;
            let a = find(&mut parent, merge.left);
            let b = find(&mut parent, merge.right);
            parent[a] = node;
            parent[b] = node;
        }
        let mut labels = vec![usize::MAX; n];
        let mut next = 0usize;
        let mut root_label: Vec<Option<usize>> = vec![None; n + self.merges.len()];
        for leaf in 0..n {
            let root = find(&mut parent, leaf);
            let label = match root_label[root] {
                Some(l) => l,
                None => {
                    let l = next;
                    next += 1;
                    root_label[root] = Some(l);
                    l
                }
            };
            labels[leaf] = label;
        }
        Ok(labels)
    }
}

/// Ward agglomeration over a symmetric zero-diagonal dissimilarity matrix,
/// using the Lance-Williams distance update. Ties in the merge choice break
/// toward the earliest cluster indices.
pub fn ward_cluster<F: Real>(dissimilarity: &SquareMatrix<F>) -> Result<Dendrogram> {
    let n = dissimilarity.n();
    if n < 2 {
        return Err(Error::validation("clustering requires at least 2 observations"));
    }
    if !dissimilarity.is_symmetric() {
        return Err(Error::validation("dissimilarity matrix must be symmetric"));
    }
    for i in 0..n {
        if dissimilarity.get(i, i) != F::zero() {
            return Err(Error::validation("dissimilarity matrix must have a zero diagonal"));
        }
    }

    // Active clusters: node id, leaf count, and a shrinking distance table.
    let mut nodes: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dissimilarity.get(i, j).as_f64()).collect())
        .collect();

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..(n - 1) {
        let active = nodes.len();
        let mut best = (f64::INFINITY, 0usize, 1usize);
        for a in 0..active {
            for b in (a + 1)..active {
                if dist[a][b] < best.0 {
                    best = (dist[a][b], a, b);
                }
            }
        }
        let (height, a, b) = best;
        let (left, right) = (nodes[a].min(nodes[b]), nodes[a].max(nodes[b]));
        let size_a = sizes[a];
        let size_b = sizes[b];
        let merged_size = size_a + size_b;
        merges.push(Merge { left, right, height, size: merged_size as usize });

        // Lance-Williams Ward update against every other cluster k.
        let d_ab = dist[a][b];
        for k in 0..active {
            if k == a || k == b {
                continue;
            }
            let size_k = sizes[k];
            let total = size_a + size_b + size_k;
            let d2 = ((size_a + size_k) * dist[a][k] * dist[a][k]
                + (size_b + size_k) * dist[b][k] * dist[b][k]
                - size_k * d_ab * d_ab)
                / total;
            let d_new = d2.max(0.0).sqrt();
            dist[a][k] = d_new;
            dist[k][a] = d_new;
        }
        nodes[a] = n + step;
        sizes[a] = merged_size;
        nodes.remove(b);
        sizes.remove(b);
        dist.remove(b);
        for row in dist.iter_mut() {
            row.remove(b);
        }
    }
    Ok(Dendrogram { leaves: n, merges })
}
