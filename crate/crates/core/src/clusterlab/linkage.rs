//! Single-linkage clustering under cosine distance.
//!
//! Single linkage merges along the minimum spanning tree of the complete
//! distance graph. Edges are ordered by `(distance, low index, high index)`,
//! a strict total order, so the tree is unique and processing its edges in
//! that order reproduces pairwise merging with ties broken by the smallest
//! point indices.

use std::cmp::Ordering;

use super::{check_k, ClusterMethod, ClusterResult, PointSet};
use crate::numcore::{dot, norm};
use crate::{Error, Result};

/// `1 - cos(u, v)`, clamped at zero.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    (1.0 - dot(u, v) / (norm(u) * norm(v))).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Edge {
    d: f64,
    a: usize,
    b: usize,
}

impl Edge {
    fn new(d: f64, i: usize, j: usize) -> Self {
        Self {
            d,
            a: i.min(j),
            b: i.max(j),
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.d
            .total_cmp(&other.d)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

fn unit_rows(ps: &PointSet) -> Result<Vec<Vec<f64>>> {
    ps.points
        .row_iter()
        .enumerate()
        .map(|(i, r)| {
            let n = norm(r);
            if n == 0.0 {
                Err(Error::invalid(format!("point {i} has zero norm")))
            } else {
                Ok(r.iter().map(|x| x / n).collect())
            }
        })
        .collect()
}

/// Minimum spanning tree edges `(distance, i, j)` sorted in merge order.
pub fn single_linkage_mst(ps: &PointSet) -> Result<Vec<(f64, usize, usize)>> {
    let units = unit_rows(ps)?;
    let p = units.len();
    let dist = |i: usize, j: usize| (1.0 - dot(&units[i], &units[j])).max(0.0);

    let mut in_tree = vec![false; p];
    let mut best: Vec<Option<Edge>> = vec![None; p];
    let mut edges = Vec::with_capacity(p.saturating_sub(1));
    in_tree[0] = true;
    for j in 1..p {
        best[j] = Some(Edge::new(dist(0, j), 0, j));
    }
    for _ in 1..p {
        let (next, edge) = (0..p)
            .filter(|&j| !in_tree[j])
            .map(|j| (j, best[j].expect("candidate edge")))
            .min_by(|x, y| x.1.cmp(&y.1))
            .expect("vertices remain");
        in_tree[next] = true;
        edges.push(edge);
        for j in 0..p {
            if !in_tree[j] {
                let e = Edge::new(dist(next, j), next, j);
                if best[j].is_none_or(|b| e.cmp(&b) == Ordering::Less) {
                    best[j] = Some(e);
                }
            }
        }
    }
    edges.sort_by(Edge::cmp);
    Ok(edges.into_iter().map(|e| (e.d, e.a, e.b)).collect())
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage agglomerative clustering into `k` groups.
///
/// Labels are numbered by first appearance in point order.
pub fn agglomerative_cosine(ps: &PointSet, k: usize) -> Result<ClusterResult> {
    let p = ps.len();
    check_k(k, p)?;
    let mst = single_linkage_mst(ps)?;
    let mut parent: Vec<usize> = (0..p).collect();
    let mut components = p;
    for &(_, a, b) in &mst {
        if components == k {
            break;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
            components -= 1;
        }
    }
    let mut ids = vec![usize::MAX; p];
    let mut next = 0;
    let mut labels = Vec::with_capacity(p);
    for i in 0..p {
        let root = find(&mut parent, i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        labels.push(ids[root]);
    }
    Ok(ClusterResult {
        labels,
        k,
        method: ClusterMethod::AgglomerativeSingleCosine,
        inertia: None,
        seed: None,
        inertia_trace: Vec::new(),
        empty_clusters: Vec::new(),
    })
}
