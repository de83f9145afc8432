//! Clustering of embedded points and partition scoring.

mod linkage;
mod metrics;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{write_json, CsvText};
use crate::numcore::{sq_dist, Matrix};
use crate::{Error, Result};

pub use linkage::{agglomerative_cosine, cosine_distance, single_linkage_mst};
pub use metrics::{ari, best_matching, contingency, matched_accuracy, EXACT_MATCHING_LIMIT};

/// Points to cluster, one per row, with optional reference labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub points: Matrix,
    pub truth: Option<Vec<usize>>,
}

impl PointSet {
    pub fn new(points: Matrix, truth: Option<Vec<usize>>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::invalid("a point set needs at least one point"));
        }
        if let Some(t) = &truth {
            if t.len() != points.rows() {
                return Err(Error::invalid(format!(
                    "{} truth labels for {} points",
                    t.len(),
                    points.rows()
                )));
            }
        }
        points.ensure_finite("points")?;
        Ok(Self { points, truth })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterMethod {
    #[serde(rename = "kmeans++")]
    KMeansPP,
    #[default]
    #[serde(rename = "agglomerative-single-cosine")]
    AgglomerativeSingleCosine,
}

impl ClusterMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::KMeansPP => "kmeans++",
            Self::AgglomerativeSingleCosine => "agglomerative-single-cosine",
        }
    }
}

impl std::str::FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans++" | "kmeans" => Ok(Self::KMeansPP),
            "agglomerative-single-cosine" | "agglomerative" => Ok(Self::AgglomerativeSingleCosine),
            _ => Err(Error::invalid(format!("unknown clustering method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: ClusterMethod,
    pub inertia: Option<f64>,
    pub seed: Option<u64>,
    /// Inertia after every assignment step (k-means only).
    pub inertia_trace: Vec<f64>,
    /// Cluster ids no point was assigned to.
    pub empty_clusters: Vec<usize>,
}

impl ClusterResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent seedings; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-9,
            n_init: 10,
        }
    }
}

fn check_k(k: usize, p: usize) -> Result<()> {
    if k == 0 || k > p {
        return Err(Error::invalid(format!("cannot form {k} clusters from {p} points")));
    }
    Ok(())
}

/// Index of the nearest centroid and the squared distance (ties to the lower index).
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(point, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let p = points.rows();
    let mut chosen = vec![rng.random_range(0..p)];
    let mut d2: Vec<f64> = (0..p).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            // every point coincides with a centroid
            let free: Vec<usize> = (0..p).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen.iter().map(|&i| points.row(i).to_vec()).collect()
}

/// One seeding plus Lloyd iterations: (labels, final inertia, trace).
fn lloyd(pts: &Matrix, k: usize, opts: &KMeansOptions, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64, Vec<f64>) {
    let p = pts.rows();
    let dim = pts.cols();
    let mut centroids = seed_centroids(pts, k, rng);
    let mut labels = vec![0; p];
    let mut trace = Vec::new();

    for _ in 0..opts.max_iter.max(1) {
        let mut inertia = 0.0;
        for (i, l) in labels.iter_mut().enumerate() {
            let (c, d) = nearest(pts.row(i), &centroids);
            *l = c;
            inertia += d;
        }
        trace.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(pts.row(i)) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            // an empty cluster keeps its centroid
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < opts.tol {
            break;
        }
    }

    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(pts.row(i), &centroids[l]))
        .sum();
    (labels, inertia, trace)
}

/// K-means with D²-weighted seeding followed by Lloyd iterations.
///
/// All `n_init` restarts draw from one generator seeded by `seed`; ties in
/// final inertia go to the earlier restart.
pub fn kmeans_pp(ps: &PointSet, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterResult> {
    check_k(k, ps.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64, Vec<f64>)> = None;
    for _ in 0..opts.n_init.max(1) {
        let run = lloyd(&ps.points, k, &opts, &mut rng);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (labels, inertia, trace) = best.expect("at least one restart");
    let mut result = ClusterResult {
        labels,
        k,
        method: ClusterMethod::KMeansPP,
        inertia: Some(inertia),
        seed: Some(seed),
        inertia_trace: trace,
        empty_clusters: Vec::new(),
    };
    result.empty_clusters = empty_clusters(&result);
    Ok(result)
}

fn empty_clusters(r: &ClusterResult) -> Vec<usize> {
    r.cluster_sizes()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0)
        .map(|(c, _)| c)
        .collect()
}

/// Runs `method`; the seed only matters for k-means.
pub fn cluster(ps: &PointSet, k: usize, method: ClusterMethod, seed: u64) -> Result<ClusterResult> {
    match method {
        ClusterMethod::KMeansPP => kmeans_pp(ps, k, seed, KMeansOptions::default()),
        ClusterMethod::AgglomerativeSingleCosine => agglomerative_cosine(ps, k),
    }
}

/// Scores attached to a clustering when reference labels exist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub method: ClusterMethod,
    pub k: usize,
    pub points: usize,
    pub ari: Option<f64>,
    pub matched_accuracy: Option<f64>,
    pub inertia: Option<f64>,
    pub seed: Option<u64>,
    pub cluster_sizes: Vec<usize>,
    pub empty_clusters: Vec<usize>,
}

pub fn summarize(result: &ClusterResult, truth: Option<&[usize]>) -> Result<ClusterSummary> {
    let (ari_v, acc) = match truth {
        Some(t) => (Some(ari(&result.labels, t)?), Some(matched_accuracy(&result.labels, t)?)),
        None => (None, None),
    };
    Ok(ClusterSummary {
        method: result.method,
        k: result.k,
        points: result.labels.len(),
        ari: ari_v,
        matched_accuracy: acc,
        inertia: result.inertia,
        seed: result.seed,
        cluster_sizes: result.cluster_sizes(),
        empty_clusters: result.empty_clusters.clone(),
    })
}

/// `point_index, pred_label[, truth_label]`.
pub fn assignments_csv(result: &ClusterResult, truth: Option<&[usize]>) -> CsvText {
    let mut csv = match truth {
        Some(_) => CsvText::with_header(&["point_index", "pred_label", "truth_label"]),
        None => CsvText::with_header(&["point_index", "pred_label"]),
    };
    for (i, &l) in result.labels.iter().enumerate() {
        let mut row = vec![i.to_string(), l.to_string()];
        if let Some(t) = truth {
            row.push(t[i].to_string());
        }
        csv.row(row);
    }
    csv
}

/// Writes `assignments.csv` and `summary.json` into `dir`; returns both paths.
pub fn export(
    dir: &Path,
    result: &ClusterResult,
    truth: Option<&[usize]>,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let csv_path = dir.join("assignments.csv");
    let json_path = dir.join("summary.json");
    assignments_csv(result, truth).write(&csv_path)?;
    write_json(&json_path, &summarize(result, truth)?)?;
    Ok((csv_path, json_path))
}

/// Inertia of a fixed labelling (squared distances to cluster means).
pub fn partition_inertia(points: &Matrix, labels: &[usize], k: usize) -> f64 {
    let dim = points.cols();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &x) in sums[l].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), &means[l]))
        .sum()
}
