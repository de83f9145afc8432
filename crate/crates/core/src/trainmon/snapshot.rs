use serde::{Deserialize, Serialize};

use super::{ClusterDim, LabeledWindow, PointMode};
use crate::clusterlab::{ari, best_matching, cluster, ClusterMethod, PointSet};
use crate::embedding::{assemble_global, assemble_state_matrix, mode_count, pod, project, project_bundle, PODBasis, Trajectory};
use crate::numcore::Matrix;
use crate::seqmodel::{forward, mse_loss, SeqModelParams, StateBundle};
use crate::Result;

pub use crate::embedding::TrajectoryKind as StateKind;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotOptions {
    pub sve_levels: Vec<f64>,
    pub cluster_dims: Vec<ClusterDim>,
    pub cluster_method: ClusterMethod,
    pub point_mode: PointMode,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for SnapshotOptions {
    fn default() -> Self {
        Self {
            sve_levels: vec![0.90, 0.99],
            cluster_dims: vec![ClusterDim::Count(3), ClusterDim::Full],
            cluster_method: ClusterMethod::AgglomerativeSingleCosine,
            point_mode: PointMode::Rows,
            embed_dim: 3,
            seed: 0,
        }
    }
}

/// Modes needed to reach `level` of the energy of one state matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCount {
    pub kind: StateKind,
    pub level: f64,
    /// `None` for the matrix pooled over all types.
    pub type_label: Option<usize>,
    /// `None` when the matrix carries no energy.
    pub count: Option<usize>,
}

/// Clustering agreement for one state kind and dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AriEntry {
    pub kind: StateKind,
    pub dim: ClusterDim,
    pub resolved_dim: usize,
    pub value: f64,
    /// One-vs-rest ARI of every type against its matched cluster.
    pub per_class: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSnapshot {
    pub iteration: usize,
    pub basis: PODBasis,
    pub sigma: Vec<f64>,
    /// `|sigma_i(now) - sigma_i(previous snapshot)|`; empty for the first one.
    pub sigma_deltas: Vec<f64>,
    pub encoder: Vec<Trajectory>,
    pub decoder: Vec<Trajectory>,
    pub mode_counts: Vec<ModeCount>,
    pub ari: Vec<AriEntry>,
    /// ARI of the raw input rows clustered the same way, all modes.
    pub raw_ari: Option<f64>,
    /// Mean loss of the representative windows.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

impl EmbeddingSnapshot {
    pub fn ari_of(&self, kind: StateKind, dim: ClusterDim) -> Option<f64> {
        self.ari.iter().find(|a| a.kind == kind && a.dim == dim).map(|a| a.value)
    }

    pub fn mode_count_of(&self, kind: StateKind, level: f64, type_label: Option<usize>) -> Option<usize> {
        self.mode_counts
            .iter()
            .find(|m| m.kind == kind && m.level == level && m.type_label == type_label)
            .and_then(|m| m.count)
    }

    pub fn set_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
        for t in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            t.iteration = Some(iteration);
        }
    }

    pub(crate) fn set_previous_sigma(&mut self, prev: Option<&[f64]>) {
        self.sigma_deltas = prev
            .map(|p| self.sigma.iter().zip(p).map(|(a, b)| (a - b).abs()).collect())
            .unwrap_or_default();
    }
}

fn counts_for(m: &Matrix, kind: StateKind, label: Option<usize>, levels: &[f64], out: &mut Vec<ModeCount>) -> Result<()> {
    let sigma = if m.rows() >= 2 { pod(m)?.sigma } else { vec![0.0] };
    for &level in levels {
        out.push(ModeCount {
            kind,
            level,
            type_label: label,
            count: mode_count(&sigma, level).ok(),
        });
    }
    Ok(())
}

/// Clusters `blocks` (one matrix per type) in the given basis.
fn cluster_blocks(
    blocks: &[(usize, &Matrix)],
    basis: &PODBasis,
    dim: usize,
    opts: &SnapshotOptions,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let mut rows: Vec<Matrix> = Vec::with_capacity(blocks.len());
    let mut truth = Vec::new();
    for &(label, m) in blocks {
        let p = project(m, basis, dim)?;
        match opts.point_mode {
            PointMode::Rows => {
                truth.extend(std::iter::repeat_n(label, p.rows()));
                rows.push(p);
            }
            PointMode::TrajectoryMean => {
                truth.push(label);
                rows.push(Matrix::from_vec(1, dim, p.col_means())?);
            }
        }
    }
    let refs: Vec<&Matrix> = rows.iter().collect();
    let points = Matrix::vstack(&refs)?;
    let mut types = truth.clone();
    types.sort_unstable();
    types.dedup();
    let ps = PointSet::new(points, Some(truth.clone()))?;
    let result = cluster(&ps, types.len(), opts.cluster_method, opts.seed)?;
    let value = ari(&result.labels, &truth)?;
    let (matching, _) = best_matching(&result.labels, &truth)?;
    let per_class = types
        .iter()
        .map(|&c| {
            let pred_cluster = matching.iter().find(|m| m.1 == c).map(|m| m.0);
            let t: Vec<usize> = truth.iter().map(|&l| usize::from(l == c)).collect();
            let p: Vec<usize> = result.labels.iter().map(|&l| usize::from(Some(l) == pred_cluster)).collect();
            Ok((c, ari(&p, &t)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((value, per_class))
}

/// Raw-input clustering ARI: inputs centered and rotated by their own POD, all modes.
pub fn raw_input_ari(windows: &[LabeledWindow], opts: &SnapshotOptions) -> Result<f64> {
    let inputs: Vec<Matrix> = windows.iter().map(|w| w.1.clone()).collect();
    let basis = pod(&assemble_global(&inputs)?)?;
    let blocks: Vec<(usize, &Matrix)> = windows.iter().map(|w| (w.0, &w.1)).collect();
    Ok(cluster_blocks(&blocks, &basis, basis.rank_bound(), opts)?.0)
}

/// Forward pass on one window per type plus everything derived from the states.
pub fn snapshot(params: &SeqModelParams, windows: &[LabeledWindow], opts: &SnapshotOptions) -> Result<EmbeddingSnapshot> {
    let mut bundles: Vec<(usize, StateBundle)> = Vec::with_capacity(windows.len());
    let mut loss = 0.0;
    for (label, x, y) in windows {
        let b = forward(x, params, y.rows())?;
        loss += mse_loss(y, &b.y_hat)?;
        bundles.push((*label, b));
    }
    loss /= windows.len().max(1) as f64;

    let states: Vec<Matrix> = bundles.iter().map(|(_, b)| assemble_state_matrix(b)).collect();
    let global = assemble_global(&states)?;
    let basis = pod(&global)?;
    let r = basis.rank_bound();
    let n = opts.embed_dim.min(r);

    let mut encoder = Vec::with_capacity(bundles.len());
    let mut decoder = Vec::with_capacity(bundles.len());
    for (label, b) in &bundles {
        let (e, d) = project_bundle(b, &basis, n, Some(*label))?;
        encoder.push(e);
        decoder.push(d);
    }

    let mut mode_counts = Vec::new();
    let levels = &opts.sve_levels;
    let enc_all = Matrix::vstack(&bundles.iter().map(|(_, b)| &b.e).collect::<Vec<_>>())?;
    let dec_all = Matrix::vstack(&bundles.iter().map(|(_, b)| &b.d).collect::<Vec<_>>())?;
    counts_for(&global, StateKind::Combined, None, levels, &mut mode_counts)?;
    counts_for(&enc_all, StateKind::Encoder, None, levels, &mut mode_counts)?;
    counts_for(&dec_all, StateKind::Decoder, None, levels, &mut mode_counts)?;
    for ((label, b), s) in bundles.iter().zip(&states) {
        counts_for(s, StateKind::Combined, Some(*label), levels, &mut mode_counts)?;
        counts_for(&b.e, StateKind::Encoder, Some(*label), levels, &mut mode_counts)?;
        counts_for(&b.d, StateKind::Decoder, Some(*label), levels, &mut mode_counts)?;
    }

    let mut ari_entries = Vec::new();
    for kind in [StateKind::Decoder, StateKind::Encoder] {
        let blocks: Vec<(usize, &Matrix)> = bundles
            .iter()
            .map(|(l, b)| (*l, if kind == StateKind::Decoder { &b.d } else { &b.e }))
            .collect();
        for &dim in &opts.cluster_dims {
            let resolved = dim.resolve(r);
            let (value, per_class) = cluster_blocks(&blocks, &basis, resolved, opts)?;
            ari_entries.push(AriEntry {
                kind,
                dim,
                resolved_dim: resolved,
                value,
                per_class,
            });
        }
    }

    Ok(EmbeddingSnapshot {
        iteration: 0,
        sigma: basis.sigma.clone(),
        basis,
        sigma_deltas: Vec::new(),
        encoder,
        decoder,
        mode_counts,
        ari: ari_entries,
        raw_ari: Some(raw_input_ari(windows, opts)?),
        train_loss: loss,
        val_loss: None,
    })
}
