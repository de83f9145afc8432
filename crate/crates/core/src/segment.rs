//! Sliding-window segmentation of long sequences by decoder-state clustering.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clusterlab::{agglomerative_cosine, ari, matched_accuracy, PointSet};
use crate::embedding::{pod, project, PODBasis};
use crate::io::{write_json, CsvText};
use crate::numcore::Matrix;
use crate::seqmodel::{forward, SeqModelParams};
use crate::{Error, Result};

/// What represents one window for clustering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Mean of the window's decoder states.
    #[default]
    WindowMean,
    /// Every decoder state is a point; a window takes its rows' majority label.
    AllRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub encoder_steps: usize,
    pub decoder_steps: usize,
    pub stride: usize,
    pub k: usize,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    /// Modes kept for clustering; `None` keeps all of them.
    #[serde(default)]
    pub dims: Option<usize>,
}

impl ScanConfig {
    /// Stride defaults to a fifth of the decoder span.
    pub fn new(encoder_steps: usize, decoder_steps: usize, k: usize) -> Self {
        Self {
            encoder_steps,
            decoder_steps,
            stride: (decoder_steps / 5).max(1),
            k,
            feature_mode: FeatureMode::WindowMean,
            dims: None,
        }
    }

    pub fn for_model(params: &SeqModelParams, k: usize) -> Self {
        let c = params.config();
        Self::new(c.encoder_steps, c.decoder_steps, k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid("segmentation needs k >= 2"));
        }
        if self.encoder_steps == 0 || self.decoder_steps == 0 {
            return Err(Error::invalid("window lengths must be positive"));
        }
        if self.dims == Some(0) {
            return Err(Error::invalid("dims must be at least 1"));
        }
        Ok(())
    }

    fn span(&self) -> usize {
        self.encoder_steps + self.decoder_steps
    }
}

/// Decoder states of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanWindow {
    pub start: usize,
    /// `T_d x N` decoder states.
    pub decoder: Matrix,
    /// One row per point this window contributes.
    pub features: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOutput {
    pub frames: usize,
    pub windows: Vec<ScanWindow>,
}

/// Window start positions for `frames` frames.
pub fn window_starts(frames: usize, cfg: &ScanConfig) -> Vec<usize> {
    if frames < cfg.span() {
        return Vec::new();
    }
    (0..=frames - cfg.span()).step_by(cfg.stride).collect()
}

/// Runs the model on every window of `seq`.
pub fn scan_windows(seq: &Matrix, params: &SeqModelParams, cfg: &ScanConfig) -> Result<ScanOutput> {
    cfg.validate()?;
    if seq.rows() < cfg.span() {
        return Err(Error::invalid(format!(
            "sequence of {} frames is shorter than one window ({})",
            seq.rows(),
            cfg.span()
        )));
    }
    let mut windows = Vec::new();
    for start in window_starts(seq.rows(), cfg) {
        let x = seq.row_range(start, start + cfg.encoder_steps);
        let d = forward(&x, params, cfg.decoder_steps)?.d;
        let features = match cfg.feature_mode {
            FeatureMode::WindowMean => Matrix::from_vec(1, d.cols(), d.col_means())?,
            FeatureMode::AllRows => d.clone(),
        };
        windows.push(ScanWindow {
            start,
            decoder: d,
            features,
        });
    }
    Ok(ScanOutput {
        frames: seq.rows(),
        windows,
    })
}

/// POD basis of every decoder state the scan produced.
pub fn scan_basis(scan: &ScanOutput) -> Result<PODBasis> {
    let blocks: Vec<&Matrix> = scan.windows.iter().map(|w| &w.decoder).collect();
    pod(&Matrix::vstack(&blocks)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub frame_labels: Vec<usize>,
    pub window_starts: Vec<usize>,
    pub window_labels: Vec<usize>,
    /// Frames whose label differs from the previous frame.
    pub boundaries: Vec<usize>,
    /// Clusters holding a single window.
    pub singleton_clusters: Vec<usize>,
    pub accuracy: Option<f64>,
}

/// Most frequent value; ties go to the value seen first.
fn majority(values: impl Iterator<Item = usize>) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|c| c.0 == v) {
            Some(c) => c.1 += 1,
            None => counts.push((v, 1)),
        }
    }
    let mut best = counts[0];
    for &c in &counts[1..] {
        if c.1 > best.1 {
            best = c;
        }
    }
    best.0
}

/// Clusters the scan windows and spreads window labels over frames.
pub fn label_frames(scan: &ScanOutput, cfg: &ScanConfig, basis: &PODBasis, n: usize) -> Result<SegmentResult> {
    cfg.validate()?;
    let w = scan.windows.len();
    if w == 0 || (w > 1 && w < cfg.k) {
        return Err(Error::invalid(format!("{w} windows cannot form {} clusters", cfg.k)));
    }
    let blocks: Vec<&Matrix> = scan.windows.iter().map(|s| &s.features).collect();
    let points = project(&Matrix::vstack(&blocks)?, basis, n)?;

    let window_labels = if w == 1 {
        vec![0]
    } else {
        let owner: Vec<usize> = scan
            .windows
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::repeat_n(i, s.features.rows()))
            .collect();
        let labels = agglomerative_cosine(&PointSet::new(points, None)?, cfg.k)?.labels;
        (0..w)
            .map(|i| majority(owner.iter().zip(&labels).filter(|(o, _)| **o == i).map(|(_, l)| *l)))
            .collect()
    };

    let mut frame_labels = Vec::with_capacity(scan.frames);
    for f in 0..scan.frames {
        let covering = scan.windows.iter().zip(&window_labels).filter(|(s, _)| {
            let lo = s.start + cfg.encoder_steps;
            lo <= f && f < lo + cfg.decoder_steps
        });
        let label = match covering.clone().next() {
            Some(_) => majority(covering.map(|(_, &l)| l)),
            None if f < scan.windows[0].start + cfg.encoder_steps => window_labels[0],
            None => window_labels[w - 1],
        };
        frame_labels.push(label);
    }
    let boundaries = (1..frame_labels.len())
        .filter(|&f| frame_labels[f] != frame_labels[f - 1])
        .collect();
    let mut sizes = vec![0usize; window_labels.iter().max().map_or(0, |m| m + 1)];
    for &l in &window_labels {
        sizes[l] += 1;
    }
    let singleton_clusters = sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1 && w > 1)
        .map(|(c, _)| c)
        .collect();
    Ok(SegmentResult {
        frame_labels,
        window_starts: scan.windows.iter().map(|s| s.start).collect(),
        window_labels,
        boundaries,
        singleton_clusters,
        accuracy: None,
    })
}

/// Scan, build the basis from the scan and label every frame.
pub fn segment_sequence(seq: &Matrix, params: &SeqModelParams, cfg: &ScanConfig) -> Result<SegmentResult> {
    let scan = scan_windows(seq, params, cfg)?;
    let basis = scan_basis(&scan)?;
    let n = cfg.dims.unwrap_or(basis.rank_bound()).min(basis.rank_bound());
    label_frames(&scan, cfg, &basis, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentEvaluation {
    pub matched_accuracy: f64,
    pub ari: f64,
    /// Frames at which the true labels change.
    pub true_boundaries: Vec<usize>,
    /// Distance from each true boundary to the nearest predicted one.
    pub boundary_errors: Vec<Option<usize>>,
}

impl SegmentEvaluation {
    pub fn max_boundary_error(&self) -> Option<usize> {
        self.boundary_errors
            .iter()
            .try_fold(0, |m, e| e.map(|e| m.max(e)))
    }
}

pub fn evaluate_segmentation(result: &SegmentResult, truth: &[usize]) -> Result<SegmentEvaluation> {
    if truth.len() != result.frame_labels.len() {
        return Err(Error::invalid(format!(
            "{} truth labels for {} frames",
            truth.len(),
            result.frame_labels.len()
        )));
    }
    let true_boundaries: Vec<usize> = (1..truth.len()).filter(|&f| truth[f] != truth[f - 1]).collect();
    let boundary_errors = true_boundaries
        .iter()
        .map(|&b| result.boundaries.iter().map(|&p| p.abs_diff(b)).min())
        .collect();
    Ok(SegmentEvaluation {
        matched_accuracy: matched_accuracy(&result.frame_labels, truth)?,
        ari: ari(&result.frame_labels, truth)?,
        true_boundaries,
        boundary_errors,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub k: usize,
    pub stride: usize,
    pub encoder_steps: usize,
    pub decoder_steps: usize,
    pub feature_mode: FeatureMode,
    pub dims: usize,
    pub frames: usize,
    pub windows: usize,
    pub boundaries: Vec<usize>,
    pub singleton_clusters: Vec<usize>,
    pub accuracy: Option<f64>,
    pub ari: Option<f64>,
    pub boundary_errors: Option<Vec<Option<usize>>>,
}

/// Writes `frames.csv` and `summary.json`; returns both paths.
pub fn export_segmentation(
    dir: &Path,
    cfg: &ScanConfig,
    dims: usize,
    result: &SegmentResult,
    truth: Option<&[usize]>,
) -> Result<Vec<PathBuf>> {
    let eval = truth.map(|t| evaluate_segmentation(result, t)).transpose()?;
    let mut csv = match truth {
        Some(_) => CsvText::with_header(&["frame", "pred_label", "truth_label"]),
        None => CsvText::with_header(&["frame", "pred_label"]),
    };
    for (f, &l) in result.frame_labels.iter().enumerate() {
        let mut row = vec![f.to_string(), l.to_string()];
        if let Some(t) = truth {
            row.push(t[f].to_string());
        }
        csv.row(row);
    }
    let frames = dir.join("frames.csv");
    csv.write(&frames)?;
    let summary = SegmentSummary {
        k: cfg.k,
        stride: cfg.stride,
        encoder_steps: cfg.encoder_steps,
        decoder_steps: cfg.decoder_steps,
        feature_mode: cfg.feature_mode,
        dims,
        frames: result.frame_labels.len(),
        windows: result.window_labels.len(),
        boundaries: result.boundaries.clone(),
        singleton_clusters: result.singleton_clusters.clone(),
        accuracy: eval.as_ref().map(|e| e.matched_accuracy),
        ari: eval.as_ref().map(|e| e.ari),
        boundary_errors: eval.map(|e| e.boundary_errors),
    };
    let json = dir.join("summary.json");
    write_json(&json, &summary)?;
    Ok(vec![frames, json])
}
