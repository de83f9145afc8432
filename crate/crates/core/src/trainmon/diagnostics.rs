use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClusterDim, StateKind, TrainHistory};
use crate::{Error, Result};

/// Mode counts of one (kind, level, type) across snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCountSeries {
    pub kind: StateKind,
    pub level: f64,
    pub type_label: Option<usize>,
    pub iterations: Vec<usize>,
    pub counts: Vec<Option<usize>>,
}

impl ModeCountSeries {
    /// Whether the defined counts never drop between snapshots.
    pub fn is_non_decreasing(&self) -> bool {
        let defined: Vec<usize> = self.counts.iter().flatten().copied().collect();
        defined.windows(2).all(|w| w[0] <= w[1])
    }
}

pub fn mode_count_curve(history: &TrainHistory) -> Vec<ModeCountSeries> {
    let mut series: BTreeMap<(StateKind, u64, Option<usize>), ModeCountSeries> = BTreeMap::new();
    for s in &history.snapshots {
        for m in &s.mode_counts {
            let entry = series
                .entry((m.kind, m.level.to_bits(), m.type_label))
                .or_insert_with(|| ModeCountSeries {
                    kind: m.kind,
                    level: m.level,
                    type_label: m.type_label,
                    iterations: Vec::new(),
                    counts: Vec::new(),
                });
            entry.iterations.push(s.iteration);
            entry.counts.push(m.count);
        }
    }
    series.into_values().collect()
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("correlation needs two equally long series of length >= 2"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the series has zero variance".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between snapshot losses and snapshot ARIs.
pub fn loss_ari_correlation(history: &TrainHistory, kind: StateKind, dim: ClusterDim) -> Result<f64> {
    if history.snapshots.len() < 3 {
        return Err(Error::invalid("correlation needs at least three snapshots"));
    }
    let mut losses = Vec::new();
    let mut aris = Vec::new();
    for s in &history.snapshots {
        let a = s
            .ari_of(kind, dim)
            .ok_or_else(|| Error::invalid(format!("no {} ARI at dimension {}", kind.as_str(), dim.label())))?;
        losses.push(s.train_loss);
        aris.push(a);
    }
    pearson(&losses, &aris)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalIteration {
    pub ari_peak_iteration: usize,
    pub val_min_iteration: usize,
    /// Distance between the two in snapshot slots.
    pub gap: usize,
    pub ari_peak_slot: usize,
    pub val_min_slot: usize,
    /// Validation loss after the three-point centered moving average.
    pub smoothed_val_loss: Vec<f64>,
}

/// Centered moving average of width 3; end points average their two neighbours.
fn smooth3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(v.len() - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn first_extreme(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

/// Snapshot of peak decoder ARI versus snapshot of minimal smoothed validation loss.
pub fn detect_optimal_iteration(history: &TrainHistory, dim: ClusterDim) -> Result<OptimalIteration> {
    let snaps = &history.snapshots;
    let val: Vec<f64> = snaps
        .iter()
        .map(|s| s.val_loss.ok_or_else(|| Error::invalid("snapshots lack validation loss")))
        .collect::<Result<_>>()?;
    let ari: Vec<f64> = snaps
        .iter()
        .map(|s| {
            s.ari_of(StateKind::Decoder, dim)
                .ok_or_else(|| Error::invalid(format!("no decoder ARI at dimension {}", dim.label())))
        })
        .collect::<Result<_>>()?;
    let iterations: Vec<usize> = snaps.iter().map(|s| s.iteration).collect();
    optimal_from_series(&iterations, &val, &ari)
}

/// Same comparison on plain per-snapshot series.
pub fn optimal_from_series(iterations: &[usize], val_loss: &[f64], ari: &[f64]) -> Result<OptimalIteration> {
    if iterations.len() < 3 {
        return Err(Error::invalid("optimal-iteration detection needs at least three snapshots"));
    }
    if val_loss.len() != iterations.len() || ari.len() != iterations.len() {
        return Err(Error::invalid("series lengths differ"));
    }
    let smoothed = smooth3(val_loss);
    let ari_slot = first_extreme(ari, |a, b| a > b);
    let val_slot = first_extreme(&smoothed, |a, b| a < b);
    Ok(OptimalIteration {
        ari_peak_iteration: iterations[ari_slot],
        val_min_iteration: iterations[val_slot],
        gap: ari_slot.abs_diff(val_slot),
        ari_peak_slot: ari_slot,
        val_min_slot: val_slot,
        smoothed_val_loss: smoothed,
    })
}

/// First iteration whose training loss is below `threshold`.
pub fn iterations_to_reach(history: &TrainHistory, threshold: f64) -> Option<usize> {
    history.train_loss.iter().position(|&l| l < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_series_correlate_perfectly() {
        let loss = [4.0, 3.0, 2.0, 1.0];
        let ari = [0.1, 0.3, 0.5, 0.7];
        assert!((pearson(&loss, &ari).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&loss, &[0.5; 4]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn smoothing_keeps_monotone_series_monotone() {
        let s = smooth3(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(s, vec![4.5, 4.0, 3.0, 2.0, 1.5]);
        assert_eq!(first_extreme(&s, |a, b| a < b), 4);
        assert_eq!(first_extreme(&[1.0, 2.0, 2.0], |a, b| a > b), 1);
    }
}
