use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{mode_count_curve, AriEntry, ModeCount, TrainConfig, TrainHistory};
use crate::embedding::write_trajectories;
use crate::io::{fmt_f64, write_json, CsvText};
use crate::Result;

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-snapshot scalars kept in the history manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub raw_ari: Option<f64>,
    pub ari: Vec<AriEntry>,
    pub sigma: Vec<f64>,
    pub sigma_deltas: Vec<f64>,
    pub mode_counts: Vec<ModeCount>,
    pub trajectories: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryManifest {
    pub config: TrainConfig,
    pub iterations: usize,
    pub final_train_loss: Option<f64>,
    pub train_sequences: Vec<usize>,
    pub validation_sequences: Vec<usize>,
    pub snapshots: Vec<SnapshotSummary>,
    /// Mode-count series flagged when they ever decrease.
    pub decreasing_mode_series: Vec<String>,
}

/// Snapshot losses and ARIs, one row per snapshot.
pub fn loss_ari_table(history: &TrainHistory) -> CsvText {
    let keys: Vec<String> = history
        .snapshots
        .first()
        .map(|s| {
            s.ari
                .iter()
                .map(|a| format!("{}_ari_{}", a.kind.as_str(), a.dim.label()))
                .collect()
        })
        .unwrap_or_default();
    let mut header: Vec<String> = ["iteration", "train_loss", "val_loss", "raw_ari"].map(String::from).to_vec();
    header.extend(keys);
    let mut csv = CsvText::with_header(&header);
    for s in &history.snapshots {
        let mut row = vec![
            s.iteration.to_string(),
            fmt_f64(s.train_loss),
            opt_f64(s.val_loss),
            opt_f64(s.raw_ari),
        ];
        row.extend(s.ari.iter().map(|a| fmt_f64(a.value)));
        csv.row(row);
    }
    csv
}

/// Writes the plot-data files of a run into `dir`; returns every written path.
pub fn export_history(history: &TrainHistory, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let mut losses = CsvText::with_header(&["iteration", "train_loss", "val_loss"]);
    for (i, (t, v)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        losses.row([i.to_string(), fmt_f64(*t), opt_f64(*v)]);
    }
    let p = dir.join("history.csv");
    losses.write(&p)?;
    written.push(p);

    let mut summaries = Vec::with_capacity(history.snapshots.len());
    for s in &history.snapshots {
        let name = format!("snapshots/snapshot_{:06}.csv", s.iteration);
        let p = dir.join(&name);
        let trajs: Vec<_> = s.encoder.iter().chain(&s.decoder).cloned().collect();
        write_trajectories(&p, &trajs)?;
        written.push(p);
        summaries.push(SnapshotSummary {
            iteration: s.iteration,
            train_loss: s.train_loss,
            val_loss: s.val_loss,
            raw_ari: s.raw_ari,
            ari: s.ari.clone(),
            sigma: s.sigma.clone(),
            sigma_deltas: s.sigma_deltas.clone(),
            mode_counts: s.mode_counts.clone(),
            trajectories: name,
        });
    }

    let curves = mode_count_curve(history);
    let mut modes = CsvText::with_header(&["iteration", "kind", "level", "type_label", "count"]);
    for c in &curves {
        for (it, n) in c.iterations.iter().zip(&c.counts) {
            modes.row([
                it.to_string(),
                c.kind.as_str().to_string(),
                fmt_f64(c.level),
                opt_usize(c.type_label),
                opt_usize(*n),
            ]);
        }
    }
    let p = dir.join("mode_counts.csv");
    modes.write(&p)?;
    written.push(p);

    let mut sig = CsvText::with_header(&["iteration", "index", "sigma", "delta"]);
    for s in &history.snapshots {
        for (i, v) in s.sigma.iter().enumerate() {
            sig.row([
                s.iteration.to_string(),
                (i + 1).to_string(),
                fmt_f64(*v),
                opt_f64(s.sigma_deltas.get(i).copied()),
            ]);
        }
    }
    let p = dir.join("sigma.csv");
    sig.write(&p)?;
    written.push(p);

    let p = dir.join("loss_ari.csv");
    loss_ari_table(history).write(&p)?;
    written.push(p);

    let manifest = HistoryManifest {
        config: history.config.clone(),
        iterations: history.iterations(),
        final_train_loss: history.final_train_loss(),
        train_sequences: history.train_sequences.clone(),
        validation_sequences: history.validation_sequences.clone(),
        snapshots: summaries,
        decreasing_mode_series: curves
            .iter()
            .filter(|c| !c.is_non_decreasing())
            .map(|c| {
                format!(
                    "{}@{}/{}",
                    c.kind.as_str(),
                    c.level,
                    c.type_label.map_or("all".to_string(), |l| l.to_string())
                )
            })
            .collect(),
    };
    let p = dir.join("history.json");
    write_json(&p, &manifest)?;
    written.push(p);
    Ok(written)
}
