//! Synthetic trajectories, window extraction and CSV ingestion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{fmt_f64, CsvText};
use crate::numcore::Matrix;
use crate::{Error, Result};

/// Axis lengths used for the ellipse of the two-shape task.
pub const DEFAULT_ELLIPSE_RADII: (f64, f64) = (2.0, 1.0);

/// Samples of an axis-aligned ellipse (a circle when the radii agree).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSpec {
    pub center: (f64, f64),
    pub radii: (f64, f64),
    /// Number of rows produced.
    pub steps: usize,
    pub phase: f64,
    /// Number of revolutions covered by the `steps` rows.
    pub periods: f64,
}

impl ConicSpec {
    pub fn unit_circle(steps: usize) -> Self {
        Self {
            center: (0.0, 0.0),
            radii: (1.0, 1.0),
            steps,
            phase: 0.0,
            periods: 1.0,
        }
    }

    pub fn ellipse(steps: usize) -> Self {
        Self {
            radii: DEFAULT_ELLIPSE_RADII,
            ..Self::unit_circle(steps)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 4 {
            return Err(Error::invalid("a conic needs at least 4 samples"));
        }
        if self.radii.0 < 0.0 || self.radii.1 < 0.0 {
            return Err(Error::invalid("conic radii must be non-negative"));
        }
        if !(self.periods > 0.0 && self.periods.is_finite()) {
            return Err(Error::invalid("periods must be positive"));
        }
        Ok(())
    }
}

/// Row `t` (0-based) is `center + (a cos th, b sin th)`, `th = phase + 2 pi periods t / steps`.
pub fn gen_conic(spec: &ConicSpec) -> Result<Matrix> {
    spec.validate()?;
    let mut m = Matrix::zeros(spec.steps, 2);
    for t in 0..spec.steps {
        let th = spec.phase + 2.0 * PI * spec.periods * t as f64 / spec.steps as f64;
        m[(t, 0)] = spec.center.0 + spec.radii.0 * th.cos();
        m[(t, 1)] = spec.center.1 + spec.radii.1 * th.sin();
    }
    Ok(m)
}

/// A set of sequences sharing one feature count.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub sequences: Vec<Matrix>,
    pub labels: Option<Vec<usize>>,
    pub feature_names: Option<Vec<String>>,
    /// Display names (file stems for ingested data).
    pub names: Vec<String>,
}

impl SequenceBatch {
    pub fn new(sequences: Vec<Matrix>, labels: Option<Vec<usize>>) -> Result<Self> {
        let names = (0..sequences.len()).map(|i| format!("seq{i:03}")).collect();
        let b = Self {
            sequences,
            labels,
            feature_names: None,
            names,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.sequences.first() else {
            return Ok(());
        };
        let m = first.cols();
        if let Some(i) = self.sequences.iter().position(|s| s.cols() != m) {
            return Err(Error::invalid(format!(
                "sequence {i} has {} features, expected {m}",
                self.sequences[i].cols()
            )));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.sequences.len() {
                return Err(Error::invalid("labels do not align with sequences"));
            }
        }
        if let Some(f) = &self.feature_names {
            if f.len() != m {
                return Err(Error::invalid("feature names do not match the feature count"));
            }
        }
        if self.names.len() != self.sequences.len() {
            return Err(Error::invalid("names do not align with sequences"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.sequences.first().map_or(0, Matrix::cols)
    }

    /// Label of sequence `i`, falling back to its index.
    pub fn label_of(&self, i: usize) -> usize {
        self.labels.as_ref().map_or(i, |l| l[i])
    }

    /// Distinct labels in ascending order.
    pub fn types(&self) -> Vec<usize> {
        let mut t: Vec<usize> = (0..self.len()).map(|i| self.label_of(i)).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// Appends a `K`-column one-hot label indicator to every row.
pub fn one_hot_augment(batch: &SequenceBatch, num_classes: usize) -> Result<SequenceBatch> {
    let labels = batch
        .labels
        .as_ref()
        .ok_or_else(|| Error::invalid("one-hot augmentation needs labels"))?;
    if num_classes == 0 {
        return Err(Error::invalid("need at least one class"));
    }
    let mut sequences = Vec::with_capacity(batch.len());
    for (s, &label) in batch.sequences.iter().zip(labels) {
        if label >= num_classes {
            return Err(Error::invalid(format!(
                "label {label} is out of range for {num_classes} classes"
            )));
        }
        let mut code = Matrix::zeros(s.rows(), num_classes);
        for t in 0..s.rows() {
            code[(t, label)] = 1.0;
        }
        sequences.push(s.hstack(&code)?);
    }
    let feature_names = batch.feature_names.as_ref().map(|f| {
        let mut f = f.clone();
        f.extend((0..num_classes).map(|k| format!("onehot{k}")));
        f
    });
    Ok(SequenceBatch {
        sequences,
        labels: batch.labels.clone(),
        feature_names,
        names: batch.names.clone(),
    })
}

/// How targets relate to inputs in a training pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// `Y` is the `T_d` rows that follow `X`.
    #[default]
    Continuation,
    /// `Y = X`; requires `T_d = T_e`.
    Repeat,
}

/// Cuts an `(X, Y)` pair out of `sequence` starting at `offset`.
pub fn make_pair(
    sequence: &Matrix,
    encoder_steps: usize,
    decoder_steps: usize,
    offset: usize,
    mode: WindowMode,
) -> Result<(Matrix, Matrix)> {
    let needed = match mode {
        WindowMode::Continuation => encoder_steps + decoder_steps,
        WindowMode::Repeat => {
            if decoder_steps != encoder_steps {
                return Err(Error::invalid("repeat windows need T_d = T_e"));
            }
            encoder_steps
        }
    };
    if encoder_steps == 0 || decoder_steps == 0 || offset + needed > sequence.rows() {
        return Err(Error::invalid(format!(
            "window [{offset}, {}) does not fit a sequence of {} rows",
            offset + needed,
            sequence.rows()
        )));
    }
    let x = sequence.row_range(offset, offset + encoder_steps);
    let y = match mode {
        WindowMode::Continuation => {
            sequence.row_range(offset + encoder_steps, offset + encoder_steps + decoder_steps)
        }
        WindowMode::Repeat => x.clone(),
    };
    Ok((x, y))
}

/// One periodic pattern of the multi-class catalogue.
#[derive(Clone, Copy, Debug)]
struct Pattern {
    name: &'static str,
    center: (f64, f64),
    amp: (f64, f64),
    /// Angular frequency multipliers per axis.
    freq: (f64, f64),
    /// Rows per base period.
    period: f64,
    /// Direction of travel (+1 counter-clockwise).
    turn: f64,
}

impl Pattern {
    const fn new(name: &'static str, center: (f64, f64), amp: (f64, f64), freq: (f64, f64), period: f64) -> Self {
        Self {
            name,
            center,
            amp,
            freq,
            period,
            turn: 1.0,
        }
    }

    fn sample(&self, steps: usize, phase: f64) -> Matrix {
        let mut m = Matrix::zeros(steps, 2);
        for t in 0..steps {
            let th = phase + self.turn * 2.0 * PI * t as f64 / self.period;
            m[(t, 0)] = self.center.0 + self.amp.0 * (self.freq.0 * th).cos();
            m[(t, 1)] = self.center.1 + self.amp.1 * (self.freq.1 * th).sin();
        }
        m
    }
}

/// Class catalogue. Entries 0 and 1 are the circle and ellipse of the
/// two-shape task; later entries add translated, rate-varied and Lissajous
/// patterns so classes differ spatially, temporally or both.
const CATALOGUE: [Pattern; 26] = {
    let mut c = [
        Pattern::new("circle", (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("ellipse", (0.0, 0.0), (2.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("shifted_circle", (3.0, 0.0), (1.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("fast_circle", (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), 25.0),
        Pattern::new("figure_eight", (0.0, 0.0), (1.0, 1.0), (1.0, 2.0), 50.0),
        Pattern::new("lissajous_3_2", (0.0, 0.0), (1.0, 1.0), (3.0, 2.0), 100.0),
        Pattern::new("slow_circle", (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), 100.0),
        Pattern::new("tall_ellipse", (0.0, 0.0), (1.0, 2.0), (1.0, 1.0), 50.0),
        Pattern::new("raised_circle", (0.0, 3.0), (1.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("left_circle", (-3.0, 0.0), (1.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("large_circle", (0.0, 0.0), (2.0, 2.0), (1.0, 1.0), 50.0),
        Pattern::new("reverse_circle", (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("fast_ellipse", (0.0, 0.0), (2.0, 1.0), (1.0, 1.0), 25.0),
        Pattern::new("fast_figure_eight", (0.0, 0.0), (1.0, 1.0), (1.0, 2.0), 25.0),
        Pattern::new("lissajous_1_3", (0.0, 0.0), (1.0, 1.0), (1.0, 3.0), 75.0),
        Pattern::new("lowered_ellipse", (0.0, -3.0), (2.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("small_circle", (0.0, 0.0), (0.5, 0.5), (1.0, 1.0), 50.0),
        Pattern::new("shifted_figure_eight", (3.0, 3.0), (1.0, 1.0), (1.0, 2.0), 50.0),
        Pattern::new("lissajous_3_4", (0.0, 0.0), (1.0, 1.0), (3.0, 4.0), 150.0),
        Pattern::new("medium_circle", (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), 35.0),
        Pattern::new("flat_ellipse", (0.0, 0.0), (2.5, 0.5), (1.0, 1.0), 50.0),
        Pattern::new("corner_circle", (-3.0, -3.0), (1.0, 1.0), (1.0, 1.0), 50.0),
        Pattern::new("lissajous_2_3", (0.0, 0.0), (1.0, 1.0), (2.0, 3.0), 100.0),
        Pattern::new("fast_shifted_circle", (3.0, 0.0), (1.0, 1.0), (1.0, 1.0), 25.0),
        Pattern::new("wide_figure_eight", (0.0, 0.0), (2.0, 1.0), (1.0, 2.0), 50.0),
        Pattern::new("slow_ellipse", (0.0, 0.0), (2.0, 1.0), (1.0, 1.0), 100.0),
    ];
    c[11].turn = -1.0;
    c
};

/// Name of catalogue class `k`.
pub fn class_name(k: usize) -> Option<&'static str> {
    CATALOGUE.get(k).map(|p| p.name)
}

/// `K` labelled periodic 2-D patterns, one sequence of `T` rows per class.
///
/// Classes 0 and 1 are the phase-0 unit circle and the default ellipse.
/// For later classes the seed draws a random starting phase.
pub fn gen_multiclass_corpus(num_classes: usize, steps: usize, seed: u64) -> Result<SequenceBatch> {
    if !(2..=CATALOGUE.len()).contains(&num_classes) {
        return Err(Error::invalid(format!(
            "the corpus supports 2..={} classes, got {num_classes}",
            CATALOGUE.len()
        )));
    }
    if steps < 4 {
        return Err(Error::invalid("sequences need at least 4 rows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(num_classes);
    let mut names = Vec::with_capacity(num_classes);
    for (k, p) in CATALOGUE.iter().take(num_classes).enumerate() {
        let phase = if k < 2 { 0.0 } else { rng.random_range(0.0..2.0 * PI) };
        sequences.push(p.sample(steps, phase));
        names.push(format!("{}_{k}", p.name));
    }
    Ok(SequenceBatch {
        sequences,
        labels: Some((0..num_classes).collect()),
        feature_names: Some(vec!["x".into(), "y".into()]),
        names,
    })
}

/// Concatenates sequences in `order`; every output row carries its source label.
pub fn concat_labeled(batch: &SequenceBatch, order: &[usize]) -> Result<(Matrix, Vec<usize>)> {
    if order.is_empty() {
        return Err(Error::invalid("nothing to concatenate"));
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= batch.len()) {
        return Err(Error::invalid(format!(
            "sequence index {bad} out of range for {} sequences",
            batch.len()
        )));
    }
    let blocks: Vec<&Matrix> = order.iter().map(|&i| &batch.sequences[i]).collect();
    let joined = Matrix::vstack(&blocks)?;
    let labels = order
        .iter()
        .flat_map(|&i| std::iter::repeat_n(batch.label_of(i), batch.sequences[i].rows()))
        .collect();
    Ok((joined, labels))
}

/// Label encoded as a trailing `_<n>` in a file stem.
fn stem_label(stem: &str) -> Option<usize> {
    let (_, tail) = stem.rsplit_once('_')?;
    tail.parse().ok()
}

fn ingest_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one CSV file; returns the optional header and the values.
pub fn read_csv_sequence(path: &Path) -> Result<(Option<Vec<String>>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ingest_err(path, 0, e.to_string()))?;
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| ingest_err(path, line, e.to_string()))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(|c| c.trim().parse::<f64>()).collect();
        if idx == 0 && parsed.iter().any(|p| p.is_err()) {
            header = Some(record.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(ingest_err(
                path,
                line,
                format!("row has {} cells, expected {expected}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(expected);
        for (col, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(ingest_err(
                        path,
                        line,
                        format!("cell {} is not a finite number: `{}`", col + 1, &record[col]),
                    ))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ingest_err(path, 0, "no data rows"));
    }
    Ok((header, Matrix::from_rows(&rows)?))
}

/// Loads every `*.csv` file in `dir` (sorted by name) as one sequence.
pub fn load_csv_dir(dir: impl AsRef<Path>) -> Result<SequenceBatch> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no csv files in {}", dir.display())));
    }

    let mut sequences = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    let mut labels = Vec::with_capacity(files.len());
    let mut feature_names: Option<Vec<String>> = None;
    for f in &files {
        let (header, m) = read_csv_sequence(f)?;
        if let Some(first) = sequences.first().map(Matrix::cols) {
            if m.cols() != first {
                return Err(ingest_err(
                    f,
                    1,
                    format!("{} features, earlier files have {first}", m.cols()),
                ));
            }
        }
        if feature_names.is_none() {
            feature_names = header;
        }
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        labels.push(stem_label(&stem));
        names.push(stem);
        sequences.push(m);
    }
    let labels = labels.into_iter().collect::<Option<Vec<_>>>();
    let batch = SequenceBatch {
        sequences,
        labels,
        feature_names,
        names,
    };
    batch.validate()?;
    Ok(batch)
}

/// CSV text of one sequence, 17 significant digits per value.
pub fn sequence_csv(seq: &Matrix, feature_names: Option<&[String]>) -> CsvText {
    let header: Vec<String> = match feature_names {
        Some(f) => f.to_vec(),
        None => (0..seq.cols()).map(|j| format!("f{j}")).collect(),
    };
    let mut csv = CsvText::with_header(&header);
    for r in seq.row_iter() {
        csv.row(r.iter().map(|&v| fmt_f64(v)));
    }
    csv
}

/// Writes one CSV file per sequence into `dir`; returns the written paths.
/// File stems end in `_<label>` whenever labels are present.
pub fn save_csv_dir(batch: &SequenceBatch, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::with_capacity(batch.len());
    for (i, seq) in batch.sequences.iter().enumerate() {
        let mut stem = batch.names[i].clone();
        if let Some(labels) = &batch.labels {
            if stem_label(&stem) != Some(labels[i]) {
                stem = format!("{stem}_{}", labels[i]);
            }
        }
        let path = dir.join(format!("{stem}.csv"));
        sequence_csv(seq, batch.feature_names.as_deref()).write(&path)?;
        out.push(path);
    }
    Ok(out)
}
