//! Training loop with embedding snapshots and training diagnostics.

mod diagnostics;
mod export;
mod snapshot;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clusterlab::ClusterMethod;
use crate::datagen::{make_pair, SequenceBatch, WindowMode};
use crate::numcore::Matrix;
use crate::seqmodel::{adam_update, forward, loss_and_gradients, mse_loss, Gradients, SeqModelConfig, SeqModelParams};
use crate::{Error, Result};

pub use diagnostics::{
    detect_optimal_iteration, iterations_to_reach, loss_ari_correlation, mode_count_curve, optimal_from_series, pearson,
    ModeCountSeries,
    OptimalIteration,
};
pub use export::{export_history, loss_ari_table, HistoryManifest, SnapshotSummary};
pub use snapshot::{snapshot, AriEntry, EmbeddingSnapshot, ModeCount, SnapshotOptions, StateKind};

/// Number of modes used for clustering: a fixed count or every available mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterDim {
    Count(usize),
    Full,
}

impl ClusterDim {
    /// Concrete dimension given `r` available modes.
    pub fn resolve(self, r: usize) -> usize {
        match self {
            Self::Count(n) => n.min(r),
            Self::Full => r,
        }
    }

    pub fn label(self) -> String {
        match self {
            Self::Count(n) => n.to_string(),
            Self::Full => "full".into(),
        }
    }
}

impl Serialize for ClusterDim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Count(n) => s.serialize_u64(*n as u64),
            Self::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterDim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("cluster dimension must be at least 1")),
            Raw::Count(n) => Ok(Self::Count(n)),
            Raw::Name(s) if s == "full" => Ok(Self::Full),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("unknown cluster dimension `{s}`"))),
        }
    }
}

/// Where training windows start inside each sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    /// Uniform over every offset the window fits at.
    #[default]
    Random,
    /// Always the same offset (a single window per sequence).
    Fixed(usize),
}

/// How validation loss is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationPolicy {
    #[default]
    None,
    /// Windows of the training sequences at phases offset from the training
    /// grid: `windows` evenly spaced starts, shifted by half a spacing.
    ShiftedWindows { windows: usize },
    /// A seeded fraction of the sequences is held out of training.
    HeldOutSequences { fraction: f64, windows: usize },
}

/// Learning rate over the course of training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// The model's `learning_rate` throughout.
    #[default]
    Constant,
    /// Geometric interpolation from `learning_rate` to `final_lr` at the last iteration.
    Exponential { final_lr: f64 },
}

impl LrSchedule {
    pub fn rate(self, base: f64, iteration: usize, iterations: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Exponential { final_lr } => {
                let frac = if iterations > 1 {
                    iteration as f64 / (iterations - 1) as f64
                } else {
                    0.0
                };
                base * (final_lr / base).powf(frac)
            }
        }
    }
}

/// Oversamples one class when drawing mini-batches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Imbalance {
    pub class: usize,
    /// Sampling weight of the class relative to every other class.
    pub factor: f64,
}

/// Which decoder rows become clustering points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMode {
    /// Every state row is a point labelled by its window's type.
    #[default]
    Rows,
    /// One mean vector per trajectory.
    TrajectoryMean,
}

fn default_sve_levels() -> Vec<f64> {
    vec![0.90, 0.99]
}

fn default_cluster_dims() -> Vec<ClusterDim> {
    vec![ClusterDim::Count(3), ClusterDim::Full]
}

fn default_embed_dim() -> usize {
    3
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: SeqModelConfig,
    pub iterations: usize,
    /// Sequences per mini-batch; `None` uses every training sequence.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub snapshot_iters: Vec<usize>,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub window_mode: WindowMode,
    #[serde(default)]
    pub offsets: OffsetPolicy,
    #[serde(default)]
    pub validation: ValidationPolicy,
    /// Evaluate validation loss every this many iterations.
    #[serde(default = "default_one")]
    pub validation_every: usize,
    #[serde(default = "default_sve_levels")]
    pub sve_levels: Vec<f64>,
    #[serde(default = "default_cluster_dims")]
    pub cluster_dims: Vec<ClusterDim>,
    #[serde(default)]
    pub cluster_method: ClusterMethod,
    #[serde(default)]
    pub point_mode: PointMode,
    /// Dimension of the stored snapshot trajectories.
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default)]
    pub imbalance: Option<Imbalance>,
    /// Append a one-hot class code to every input row before training.
    #[serde(default)]
    pub one_hot: bool,
}

impl TrainConfig {
    pub fn new(model: SeqModelConfig, iterations: usize) -> Self {
        Self {
            model,
            iterations,
            batch_size: None,
            snapshot_iters: Vec::new(),
            lr_schedule: LrSchedule::Constant,
            window_mode: WindowMode::Continuation,
            offsets: OffsetPolicy::Random,
            validation: ValidationPolicy::None,
            validation_every: 1,
            sve_levels: default_sve_levels(),
            cluster_dims: default_cluster_dims(),
            cluster_method: ClusterMethod::AgglomerativeSingleCosine,
            point_mode: PointMode::Rows,
            embed_dim: default_embed_dim(),
            imbalance: None,
            one_hot: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.snapshot_iters.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("snapshot_iters must be strictly ascending"));
        }
        if self.snapshot_iters.last().is_some_and(|&s| s > self.iterations) {
            return Err(Error::invalid("snapshot iteration beyond the training length"));
        }
        if self.sve_levels.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::invalid("sve_levels must lie in (0, 1]"));
        }
        if self.cluster_dims.is_empty() {
            return Err(Error::invalid("cluster_dims must not be empty"));
        }
        if self.batch_size == Some(0) || self.validation_every == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("batch_size, validation_every and embed_dim must be at least 1"));
        }
        if self.window_mode == WindowMode::Repeat && self.model.encoder_steps != self.model.decoder_steps {
            return Err(Error::invalid("repeat windows need T_d = T_e"));
        }
        match self.validation {
            ValidationPolicy::ShiftedWindows { windows } | ValidationPolicy::HeldOutSequences { windows, .. }
                if windows == 0 =>
            {
                return Err(Error::invalid("validation needs at least one window"))
            }
            ValidationPolicy::HeldOutSequences { fraction, .. } if !(fraction > 0.0 && fraction < 1.0) => {
                return Err(Error::invalid("held-out fraction must lie in (0, 1)"))
            }
            _ => {}
        }
        if let LrSchedule::Exponential { final_lr } = self.lr_schedule {
            if !(final_lr.is_finite() && final_lr > 0.0) {
                return Err(Error::invalid("final_lr must be positive"));
            }
        }
        if let Some(im) = self.imbalance {
            if !(im.factor.is_finite() && im.factor > 0.0) {
                return Err(Error::invalid("imbalance factor must be positive"));
            }
        }
        Ok(())
    }

    fn window_len(&self) -> usize {
        match self.window_mode {
            WindowMode::Continuation => self.model.encoder_steps + self.model.decoder_steps,
            WindowMode::Repeat => self.model.encoder_steps,
        }
    }

    pub(crate) fn snapshot_options(&self) -> SnapshotOptions {
        SnapshotOptions {
            sve_levels: self.sve_levels.clone(),
            cluster_dims: self.cluster_dims.clone(),
            cluster_method: self.cluster_method,
            point_mode: self.point_mode,
            embed_dim: self.embed_dim,
            seed: self.model.seed,
        }
    }
}

/// Everything a training run produced.
#[derive(Clone, Debug)]
pub struct TrainHistory {
    pub config: TrainConfig,
    /// Mean mini-batch loss of iteration `i` (before its update).
    pub train_loss: Vec<f64>,
    /// Validation loss before update `i`, where evaluated.
    pub val_loss: Vec<Option<f64>>,
    pub snapshots: Vec<EmbeddingSnapshot>,
    /// Sequence indices used for training and for validation.
    pub train_sequences: Vec<usize>,
    pub validation_sequences: Vec<usize>,
    pub params: SeqModelParams,
}

impl TrainHistory {
    pub fn iterations(&self) -> usize {
        self.train_loss.len()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.train_loss.last().copied()
    }
}

/// One `(type label, X, Y)` window.
pub type LabeledWindow = (usize, Matrix, Matrix);

/// Evenly spaced offsets, shifted by half a spacing.
fn shifted_offsets(max_offset: usize, count: usize) -> Vec<usize> {
    let span = (max_offset + 1) as f64 / count as f64;
    let mut v: Vec<usize> = (0..count)
        .map(|j| (((j as f64 + 0.5) * span) as usize).min(max_offset))
        .collect();
    v.dedup();
    v
}

/// Representative window per type: offset 0 of the first listed sequence of that type.
pub fn canonical_windows(batch: &SequenceBatch, cfg: &TrainConfig, among: &[usize]) -> Result<Vec<LabeledWindow>> {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in among {
        first.entry(batch.label_of(i)).or_insert(i);
    }
    first
        .into_iter()
        .map(|(label, i)| {
            let (x, y) = make_pair(
                &batch.sequences[i],
                cfg.model.encoder_steps,
                cfg.model.decoder_steps,
                0,
                cfg.window_mode,
            )?;
            Ok((label, x, y))
        })
        .collect()
}

/// Mean loss over windows, no gradients.
pub fn evaluate_loss(params: &SeqModelParams, windows: &[LabeledWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::invalid("no windows to evaluate"));
    }
    let mut total = 0.0;
    for (_, x, y) in windows {
        let b = forward(x, params, y.rows())?;
        total += mse_loss(y, &b.y_hat)?;
    }
    Ok(total / windows.len() as f64)
}

fn prepare_batch(cfg: &TrainConfig, batch: &SequenceBatch) -> Result<SequenceBatch> {
    if batch.is_empty() {
        return Err(Error::invalid("training needs at least one sequence"));
    }
    batch.validate()?;
    let batch = if cfg.one_hot {
        let k = batch
            .labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map(|m| m + 1)
            .ok_or_else(|| Error::invalid("one-hot training needs labels"))?;
        crate::datagen::one_hot_augment(batch, k)?
    } else {
        batch.clone()
    };
    if batch.feature_count() != cfg.model.input_dim {
        return Err(Error::invalid(format!(
            "sequences have {} features, the model expects {}",
            batch.feature_count(),
            cfg.model.input_dim
        )));
    }
    let need = cfg.window_len();
    if let Some(i) = batch.sequences.iter().position(|s| s.rows() < need) {
        return Err(Error::invalid(format!(
            "sequence `{}` has {} rows, windows need {need}",
            batch.names[i],
            batch.sequences[i].rows()
        )));
    }
    if let OffsetPolicy::Fixed(o) = cfg.offsets {
        if let Some(i) = batch.sequences.iter().position(|s| o + need > s.rows()) {
            return Err(Error::invalid(format!(
                "fixed offset {o} does not fit sequence `{}`",
                batch.names[i]
            )));
        }
    }
    Ok(batch)
}

/// Splits sequence indices into (train, validation).
fn split(cfg: &TrainConfig, batch: &SequenceBatch, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..batch.len()).collect();
    match cfg.validation {
        ValidationPolicy::HeldOutSequences { fraction, .. } => {
            let held = ((fraction * batch.len() as f64).ceil() as usize).max(1);
            if held >= batch.len() {
                return Err(Error::invalid("hold-out leaves no training sequences"));
            }
            let mut order = all;
            order.shuffle(rng);
            let mut val = order[..held].to_vec();
            let mut train = order[held..].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            Ok((train, val))
        }
        _ => Ok((all, Vec::new())),
    }
}

fn validation_windows(
    cfg: &TrainConfig,
    batch: &SequenceBatch,
    train: &[usize],
    val: &[usize],
) -> Result<Vec<LabeledWindow>> {
    let (seqs, count) = match cfg.validation {
        ValidationPolicy::None => return Ok(Vec::new()),
        ValidationPolicy::ShiftedWindows { windows } => (train, windows),
        ValidationPolicy::HeldOutSequences { windows, .. } => (val, windows),
    };
    let need = cfg.window_len();
    let mut out = Vec::new();
    for &i in seqs {
        let s = &batch.sequences[i];
        for o in shifted_offsets(s.rows() - need, count) {
            let (x, y) = make_pair(s, cfg.model.encoder_steps, cfg.model.decoder_steps, o, cfg.window_mode)?;
            out.push((batch.label_of(i), x, y));
        }
    }
    Ok(out)
}

/// Picks the sequences of one mini-batch.
fn draw_batch(cfg: &TrainConfig, batch: &SequenceBatch, train: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let b = cfg.batch_size.unwrap_or(train.len());
    if let Some(im) = cfg.imbalance {
        let weights: Vec<f64> = train
            .iter()
            .map(|&i| if batch.label_of(i) == im.class { im.factor } else { 1.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        return (0..b)
            .map(|_| {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if acc > target {
                        return train[k];
                    }
                }
                train[train.len() - 1]
            })
            .collect();
    }
    if b >= train.len() {
        return train.to_vec();
    }
    let mut pool = train.to_vec();
    pool.shuffle(rng);
    pool.truncate(b);
    pool.sort_unstable();
    pool
}

/// Trains from the seeded initialization.
pub fn train(cfg: &TrainConfig, batch: &SequenceBatch) -> Result<TrainHistory> {
    let params = SeqModelParams::init(&cfg.model)?;
    train_from(params, cfg, batch)
}

/// Trains `params` further; ADAM moments carry over.
pub fn train_from(mut params: SeqModelParams, cfg: &TrainConfig, batch: &SequenceBatch) -> Result<TrainHistory> {
    cfg.validate()?;
    if params.config() != &cfg.model {
        return Err(Error::invalid("parameters were built for a different model configuration"));
    }
    let batch = prepare_batch(cfg, batch)?;
    // offsets the sampling stream from the weight initialization stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.seed ^ 0x5851_f42d_4c95_7f2d);
    let (train_idx, val_idx) = split(cfg, &batch, &mut rng)?;
    let val_windows = validation_windows(cfg, &batch, &train_idx, &val_idx)?;
    let canon = canonical_windows(&batch, cfg, &train_idx)?;
    let opts = cfg.snapshot_options();
    let need = cfg.window_len();

    let mut train_loss = Vec::with_capacity(cfg.iterations);
    let mut val_loss = Vec::with_capacity(cfg.iterations);
    let mut snapshots = Vec::with_capacity(cfg.snapshot_iters.len());
    let mut pending = cfg.snapshot_iters.iter().peekable();
    let mut prev_sigma: Option<Vec<f64>> = None;

    let mut take_snapshot = |iteration: usize, params: &SeqModelParams, snapshots: &mut Vec<EmbeddingSnapshot>| -> Result<()> {
        let mut s = snapshot(params, &canon, &opts)?;
        s.set_iteration(iteration);
        s.set_previous_sigma(prev_sigma.as_deref());
        if !val_windows.is_empty() {
            s.val_loss = Some(evaluate_loss(params, &val_windows)?);
        }
        prev_sigma = Some(s.sigma.clone());
        snapshots.push(s);
        Ok(())
    };

    for it in 0..cfg.iterations {
        if pending.next_if_eq(&&it).is_some() {
            take_snapshot(it, &params, &mut snapshots)?;
        }
        let members = draw_batch(cfg, &batch, &train_idx, &mut rng);
        let mut grads = Gradients::zeros_like(&params);
        let mut loss = 0.0;
        let scale = 1.0 / members.len() as f64;
        for &i in &members {
            let s = &batch.sequences[i];
            let offset = match cfg.offsets {
                OffsetPolicy::Random => rng.random_range(0..=s.rows() - need),
                OffsetPolicy::Fixed(o) => o,
            };
            let (x, y) = make_pair(s, cfg.model.encoder_steps, cfg.model.decoder_steps, offset, cfg.window_mode)?;
            let (l, g) = loss_and_gradients(&x, &y, &params)?;
            loss += l * scale;
            grads.accumulate(&g, scale);
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration: it,
                last_good_iteration: it.checked_sub(1),
            });
        }
        train_loss.push(loss);
        val_loss.push(if !val_windows.is_empty() && it % cfg.validation_every == 0 {
            Some(evaluate_loss(&params, &val_windows)?)
        } else {
            None
        });
        let lr = cfg.lr_schedule.rate(cfg.model.learning_rate, it, cfg.iterations);
        adam_update(&mut params, &grads, lr).map_err(|e| match e {
            Error::NonFiniteGradient { .. } => Error::TrainingDiverged {
                iteration: it,
                last_good_iteration: it.checked_sub(1),
            },
            other => other,
        })?;
    }
    if pending.next_if_eq(&&cfg.iterations).is_some() {
        take_snapshot(cfg.iterations, &params, &mut snapshots)?;
    }

    Ok(TrainHistory {
        config: cfg.clone(),
        train_loss,
        val_loss,
        snapshots,
        train_sequences: train_idx,
        validation_sequences: val_idx,
        params,
    })
}
