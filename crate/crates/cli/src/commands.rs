use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use seqembed::clusterlab::{self, ClusterMethod, PointSet};
use seqembed::datagen::{
    concat_labeled, gen_multiclass_corpus, load_csv_dir, make_pair, one_hot_augment, read_csv_sequence, save_csv_dir,
    sequence_csv, SequenceBatch, WindowMode,
};
use seqembed::embedding::{
    assemble_global, assemble_state_matrix, pod, project_bundle, read_trajectories, write_trajectories,
    TrajectoryKind,
};
use seqembed::io::{fmt_f64, write_json, CsvText};
use seqembed::segment::{export_segmentation, segment_sequence, FeatureMode, ScanConfig};
use seqembed::seqmodel::{forward, SeqModelParams};
use seqembed::trainmon::{export_history, optimal_from_series, pearson, train, HistoryManifest, TrainConfig};
use seqembed::Matrix;

use crate::manifest::{digest_inputs, resolve_seed, RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA};
use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Versioned training configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub version: u32,
    pub train: TrainConfig,
}

impl TrainFile {
    fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", origin.display())))?;
        if file.version != CONFIG_VERSION {
            return Err(CliError::Usage(format!(
                "{}: unsupported config version {} (expected {CONFIG_VERSION})",
                origin.display(),
                file.version
            )));
        }
        Ok(file)
    }
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command", content = "args")]
pub enum Command {
    /// Write a synthetic CSV corpus.
    Gen(GenArgs),
    /// Train a model with embedding snapshots.
    Train(TrainArgs),
    /// Project encoder and decoder states of a trained model.
    Embed(EmbedArgs),
    /// Cluster trajectory points.
    Cluster(ClusterArgs),
    /// Segment one long sequence.
    Segment(SegmentArgs),
    /// Turn a training run into plot tables.
    Report(ReportArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Gen(_) => "gen",
            Self::Train(_) => "train",
            Self::Embed(_) => "embed",
            Self::Cluster(_) => "cluster",
            Self::Segment(_) => "segment",
            Self::Report(_) => "report",
            Self::Rerun(_) => "rerun",
        }
    }

    fn out_mut(&mut self) -> &mut PathBuf {
        match self {
            Self::Gen(a) => &mut a.out,
            Self::Train(a) => &mut a.out,
            Self::Embed(a) => &mut a.out,
            Self::Cluster(a) => &mut a.out,
            Self::Segment(a) => &mut a.out,
            Self::Report(a) => &mut a.out,
            Self::Rerun(a) => &mut a.out,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Unit circle and ellipse, one file each.
    CircleEllipse,
    /// The first `--classes` catalogue patterns, one file each.
    Multiclass,
    /// The same patterns concatenated into `long.csv` plus `truth.csv`.
    Concat,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Rows per sequence (per segment for `concat`).
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    /// Start row of the window taken from every sequence.
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Decoder,
    Encoder,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    #[value(name = "agglomerative-single-cosine", alias = "agglomerative")]
    #[serde(rename = "agglomerative-single-cosine")]
    Agglomerative,
    #[value(name = "kmeans++", alias = "kmeans")]
    #[serde(rename = "kmeans++")]
    KMeans,
}

impl From<MethodArg> for ClusterMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Agglomerative => ClusterMethod::AgglomerativeSingleCosine,
            MethodArg::KMeans => ClusterMethod::KMeansPP,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterArgs {
    /// Trajectory CSV written by `embed` or `train`.
    #[arg(long)]
    pub input: PathBuf,
    /// Cluster count; defaults to the number of type labels.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "agglomerative-single-cosine")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "decoder")]
    pub kind: KindArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureArg {
    WindowMean,
    AllRows,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One long CSV sequence.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Defaults to a fifth of the decoder span.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum, default_value = "window-mean")]
    pub feature_mode: FeatureArg,
    /// Modes kept for clustering; all when omitted.
    #[arg(long)]
    pub dims: Option<usize>,
    /// CSV of `frame,label` ground truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// What one command read, wrote and used.
struct Record {
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

pub fn execute(cmd: Command, argv: Vec<String>) -> Result<(), CliError> {
    match cmd {
        Command::Rerun(r) => {
            let m = RunManifest::load(&r.manifest)?;
            if m.schema != MANIFEST_SCHEMA {
                return Err(CliError::Data(format!("unsupported manifest schema {}", m.schema)));
            }
            let mut inv = m.invocation;
            *inv.out_mut() = r.out;
            let train_override = match &inv {
                Command::Train(_) => Some(
                    serde_json::from_value::<TrainFile>(m.config)
                        .map_err(|e| CliError::Data(format!("manifest config: {e}")))?,
                ),
                _ => None,
            };
            run_recorded(inv, argv, train_override)
        }
        other => run_recorded(other, argv, None),
    }
}

fn run_recorded(mut cmd: Command, argv: Vec<String>, train_override: Option<TrainFile>) -> Result<(), CliError> {
    let start = Instant::now();
    let out = cmd.out_mut().clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let rec = match &mut cmd {
        Command::Gen(a) => gen(a)?,
        Command::Train(a) => run_train(a, train_override)?,
        Command::Embed(a) => embed(a)?,
        Command::Cluster(a) => cluster(a)?,
        Command::Segment(a) => segment(a)?,
        Command::Report(a) => report(a)?,
        Command::Rerun(_) => return Err(CliError::Usage("a manifest cannot describe a rerun".into())),
    };
    let input_refs: Vec<&Path> = rec.inputs.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        argv,
        invocation: cmd,
        config: rec.config,
        seed: rec.seed,
        inputs: digest_inputs(&input_refs)?,
        outputs: rec.outputs.iter().map(|p| p.display().to_string()).collect(),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

fn gen(a: &mut GenArgs) -> Result<Record, CliError> {
    let seed = resolve_seed(a.seed, 0)?;
    a.seed = Some(seed);
    let classes = if a.preset == Preset::CircleEllipse { 2 } else { a.classes };
    let corpus = gen_multiclass_corpus(classes, a.steps, seed)?;
    let outputs = match a.preset {
        Preset::CircleEllipse | Preset::Multiclass => save_csv_dir(&corpus, &a.out)?,
        Preset::Concat => {
            let order: Vec<usize> = (0..classes).collect();
            let (seq, labels) = concat_labeled(&corpus, &order)?;
            let long = a.out.join("long.csv");
            sequence_csv(&seq, corpus.feature_names.as_deref()).write(&long)?;
            let mut truth = CsvText::with_header(&["frame", "label"]);
            for (f, l) in labels.iter().enumerate() {
                truth.row([f.to_string(), l.to_string()]);
            }
            let truth_path = a.out.join("truth.csv");
            truth.write(&truth_path)?;
            vec![long, truth_path]
        }
    };
    Ok(Record {
        config: to_value(a),
        seed: Some(seed),
        inputs: Vec::new(),
        outputs,
    })
}

fn run_train(a: &mut TrainArgs, preset: Option<TrainFile>) -> Result<Record, CliError> {
    let mut file = match preset {
        Some(f) => f,
        None => {
            let text = std::fs::read_to_string(&a.config)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.config.display())))?;
            TrainFile::parse(&text, &a.config)?
        }
    };
    let seed = resolve_seed(a.seed, file.train.model.seed)?;
    a.seed = Some(seed);
    file.train.model.seed = seed;
    file.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let batch = load_csv_dir(&a.data)?;
    let history = train(&file.train, &batch)?;

    let model = a.out.join("model.json");
    history.params.save(&model)?;
    let config = a.out.join("config.json");
    write_json(&config, &file)?;
    let mut outputs = vec![model, config];
    outputs.extend(export_history(&history, &a.out)?);
    Ok(Record {
        config: to_value(&file),
        seed: Some(seed),
        inputs: vec![a.config.clone(), a.data.clone()],
        outputs,
    })
}

/// Adds the one-hot code a model was trained with, when its input is wider than the data.
fn match_model_input(batch: SequenceBatch, params: &SeqModelParams) -> Result<SequenceBatch, CliError> {
    let have = batch.feature_count();
    let want = params.input_dim();
    if want == have {
        return Ok(batch);
    }
    if want > have {
        return Ok(one_hot_augment(&batch, want - have)?);
    }
    Err(CliError::Data(format!("model expects {want} features, data has {have}")))
}

fn embed(a: &mut EmbedArgs) -> Result<Record, CliError> {
    let params = SeqModelParams::load(&a.model)?;
    let batch = match_model_input(load_csv_dir(&a.data)?, &params)?;
    let (te, td) = (params.config().encoder_steps, params.config().decoder_steps);
    let mut bundles = Vec::with_capacity(batch.len());
    for (i, seq) in batch.sequences.iter().enumerate() {
        let (x, _) = make_pair(seq, te, td, a.offset, WindowMode::Continuation)?;
        bundles.push((batch.label_of(i), forward(&x, &params, td)?));
    }
    let states: Vec<Matrix> = bundles.iter().map(|(_, b)| assemble_state_matrix(b)).collect();
    let basis = pod(&assemble_global(&states)?)?;
    let n = a.dims.min(basis.rank_bound());
    let mut trajs = Vec::with_capacity(2 * bundles.len());
    for (label, b) in &bundles {
        let (e, d) = project_bundle(b, &basis, n, Some(*label))?;
        trajs.push(e);
        trajs.push(d);
    }
    let traj_path = a.out.join("trajectories.csv");
    write_trajectories(&traj_path, &trajs)?;
    let mut sigma = CsvText::with_header(&["index", "sigma"]);
    for (i, s) in basis.sigma.iter().enumerate() {
        sigma.row([(i + 1).to_string(), fmt_f64(*s)]);
    }
    let sigma_path = a.out.join("sigma.csv");
    sigma.write(&sigma_path)?;
    let basis_path = a.out.join("basis.json");
    write_json(&basis_path, &basis)?;
    Ok(Record {
        config: serde_json::json!({ "args": to_value(a), "resolved_dims": n }),
        seed: None,
        inputs: vec![a.model.clone(), a.data.clone()],
        outputs: vec![traj_path, sigma_path, basis_path],
    })
}

fn cluster(a: &mut ClusterArgs) -> Result<Record, CliError> {
    let seed = resolve_seed(a.seed, 0)?;
    a.seed = Some(seed);
    let trajs = read_trajectories(&a.input)?;
    let picked: Vec<_> = trajs
        .iter()
        .filter(|t| match a.kind {
            KindArg::Decoder => t.kind == TrajectoryKind::Decoder,
            KindArg::Encoder => t.kind == TrajectoryKind::Encoder,
            KindArg::All => true,
        })
        .collect();
    if picked.is_empty() {
        return Err(CliError::Data(format!("{}: no matching trajectories", a.input.display())));
    }
    let blocks: Vec<&Matrix> = picked.iter().map(|t| &t.points).collect();
    let points = Matrix::vstack(&blocks)?;
    let truth: Option<Vec<usize>> = picked
        .iter()
        .map(|t| t.type_label.map(|l| vec![l; t.len()]))
        .collect::<Option<Vec<_>>>()
        .map(|v| v.concat());
    let k = match (a.k, &truth) {
        (Some(k), _) => k,
        (None, Some(t)) => {
            let mut d = t.clone();
            d.sort_unstable();
            d.dedup();
            d.len()
        }
        (None, None) => return Err(CliError::Usage("--k is required when trajectories carry no type labels".into())),
    };
    a.k = Some(k);
    let ps = PointSet::new(points, truth.clone())?;
    let result = clusterlab::cluster(&ps, k, a.method.into(), seed)?;
    let (csv, json) = clusterlab::export(&a.out, &result, truth.as_deref())?;
    Ok(Record {
        config: to_value(a),
        seed: Some(seed),
        inputs: vec![a.input.clone()],
        outputs: vec![csv, json],
    })
}

fn read_truth(path: &Path) -> Result<Vec<usize>, CliError> {
    let (_, m) = read_csv_sequence(path)?;
    if m.cols() < 2 {
        return Err(CliError::Data(format!("{}: expected `frame,label` columns", path.display())));
    }
    (0..m.rows())
        .map(|r| {
            let v = m[(r, 1)];
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Data(format!("{}: row {}: label {v} is not a class index", path.display(), r + 1)))
            }
        })
        .collect()
}

fn segment(a: &mut SegmentArgs) -> Result<Record, CliError> {
    let params = SeqModelParams::load(&a.model)?;
    let (_, seq) = read_csv_sequence(&a.input)?;
    let mut cfg = ScanConfig::for_model(&params, a.k);
    if let Some(s) = a.stride {
        cfg.stride = s;
    }
    a.stride = Some(cfg.stride);
    cfg.feature_mode = match a.feature_mode {
        FeatureArg::WindowMean => FeatureMode::WindowMean,
        FeatureArg::AllRows => FeatureMode::AllRows,
    };
    cfg.dims = a.dims;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    let result = segment_sequence(&seq, &params, &cfg)?;
    let dims = cfg.dims.unwrap_or(params.hidden_dim()).min(params.hidden_dim());
    let mut outputs = export_segmentation(&a.out, &cfg, dims, &result, truth.as_deref())?;
    let mut windows = CsvText::with_header(&["window_start", "label"]);
    for (s, l) in result.window_starts.iter().zip(&result.window_labels) {
        windows.row([s.to_string(), l.to_string()]);
    }
    let wpath = a.out.join("windows.csv");
    windows.write(&wpath)?;
    outputs.push(wpath);
    let mut inputs = vec![a.model.clone(), a.input.clone()];
    inputs.extend(a.truth.clone());
    Ok(Record {
        config: serde_json::json!({ "args": to_value(a), "scan": to_value(&cfg) }),
        seed: None,
        inputs,
        outputs,
    })
}

#[derive(Serialize)]
struct CorrelationEntry {
    kind: TrajectoryKind,
    dim: String,
    pearson: Option<f64>,
    note: Option<String>,
}

#[derive(Serialize)]
struct RunReport {
    snapshots: usize,
    final_train_loss: Option<f64>,
    loss_ari_correlation: Vec<CorrelationEntry>,
    optimal_iteration: Option<seqembed::trainmon::OptimalIteration>,
    decreasing_mode_series: Vec<String>,
}

fn report(a: &mut ReportArgs) -> Result<Record, CliError> {
    let hist_path = a.run.join("history.json");
    let text = std::fs::read_to_string(&hist_path).map_err(|e| CliError::Data(format!("{}: {e}", hist_path.display())))?;
    let h: HistoryManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", hist_path.display())))?;
    let snaps = &h.snapshots;
    let keys: Vec<(TrajectoryKind, seqembed::trainmon::ClusterDim)> = snaps
        .first()
        .map(|s| s.ari.iter().map(|e| (e.kind, e.dim)).collect())
        .unwrap_or_default();
    let ari_of = |s: &seqembed::trainmon::SnapshotSummary, k: &(TrajectoryKind, seqembed::trainmon::ClusterDim)| {
        s.ari.iter().find(|e| e.kind == k.0 && e.dim == k.1).map(|e| e.value)
    };
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();

    let mut header: Vec<String> = ["iteration", "train_loss", "val_loss", "raw_ari"].map(String::from).to_vec();
    header.extend(keys.iter().map(|(k, d)| format!("{}_ari_{}", k.as_str(), d.label())));
    let mut table = CsvText::with_header(&header);
    for s in snaps {
        let mut row = vec![s.iteration.to_string(), fmt_f64(s.train_loss), opt(s.val_loss), opt(s.raw_ari)];
        row.extend(keys.iter().map(|k| opt(ari_of(s, k))));
        table.row(row);
    }
    let loss_ari = a.out.join("loss_ari.csv");
    table.write(&loss_ari)?;

    let mut modes = CsvText::with_header(&["iteration", "kind", "level", "type_label", "count"]);
    for s in snaps {
        for m in &s.mode_counts {
            modes.row([
                s.iteration.to_string(),
                m.kind.as_str().to_string(),
                fmt_f64(m.level),
                m.type_label.map(|l| l.to_string()).unwrap_or_default(),
                m.count.map(|c| c.to_string()).unwrap_or_default(),
            ]);
        }
    }
    let modes_path = a.out.join("mode_counts.csv");
    modes.write(&modes_path)?;

    let mut index = CsvText::with_header(&["iteration", "trajectories"]);
    for s in snaps {
        index.row([s.iteration.to_string(), a.run.join(&s.trajectories).display().to_string()]);
    }
    let index_path = a.out.join("trajectory_index.csv");
    index.write(&index_path)?;

    let losses: Vec<f64> = snaps.iter().map(|s| s.train_loss).collect();
    let correlations = keys
        .iter()
        .map(|k| {
            let aris: Option<Vec<f64>> = snaps.iter().map(|s| ari_of(s, k)).collect();
            let r = aris
                .ok_or_else(|| "missing ARI".to_string())
                .and_then(|v| pearson(&losses, &v).map_err(|e| e.to_string()));
            CorrelationEntry {
                kind: k.0,
                dim: k.1.label(),
                pearson: r.as_ref().ok().copied(),
                note: r.err(),
            }
        })
        .collect();
    let iterations: Vec<usize> = snaps.iter().map(|s| s.iteration).collect();
    let val: Option<Vec<f64>> = snaps.iter().map(|s| s.val_loss).collect();
    let full = keys
        .iter()
        .find(|k| k.0 == TrajectoryKind::Decoder && k.1 == seqembed::trainmon::ClusterDim::Full)
        .or_else(|| keys.iter().find(|k| k.0 == TrajectoryKind::Decoder));
    let optimal = match (val, full) {
        (Some(v), Some(k)) => {
            let aris: Option<Vec<f64>> = snaps.iter().map(|s| ari_of(s, k)).collect();
            aris.and_then(|ar| optimal_from_series(&iterations, &v, &ar).ok())
        }
        _ => None,
    };
    let rep = RunReport {
        snapshots: snaps.len(),
        final_train_loss: h.final_train_loss,
        loss_ari_correlation: correlations,
        optimal_iteration: optimal,
        decreasing_mode_series: h.decreasing_mode_series.clone(),
    };
    let rep_path = a.out.join("report.json");
    write_json(&rep_path, &rep)?;
    Ok(Record {
        config: to_value(a),
        seed: None,
        inputs: vec![hist_path],
        outputs: vec![loss_ari, modes_path, index_path, rep_path],
    })
}
