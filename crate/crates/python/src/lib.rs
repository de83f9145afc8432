//! Python bindings: lists of rows in, lists and dicts out.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use seqembed::clusterlab::{self, ClusterMethod, PointSet};
use seqembed::datagen::{gen_multiclass_corpus, SequenceBatch};
use seqembed::trainmon::{self, ClusterDim, StateKind, TrainConfig};
use seqembed::Matrix;

type Rows = Vec<Vec<f64>>;

fn to_py(e: seqembed::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: &Rows) -> PyResult<Matrix> {
    Matrix::from_rows(rows).map_err(to_py)
}

fn rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Thin SVD: returns `(u, sigma, v)` with `a = u diag(sigma) v^T`.
#[pyfunction]
fn svd(a: Rows) -> PyResult<(Rows, Vec<f64>, Rows)> {
    let s = seqembed::numcore::svd(&matrix(&a)?).map_err(to_py)?;
    Ok((rows(&s.u), s.sigma, rows(&s.v)))
}

/// Smallest number of modes holding fraction `p` of the energy.
#[pyfunction]
fn mode_count(sigma: Vec<f64>, p: f64) -> PyResult<usize> {
    seqembed::embedding::mode_count(&sigma, p).map_err(to_py)
}

#[pyfunction]
fn ari(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    clusterlab::ari(&a, &b).map_err(to_py)
}

#[pyfunction]
fn matched_accuracy(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    clusterlab::matched_accuracy(&pred, &truth).map_err(to_py)
}

/// Labels of `points` split into `k` clusters.
#[pyfunction]
#[pyo3(signature = (points, k, method = "agglomerative-single-cosine", seed = 0))]
fn cluster(points: Rows, k: usize, method: &str, seed: u64) -> PyResult<Vec<usize>> {
    let method = match method {
        "kmeans++" => ClusterMethod::KMeansPP,
        "agglomerative-single-cosine" => ClusterMethod::AgglomerativeSingleCosine,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let ps = PointSet::new(matrix(&points)?, None).map_err(to_py)?;
    Ok(clusterlab::cluster(&ps, k, method, seed).map_err(to_py)?.labels)
}

/// Synthetic corpus: `(sequences, labels)`.
#[pyfunction]
#[pyo3(signature = (num_classes, steps, seed = 0))]
fn gen_corpus(num_classes: usize, steps: usize, seed: u64) -> PyResult<(Vec<Rows>, Vec<usize>)> {
    let b = gen_multiclass_corpus(num_classes, steps, seed).map_err(to_py)?;
    let labels = (0..b.len()).map(|i| b.label_of(i)).collect();
    Ok((b.sequences.iter().map(rows).collect(), labels))
}

/// Trains from a JSON training config. Returns losses, the final
/// full-dimension decoder ARI per snapshot and the model as JSON.
#[pyfunction]
fn train<'py>(
    py: Python<'py>,
    config_json: &str,
    sequences: Vec<Rows>,
    labels: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: TrainConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let seqs = sequences.iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    let batch = SequenceBatch::new(seqs, Some(labels)).map_err(to_py)?;
    let h = py.allow_threads(|| trainmon::train(&cfg, &batch)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("train_loss", &h.train_loss)?;
    let iters: Vec<usize> = h.snapshots.iter().map(|s| s.iteration).collect();
    let ari: Vec<Option<f64>> = h
        .snapshots
        .iter()
        .map(|s| s.ari_of(StateKind::Decoder, ClusterDim::Full))
        .collect();
    out.set_item("snapshot_iterations", iters)?;
    out.set_item("decoder_ari", ari)?;
    out.set_item("model_json", h.params.to_json().map_err(to_py)?)?;
    Ok(out)
}

#[pymodule]
fn pyseqembed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(mode_count, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(matched_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
