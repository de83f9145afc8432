//! State matrices, their POD basis and projected trajectories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{fmt_f64, CsvText};
use crate::numcore::{center_rows, svd, Matrix};
use crate::seqmodel::StateBundle;
use crate::{Error, Result};

/// Centering mean plus leading spatial modes of a state matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PODBasis {
    pub mean: Vec<f64>,
    /// Descending, aligned with the columns of `modes`.
    pub sigma: Vec<f64>,
    /// `N x r`, orthonormal columns.
    pub modes: Matrix,
    /// `(rows, N)` of the decomposed matrix.
    pub source_shape: (usize, usize),
}

impl PODBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of available modes `r`.
    pub fn rank_bound(&self) -> usize {
        self.modes.cols()
    }
}

/// Which states a trajectory holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Encoder,
    Decoder,
    Combined,
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Encoder => "encoder",
            Self::Decoder => "decoder",
            Self::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "encoder" => Some(Self::Encoder),
            "decoder" => Some(Self::Decoder),
            "combined" => Some(Self::Combined),
            _ => None,
        }
    }
}

/// Rows of states projected onto the leading POD modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Matrix,
    pub kind: TrajectoryKind,
    pub type_label: Option<usize>,
    pub iteration: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dims(&self) -> usize {
        self.points.cols()
    }
}

/// `S = [E; D]`.
pub fn assemble_state_matrix(bundle: &StateBundle) -> Matrix {
    Matrix::vstack(&[&bundle.e, &bundle.d]).expect("encoder and decoder share the hidden width")
}

/// Stacks per-type state matrices in list order.
pub fn assemble_global(states: &[Matrix]) -> Result<Matrix> {
    if states.is_empty() {
        return Err(Error::invalid("no state matrices to stack"));
    }
    let refs: Vec<&Matrix> = states.iter().collect();
    Matrix::vstack(&refs)
}

/// Centers `global` by its column means and decomposes it.
pub fn pod(global: &Matrix) -> Result<PODBasis> {
    if global.rows() < 2 {
        return Err(Error::invalid("POD needs at least two rows"));
    }
    let (centered, mean) = center_rows(global)?;
    let s = svd(&centered)?;
    Ok(PODBasis {
        mean,
        sigma: s.sigma,
        modes: s.v,
        source_shape: global.shape(),
    })
}

/// Smallest `k` whose leading energy fraction reaches `p`.
pub fn mode_count(sigma: &[f64], p: f64) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("energy fraction {p} is outside (0, 1]")));
    }
    if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("singular values must be finite and non-negative"));
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::invalid("all singular values are zero"));
    }
    let nonzero = sigma.iter().filter(|&&s| s > 0.0).count();
    if p >= 1.0 {
        return Ok(nonzero);
    }
    let mut acc = 0.0;
    for (k, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc / total >= p {
            return Ok(k + 1);
        }
    }
    Ok(nonzero)
}

/// `(A - mean) V[:, :n]`.
pub fn project(a: &Matrix, basis: &PODBasis, n: usize) -> Result<Matrix> {
    if n == 0 || n > basis.rank_bound() {
        return Err(Error::invalid(format!(
            "cannot project onto {n} modes, the basis has {}",
            basis.rank_bound()
        )));
    }
    if a.cols() != basis.dim() {
        return Err(Error::invalid(format!(
            "states have {} columns, the basis expects {}",
            a.cols(),
            basis.dim()
        )));
    }
    let mut out = Matrix::zeros(a.rows(), n);
    let mut centered = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for ((c, &x), &m) in centered.iter_mut().zip(a.row(i)).zip(&basis.mean) {
            *c = x - m;
        }
        for k in 0..n {
            out[(i, k)] = centered
                .iter()
                .enumerate()
                .map(|(j, &c)| c * basis.modes[(j, k)])
                .sum();
        }
    }
    Ok(out)
}

/// Projects `a` and tags the result.
pub fn project_trajectory(
    a: &Matrix,
    basis: &PODBasis,
    n: usize,
    kind: TrajectoryKind,
    type_label: Option<usize>,
) -> Result<Trajectory> {
    Ok(Trajectory {
        points: project(a, basis, n)?,
        kind,
        type_label,
        iteration: None,
    })
}

/// Encoder states preceded by the zero initial state, so every encoder
/// trajectory starts at the projection of the origin.
pub fn encoder_path(bundle: &StateBundle) -> Matrix {
    let h0 = Matrix::zeros(1, bundle.e.cols());
    Matrix::vstack(&[&h0, &bundle.e]).expect("same width")
}

/// Encoder (with initial state) and decoder trajectories of one bundle.
pub fn project_bundle(
    bundle: &StateBundle,
    basis: &PODBasis,
    n: usize,
    type_label: Option<usize>,
) -> Result<(Trajectory, Trajectory)> {
    let enc = project_trajectory(&encoder_path(bundle), basis, n, TrajectoryKind::Encoder, type_label)?;
    let dec = project_trajectory(&bundle.d, basis, n, TrajectoryKind::Decoder, type_label)?;
    Ok((enc, dec))
}

/// First and last point.
pub fn endpoints(traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    Ok((traj.points.row(0).to_vec(), traj.points.row(traj.len() - 1).to_vec()))
}

/// Plot-data CSV with columns `iter, kind, type_label, t, pc1..pcn`.
pub fn trajectories_csv(trajs: &[Trajectory]) -> Result<CsvText> {
    let n = trajs.first().map_or(0, Trajectory::dims);
    if trajs.iter().any(|t| t.dims() != n) {
        return Err(Error::invalid("trajectories have different dimensions"));
    }
    let mut header: Vec<String> = ["iter", "kind", "type_label", "t"].map(String::from).to_vec();
    header.extend((1..=n).map(|k| format!("pc{k}")));
    let mut csv = CsvText::with_header(&header);
    for tr in trajs {
        let iter = tr.iteration.map(|i| i.to_string()).unwrap_or_default();
        let label = tr.type_label.map(|l| l.to_string()).unwrap_or_default();
        for (t, row) in tr.points.row_iter().enumerate() {
            let mut cells = vec![iter.clone(), tr.kind.as_str().to_string(), label.clone(), t.to_string()];
            cells.extend(row.iter().map(|&v| fmt_f64(v)));
            csv.row(cells);
        }
    }
    Ok(csv)
}

pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    trajectories_csv(trajs)?.write(path)
}

/// Reads a file written by [`write_trajectories`].
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let err = |line: usize, message: String| Error::Ingestion {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.len() < 5 || header.iter().take(4).ne(["iter", "kind", "type_label", "t"]) {
        return Err(err(1, "expected columns iter,kind,type_label,t,pc1..".into()));
    }
    let n = header.len() - 4;
    let mut out: Vec<Trajectory> = Vec::new();
    let mut current: Option<(Option<usize>, TrajectoryKind, Option<usize>, Vec<Vec<f64>>)> = None;
    let flush = |cur: Option<(Option<usize>, TrajectoryKind, Option<usize>, Vec<Vec<f64>>)>,
                 out: &mut Vec<Trajectory>|
     -> Result<()> {
        if let Some((iteration, kind, type_label, rows)) = cur {
            out.push(Trajectory {
                points: Matrix::from_rows(&rows)?,
                kind,
                type_label,
                iteration,
            });
        }
        Ok(())
    };
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let opt = |s: &str| -> std::result::Result<Option<usize>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("`{s}` is not a count"))
            }
        };
        let iteration = opt(&rec[0]).map_err(|m| err(line, m))?;
        let kind = TrajectoryKind::parse(&rec[1]).ok_or_else(|| err(line, format!("unknown kind `{}`", &rec[1])))?;
        let type_label = opt(&rec[2]).map_err(|m| err(line, m))?;
        let t: usize = rec[3].parse().map_err(|_| err(line, format!("bad step `{}`", &rec[3])))?;
        let point = (4..4 + n)
            .map(|j| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("bad value `{}`", &rec[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let continues = matches!(&current, Some((i, k, l, rows))
            if *i == iteration && *k == kind && *l == type_label && rows.len() == t);
        if continues {
            current.as_mut().expect("checked").3.push(point);
        } else {
            if t != 0 {
                return Err(err(line, format!("trajectory starts at step {t}")));
            }
            flush(current.take(), &mut out)?;
            current = Some((iteration, kind, type_label, vec![point]));
        }
    }
    flush(current, &mut out)?;
    Ok(out)
}
