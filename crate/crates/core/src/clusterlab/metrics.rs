//! Partition agreement scores.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Largest side for which label matching is solved exactly.
pub const EXACT_MATCHING_LIMIT: usize = 10;

/// Confusion counts with rows indexed by distinct `a` labels and columns by
/// distinct `b` labels, both in ascending label order.
pub fn contingency(a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Vec<usize>, Vec<Vec<usize>>)> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "label lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let index = |labels: &[usize]| {
        let mut m = BTreeMap::new();
        for &l in labels {
            m.entry(l).or_insert(0usize);
        }
        for (i, v) in m.values_mut().enumerate() {
            *v = i;
        }
        m
    };
    let (ia, ib) = (index(a), index(b));
    let mut table = vec![vec![0usize; ib.len()]; ia.len()];
    for (x, y) in a.iter().zip(b) {
        table[ia[x]][ib[y]] += 1;
    }
    Ok((ia.into_keys().collect(), ib.into_keys().collect(), table))
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand Index; 1.0 when both partitions are trivial in the same way.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let (_, _, table) = contingency(a, b)?;
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two labels"));
    }
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: f64 = table.iter().map(|row| pairs(row.iter().sum())).sum();
    let sum_b: f64 = (0..table[0].len())
        .map(|j| pairs(table.iter().map(|row| row[j]).sum()))
        .sum();
    let expected = sum_a * sum_b / pairs(a.len());
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Optimal injective map from predicted clusters to truth labels.
///
/// Returns `(pred label, truth label)` pairs and the number of agreeing
/// frames. Exact when either side has at most [`EXACT_MATCHING_LIMIT`]
/// labels, greedy on the largest remaining count otherwise.
pub fn best_matching(pred: &[usize], truth: &[usize]) -> Result<(Vec<(usize, usize)>, usize)> {
    let (pl, tl, table) = contingency(pred, truth)?;
    if pred.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let (p, q) = (pl.len(), tl.len());
    let pairs = if p.min(q) <= EXACT_MATCHING_LIMIT {
        if q <= p {
            exact(&table, p, q)
        } else {
            let transposed: Vec<Vec<usize>> = (0..q).map(|j| (0..p).map(|i| table[i][j]).collect()).collect();
            exact(&transposed, q, p).into_iter().map(|(j, i)| (i, j)).collect()
        }
    } else {
        greedy(&table, p, q)
    };
    let hits = pairs.iter().map(|&(i, j)| table[i][j]).sum();
    Ok((pairs.into_iter().map(|(i, j)| (pl[i], tl[j])).collect(), hits))
}

/// Subset DP over the `q` columns; `q <= EXACT_MATCHING_LIMIT`.
fn exact(table: &[Vec<usize>], p: usize, q: usize) -> Vec<(usize, usize)> {
    let full = 1usize << q;
    // best[i][mask]: most hits using rows i.. with columns in `mask` taken
    let mut best = vec![vec![0usize; full]; p + 1];
    for i in (0..p).rev() {
        for mask in 0..full {
            let mut v = best[i + 1][mask];
            for j in 0..q {
                if mask & (1 << j) == 0 {
                    v = v.max(table[i][j] + best[i + 1][mask | (1 << j)]);
                }
            }
            best[i][mask] = v;
        }
    }
    let mut out = Vec::new();
    let mut mask = 0;
    for i in 0..p {
        if best[i][mask] == best[i + 1][mask] {
            continue;
        }
        let j = (0..q)
            .find(|&j| mask & (1 << j) == 0 && best[i][mask] == table[i][j] + best[i + 1][mask | (1 << j)])
            .expect("some column realises the optimum");
        out.push((i, j));
        mask |= 1 << j;
    }
    out
}

fn greedy(table: &[Vec<usize>], p: usize, q: usize) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize, usize)> = (0..p)
        .flat_map(|i| (0..q).map(move |j| (i, j, table[i][j])))
        .collect();
    cells.sort_by(|x, y| y.2.cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    let (mut row_used, mut col_used) = (vec![false; p], vec![false; q]);
    let mut out = Vec::new();
    for (i, j, _) in cells {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Fraction of positions that agree under the best cluster-to-label map.
pub fn matched_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let (_, hits) = best_matching(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::invalid("no labels to compare"));
    }
    Ok(hits as f64 / pred.len() as f64)
}
