//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! The rotations orthogonalize the columns of a working copy of the input;
//! the column norms are the singular values and the accumulated rotations
//! the right singular vectors. Wide inputs are handled through the
//! transpose so the working matrix always has at least as many rows as
//! columns.

use serde::{Deserialize, Serialize};

use super::{dot, norm, Matrix};
use crate::{Error, Result};

/// Sweep cap; well-conditioned inputs converge in under a dozen sweeps.
pub const MAX_SWEEPS: usize = 60;

/// `a = u * diag(sigma) * v^T` with `r = min(rows, cols)` columns in `u`/`v`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `u * diag(sigma) * v^T`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul(&self.v.transpose())
            .expect("svd factors have matching inner dimension")
    }
}

/// Thin SVD of `a`.
///
/// Singular values are sorted descending; values below the rounding level
/// of the largest one are reported as exact zeros and their left vectors
/// completed to an orthonormal set. Signs are fixed so that the
/// largest-magnitude entry of every column of `v` is positive.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    a.ensure_finite("svd input")?;
    if a.rows() >= a.cols() {
        let (u, sigma, v) = jacobi_tall(a)?;
        Ok(finish(u, sigma, v))
    } else {
        // a^T = u' s v'^T, so a = v' s u'^T
        let (u, sigma, v) = jacobi_tall(&a.transpose())?;
        let t = finish(u, sigma, v);
        let mut ucols: Vec<Vec<f64>> = (0..t.v.cols()).map(|j| t.v.col(j)).collect();
        let mut vcols: Vec<Vec<f64>> = (0..t.u.cols()).map(|j| t.u.col(j)).collect();
        fix_signs(&mut ucols, &mut vcols);
        Ok(SvdResult {
            u: from_cols(&ucols, a.rows()),
            sigma: t.sigma,
            v: from_cols(&vcols, a.cols()),
        })
    }
}

/// Column-major working factors: (left columns, sigma, right columns).
type Factors = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>);

fn jacobi_tall(a: &Matrix) -> Result<Factors> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = 2.0 * f64::EPSILON * (m as f64).sqrt();
    // columns at the rounding level of the whole matrix are numerically zero;
    // rotating them against each other only reshuffles noise
    let floor = {
        let f = f64::EPSILON * a.frobenius();
        f * f
    };

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NonConvergence {
                context: "svd",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        converged = true;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = dot(&w[i], &w[i]);
                let beta = dot(&w[j], &w[j]);
                let gamma = dot(&w[i], &w[j]);
                if alpha <= floor || beta <= floor || gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
    }

    let sigma: Vec<f64> = w.iter().map(|col| norm(col)).collect();
    Ok((w, sigma, v))
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(j);
    let (ci, cj) = (&mut head[i], &mut tail[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Sorts, normalizes, completes null directions and fixes signs.
/// `left` holds unnormalized columns (`u_i * sigma_i`).
fn finish(left: Vec<Vec<f64>>, sigma: Vec<f64>, right: Vec<Vec<f64>>) -> SvdResult {
    let r = sigma.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let rows_l = left[0].len();
    let rows_r = right[0].len();
    let sigma_max = sigma[order[0]];
    let zero_level = sigma_max * f64::EPSILON * rows_l.max(rows_r) as f64;

    let mut sig = Vec::with_capacity(r);
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut vcols: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut null_slots = Vec::new();
    for &k in &order {
        let s = sigma[k];
        if s > zero_level && s > 0.0 {
            sig.push(s);
            ucols.push(left[k].iter().map(|x| x / s).collect());
        } else {
            sig.push(0.0);
            null_slots.push(ucols.len());
            ucols.push(vec![0.0; rows_l]);
        }
        vcols.push(right[k].clone());
    }
    complete_basis(&mut ucols, &null_slots);
    fix_signs(&mut ucols, &mut vcols);

    SvdResult {
        u: from_cols(&ucols, rows_l),
        sigma: sig,
        v: from_cols(&vcols, rows_r),
    }
}

/// Makes the largest-magnitude entry of every right vector positive.
fn fix_signs(ucols: &mut [Vec<f64>], vcols: &mut [Vec<f64>]) {
    for (uc, vc) in ucols.iter_mut().zip(vcols.iter_mut()) {
        let mut pivot = 0;
        for (idx, x) in vc.iter().enumerate() {
            if x.abs() > vc[pivot].abs() {
                pivot = idx;
            }
        }
        if vc[pivot] < 0.0 {
            vc.iter_mut().for_each(|x| *x = -*x);
            uc.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Fills `slots` with unit vectors orthogonal to every other column.
fn complete_basis(cols: &mut [Vec<f64>], slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let dim = cols[0].len();
    let mut candidate = 0;
    for &slot in slots {
        loop {
            assert!(candidate < dim, "cannot complete an orthonormal basis");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // two Gram-Schmidt passes against every filled column
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot {
                        continue;
                    }
                    let p = dot(&e, c);
                    e.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                }
            }
            let nrm = norm(&e);
            if nrm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[slot] = e;
                break;
            }
        }
    }
}

fn from_cols(cols: &[Vec<f64>], rows: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn orthonormality_error(m: &Matrix) -> f64 {
        let g = m.transpose().matmul(m).unwrap();
        g.max_abs_diff(&Matrix::identity(m.cols()))
    }

    #[test]
    fn identity_has_unit_sigma() {
        let r = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(r.sigma, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_matrix_has_zero_sigma_and_orthonormal_factors() {
        let r = svd(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(r.sigma, vec![0.0, 0.0, 0.0]);
        assert!(orthonormality_error(&r.u) < 1e-12);
        assert!(orthonormality_error(&r.v) < 1e-12);
    }

    #[test]
    fn seeded_seven_by_four_reconstructs() {
        let a = random(7, 4, 11);
        let r = svd(&a).unwrap();
        // multiply-back oracle, entrywise
        let mut err = 0.0f64;
        for i in 0..7 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..r.rank() {
                    acc += r.u[(i, k)] * r.sigma[k] * r.v[(j, k)];
                }
                err = err.max((acc - a[(i, j)]).abs());
            }
        }
        assert!(err / a.frobenius() < 1e-10, "relative error {err}");
    }

    #[test]
    fn wide_and_tall_agree() {
        let a = random(5, 9, 3);
        let wide = svd(&a).unwrap();
        let tall = svd(&a.transpose()).unwrap();
        assert_eq!(wide.u.shape(), (5, 5));
        assert_eq!(wide.v.shape(), (9, 5));
        for (x, y) in wide.sigma.iter().zip(&tall.sigma) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn wide_factors_are_orthonormal() {
        for (rows, cols) in [(1, 6), (3, 8), (10, 30), (53, 54)] {
            let a = random(rows, cols, rows as u64);
            let s = svd(&a).unwrap();
            assert!(orthonormality_error(&s.u) < 1e-12);
            assert!(orthonormality_error(&s.v) < 1e-12);
            assert!(s.reconstruct().max_abs_diff(&a) < 1e-12);
        }
    }

    #[test]
    fn rank_one_reports_exact_zeros() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0], [2.0, 4.0, 6.0]]).unwrap();
        let r = svd(&a).unwrap();
        assert!(r.sigma[0] > 1.0);
        assert_eq!(&r.sigma[1..], &[0.0, 0.0]);
        assert!(orthonormality_error(&r.u) < 1e-10);
        assert!(r.reconstruct().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn sign_convention_holds() {
        let r = svd(&random(6, 4, 5)).unwrap();
        for j in 0..r.rank() {
            let col = r.v.col(j);
            let big = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn non_finite_is_invalid_input() {
        let a = Matrix::from_rows(&[[1.0, f64::INFINITY]]).unwrap();
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }
}
