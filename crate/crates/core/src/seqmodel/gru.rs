use super::{GruOffsets, GruWeight};

/// Borrowed GRU weights of one role. Row-vector convention: a gate
/// pre-activation is `x W + h U + b`.
#[derive(Clone, Copy, Debug)]
pub struct GruView<'a> {
    pub w_z: &'a [f64],
    pub w_r: &'a [f64],
    pub w_h: &'a [f64],
    pub u_z: &'a [f64],
    pub u_r: &'a [f64],
    pub u_h: &'a [f64],
    pub b_z: &'a [f64],
    pub b_r: &'a [f64],
    pub b_h: &'a [f64],
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl<'a> GruView<'a> {
    pub(crate) fn new(values: &'a [f64], offs: &GruOffsets, m: usize, n: usize) -> Self {
        let slice = |w: GruWeight, len: usize| &values[offs.of(w)..offs.of(w) + len];
        Self {
            w_z: slice(GruWeight::InputUpdate, m * n),
            w_r: slice(GruWeight::InputReset, m * n),
            w_h: slice(GruWeight::InputCandidate, m * n),
            u_z: slice(GruWeight::RecurrentUpdate, n * n),
            u_r: slice(GruWeight::RecurrentReset, n * n),
            u_h: slice(GruWeight::RecurrentCandidate, n * n),
            b_z: slice(GruWeight::BiasUpdate, n),
            b_r: slice(GruWeight::BiasReset, n),
            b_h: slice(GruWeight::BiasCandidate, n),
            input_dim: m,
            hidden_dim: n,
        }
    }
}

/// Activations of one GRU step, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub candidate: Vec<f64>,
}

#[inline]
fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `out += v W` for a row vector `v` and row-major `W` (`v.len() x out.len()`).
#[inline]
fn add_vec_mat(out: &mut [f64], v: &[f64], w: &[f64]) {
    let n = out.len();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(&w[i * n..(i + 1) * n]) {
            *o += vi * wij;
        }
    }
}

/// `out += W g^T` seen from the input side: `out[i] += sum_j W[i, j] g[j]`.
#[inline]
fn add_mat_vec(out: &mut [f64], w: &[f64], g: &[f64]) {
    let n = g.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += w[i * n..(i + 1) * n].iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `grad += v^T g` (outer product accumulated into a row-major block).
#[inline]
fn add_outer(grad: &mut [f64], v: &[f64], g: &[f64]) {
    let n = g.len();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (d, &gj) in grad[i * n..(i + 1) * n].iter_mut().zip(g) {
            *d += vi * gj;
        }
    }
}

/// One GRU step:
///
/// ```text
/// z  = logistic(x W_z + h U_z + b_z)
/// r  = logistic(x W_r + h U_r + b_r)
/// h~ = tanh(x W_h + (r * h) U_h + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
pub fn gru_step(x: &[f64], h_prev: &[f64], p: &GruView<'_>) -> (Vec<f64>, StepCache) {
    let n = p.hidden_dim;
    debug_assert_eq!(x.len(), p.input_dim);
    debug_assert_eq!(h_prev.len(), n);

    let mut z = p.b_z.to_vec();
    add_vec_mat(&mut z, x, p.w_z);
    add_vec_mat(&mut z, h_prev, p.u_z);
    z.iter_mut().for_each(|a| *a = logistic(*a));

    let mut r = p.b_r.to_vec();
    add_vec_mat(&mut r, x, p.w_r);
    add_vec_mat(&mut r, h_prev, p.u_r);
    r.iter_mut().for_each(|a| *a = logistic(*a));

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut cand = p.b_h.to_vec();
    add_vec_mat(&mut cand, x, p.w_h);
    add_vec_mat(&mut cand, &rh, p.u_h);
    cand.iter_mut().for_each(|a| *a = a.tanh());

    let h: Vec<f64> = (0..n)
        .map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * cand[j])
        .collect();
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        candidate: cand,
    };
    (h, cache)
}

/// Backpropagates `dh` through one step. Weight gradients are accumulated
/// into `grads` at the role's offsets; returns `(dh_prev, dx)`.
pub(crate) fn gru_step_backward(
    dh: &[f64],
    c: &StepCache,
    p: &GruView<'_>,
    offs: &GruOffsets,
    grads: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (p.input_dim, p.hidden_dim);
    let mut dh_prev: Vec<f64> = (0..n).map(|j| dh[j] * (1.0 - c.z[j])).collect();
    let mut dx = vec![0.0; m];

    // candidate branch
    let da_h: Vec<f64> = (0..n)
        .map(|j| dh[j] * c.z[j] * (1.0 - c.candidate[j] * c.candidate[j]))
        .collect();
    let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
    accumulate(grads, offs, GruWeight::InputCandidate, |g| add_outer(g, &c.x, &da_h), m * n);
    accumulate(grads, offs, GruWeight::RecurrentCandidate, |g| add_outer(g, &rh, &da_h), n * n);
    accumulate(grads, offs, GruWeight::BiasCandidate, |g| add_assign(g, &da_h), n);
    add_mat_vec(&mut dx, p.w_h, &da_h);
    let mut d_rh = vec![0.0; n];
    add_mat_vec(&mut d_rh, p.u_h, &da_h);
    for j in 0..n {
        dh_prev[j] += d_rh[j] * c.r[j];
    }

    // update gate
    let da_z: Vec<f64> = (0..n)
        .map(|j| dh[j] * (c.candidate[j] - c.h_prev[j]) * c.z[j] * (1.0 - c.z[j]))
        .collect();
    accumulate(grads, offs, GruWeight::InputUpdate, |g| add_outer(g, &c.x, &da_z), m * n);
    accumulate(grads, offs, GruWeight::RecurrentUpdate, |g| add_outer(g, &c.h_prev, &da_z), n * n);
    accumulate(grads, offs, GruWeight::BiasUpdate, |g| add_assign(g, &da_z), n);
    add_mat_vec(&mut dx, p.w_z, &da_z);
    add_mat_vec(&mut dh_prev, p.u_z, &da_z);

    // reset gate
    let da_r: Vec<f64> = (0..n)
        .map(|j| d_rh[j] * c.h_prev[j] * c.r[j] * (1.0 - c.r[j]))
        .collect();
    accumulate(grads, offs, GruWeight::InputReset, |g| add_outer(g, &c.x, &da_r), m * n);
    accumulate(grads, offs, GruWeight::RecurrentReset, |g| add_outer(g, &c.h_prev, &da_r), n * n);
    accumulate(grads, offs, GruWeight::BiasReset, |g| add_assign(g, &da_r), n);
    add_mat_vec(&mut dx, p.w_r, &da_r);
    add_mat_vec(&mut dh_prev, p.u_r, &da_r);

    (dh_prev, dx)
}

#[inline]
fn accumulate(grads: &mut [f64], offs: &GruOffsets, w: GruWeight, f: impl FnOnce(&mut [f64]), len: usize) {
    let at = offs.of(w);
    f(&mut grads[at..at + len]);
}

#[inline]
fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}
