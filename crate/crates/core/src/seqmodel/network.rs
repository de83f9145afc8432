use super::gru::{gru_step, gru_step_backward, StepCache};
use super::{fingerprint, DecoderStart, Gradients, Role, SeqModelParams};
use crate::numcore::Matrix;
use crate::{Error, Result};

/// Everything one forward propagation produces.
#[derive(Clone, Debug)]
pub struct StateBundle {
    /// Encoder states, `T_e x N`; row `t` is the state after input row `t`.
    pub e: Matrix,
    /// Decoder states, `T_d x N`.
    pub d: Matrix,
    /// Decoder read-out, `T_d x M`.
    pub y_hat: Matrix,
    encoder_cache: Vec<StepCache>,
    decoder_cache: Vec<StepCache>,
    inputs: Matrix,
    params_fingerprint: u64,
    decoder_start: DecoderStart,
}

impl StateBundle {
    pub fn encoder_steps(&self) -> usize {
        self.e.rows()
    }

    pub fn decoder_steps(&self) -> usize {
        self.d.rows()
    }

    /// Input the decoder received at each step (row 0 is the seed input).
    pub fn decoder_inputs(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.decoder_cache.iter().map(|c| c.x.as_slice()).collect();
        Matrix::from_rows(&rows).expect("decoder inputs share one width")
    }
}

fn readout(h: &[f64], params: &SeqModelParams) -> Vec<f64> {
    let m = params.input_dim();
    let w = params.output_weight();
    let mut y = params.output_bias().to_vec();
    for (k, &hk) in h.iter().enumerate() {
        for (yj, &wkj) in y.iter_mut().zip(&w[k * m..(k + 1) * m]) {
            *yj += hk * wkj;
        }
    }
    y
}

/// Runs the encoder over `x` and the decoder for `decoder_steps` steps.
pub fn forward(x: &Matrix, params: &SeqModelParams, decoder_steps: usize) -> Result<StateBundle> {
    let (m, n) = (params.input_dim(), params.hidden_dim());
    if x.cols() != m {
        return Err(Error::invalid(format!(
            "input has {} features, the model expects {m}",
            x.cols()
        )));
    }
    if x.rows() == 0 || decoder_steps == 0 {
        return Err(Error::invalid("encoder and decoder need at least one step"));
    }
    x.ensure_finite("encoder input")?;

    let enc = params.gru(Role::Encoder);
    let dec = params.gru(Role::Decoder);

    let mut e = Matrix::zeros(x.rows(), n);
    let mut encoder_cache = Vec::with_capacity(x.rows());
    let mut h = vec![0.0; n];
    for t in 0..x.rows() {
        let (next, cache) = gru_step(x.row(t), &h, &enc);
        e.row_mut(t).copy_from_slice(&next);
        encoder_cache.push(cache);
        h = next;
    }

    let decoder_start = params.config().decoder_start;
    let mut input = match decoder_start {
        DecoderStart::LastInput => x.row(x.rows() - 1).to_vec(),
        DecoderStart::EncoderReadout => readout(&h, params),
    };
    let mut d = Matrix::zeros(decoder_steps, n);
    let mut y_hat = Matrix::zeros(decoder_steps, m);
    let mut decoder_cache = Vec::with_capacity(decoder_steps);
    for t in 0..decoder_steps {
        let (next, cache) = gru_step(&input, &h, &dec);
        let y = readout(&next, params);
        d.row_mut(t).copy_from_slice(&next);
        y_hat.row_mut(t).copy_from_slice(&y);
        decoder_cache.push(cache);
        h = next;
        input = y;
    }

    Ok(StateBundle {
        e,
        d,
        y_hat,
        encoder_cache,
        decoder_cache,
        inputs: x.clone(),
        params_fingerprint: params.fingerprint(),
        decoder_start,
    })
}

/// `J = (1/T_d) * sum_t ||y_t - y_hat_t||^2`.
pub fn mse_loss(y: &Matrix, y_hat: &Matrix) -> Result<f64> {
    if y.shape() != y_hat.shape() {
        return Err(Error::invalid(format!(
            "target is {}x{}, prediction is {}x{}",
            y.rows(),
            y.cols(),
            y_hat.rows(),
            y_hat.cols()
        )));
    }
    if y.rows() == 0 {
        return Err(Error::invalid("empty target"));
    }
    let sq: f64 = y
        .as_slice()
        .iter()
        .zip(y_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / y.rows() as f64)
}

/// Exact gradient of [`mse_loss`] with respect to every parameter.
///
/// The decoder's feedback path (prediction `t` is the input of step `t+1`)
/// is differentiated. With shared parameters the encoder and decoder
/// contributions land in the same slots and are summed.
pub fn backward(bundle: &StateBundle, x: &Matrix, y: &Matrix, params: &SeqModelParams) -> Result<Gradients> {
    if bundle.params_fingerprint != fingerprint(params.values())
        || bundle.decoder_start != params.config().decoder_start
    {
        return Err(Error::InvalidState(
            "state bundle was produced with different parameters".into(),
        ));
    }
    if *x != bundle.inputs {
        return Err(Error::InvalidState(
            "state bundle was produced from a different input".into(),
        ));
    }
    if y.shape() != bundle.y_hat.shape() {
        return Err(Error::invalid(format!(
            "target is {}x{}, prediction is {}x{}",
            y.rows(),
            y.cols(),
            bundle.y_hat.rows(),
            bundle.y_hat.cols()
        )));
    }

    let (m, n) = (params.input_dim(), params.hidden_dim());
    let layout = params.layout();
    let mut grads = Gradients::zeros_like(params);
    let g = &mut grads.values;
    let w_o = params.output_weight();
    let out_w = layout.output_weight_range();
    let out_b = layout.output_bias_range();
    let dec = params.gru(Role::Decoder);
    let enc = params.gru(Role::Encoder);
    let dec_offs = *layout.role(Role::Decoder);
    let enc_offs = *layout.role(Role::Encoder);

    let scale = 2.0 / y.rows() as f64;
    let mut dh = vec![0.0; n];
    // gradient flowing into the input of the step after `t`
    let mut d_next_input = vec![0.0; m];
    for t in (0..bundle.decoder_steps()).rev() {
        let dy: Vec<f64> = (0..m)
            .map(|j| scale * (bundle.y_hat[(t, j)] - y[(t, j)]) + d_next_input[j])
            .collect();
        let d_t = bundle.d.row(t);
        for k in 0..n {
            let row = &mut g[out_w.start + k * m..out_w.start + (k + 1) * m];
            for (gw, &dyj) in row.iter_mut().zip(&dy) {
                *gw += d_t[k] * dyj;
            }
            dh[k] += w_o[k * m..(k + 1) * m].iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
        }
        for (gb, &dyj) in g[out_b.clone()].iter_mut().zip(&dy) {
            *gb += dyj;
        }
        let (dh_prev, dx) = gru_step_backward(&dh, &bundle.decoder_cache[t], &dec, &dec_offs, g);
        dh = dh_prev;
        d_next_input = dx;
    }

    if bundle.decoder_start == DecoderStart::EncoderReadout {
        let last = bundle.e.row(bundle.encoder_steps() - 1);
        for k in 0..n {
            let row = &mut g[out_w.start + k * m..out_w.start + (k + 1) * m];
            for (gw, &dj) in row.iter_mut().zip(&d_next_input) {
                *gw += last[k] * dj;
            }
            dh[k] += w_o[k * m..(k + 1) * m]
                .iter()
                .zip(&d_next_input)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        for (gb, &dj) in g[out_b.clone()].iter_mut().zip(&d_next_input) {
            *gb += dj;
        }
    }

    for t in (0..bundle.encoder_steps()).rev() {
        let (dh_prev, _) = gru_step_backward(&dh, &bundle.encoder_cache[t], &enc, &enc_offs, g);
        dh = dh_prev;
    }
    Ok(grads)
}

/// Forward, loss and gradient for one `(X, Y)` pair.
pub fn loss_and_gradients(x: &Matrix, y: &Matrix, params: &SeqModelParams) -> Result<(f64, Gradients)> {
    let bundle = forward(x, params, y.rows())?;
    let loss = mse_loss(y, &bundle.y_hat)?;
    let grads = backward(&bundle, x, y, params)?;
    Ok((loss, grads))
}
