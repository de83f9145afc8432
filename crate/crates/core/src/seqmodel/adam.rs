use super::{Gradients, SeqModelParams};
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// One bias-corrected ADAM step; clips first when the model config asks for it.
pub fn adam_update(params: &mut SeqModelParams, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.values.len() != params.values.len() {
        return Err(Error::invalid("gradient buffer does not match the parameters"));
    }
    if let Some(idx) = grads.values.iter().position(|g| !g.is_finite()) {
        let block = params
            .layout
            .block_of(idx)
            .map_or_else(|| format!("#{idx}"), |b| b.name.clone());
        return Err(Error::NonFiniteGradient { block });
    }
    let clipped;
    let grads = match params.config.grad_clip_norm {
        Some(max) if grads.norm() > max => {
            let mut g = grads.clone();
            clip_global_norm(&mut g, max);
            clipped = g;
            &clipped
        }
        _ => grads,
    };

    let state = &mut params.adam;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (((w, m), v), &g) in params
        .values
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
        .zip(&grads.values)
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}
