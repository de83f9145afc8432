//! Single-layer GRU encoder-decoder with a linear read-out.
//!
//! The encoder consumes `X` (`T_e x M`) from a zero state. The decoder starts
//! from the last encoder state, receives the last encoder input frame (or,
//! optionally, the read-out of the last encoder state) as its first input and
//! its own previous prediction afterwards, during training as well as
//! inference. All weights live in one flat buffer described by a
//! [`ParamLayout`]; with shared parameters the decoder blocks resolve to the
//! encoder offsets, so both roles read and accumulate into the same storage.

mod adam;
mod checkpoint;
mod gru;
mod network;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::{adam_update, clip_global_norm, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, CheckpointBlock, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gru::{gru_step, GruView, StepCache};
pub use network::{backward, forward, loss_and_gradients, mse_loss, StateBundle};

/// Input fed to the first decoder step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderStart {
    /// The last encoder input row `x_{T_e}`.
    #[default]
    LastInput,
    /// The read-out of the last encoder state, `e_{T_e} W_o + b_o`.
    EncoderReadout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub encoder_steps: usize,
    pub decoder_steps: usize,
    #[serde(default)]
    pub share_params: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub grad_clip_norm: Option<f64>,
    #[serde(default)]
    pub decoder_start: DecoderStart,
}

fn default_learning_rate() -> f64 {
    0.01
}

impl SeqModelConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, encoder_steps: usize, decoder_steps: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            encoder_steps,
            decoder_steps,
            share_params: false,
            seed: 0,
            learning_rate: default_learning_rate(),
            grad_clip_norm: None,
            decoder_start: DecoderStart::LastInput,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("encoder_steps", self.encoder_steps),
            ("decoder_steps", self.decoder_steps),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid("grad_clip_norm must be positive"));
            }
        }
        Ok(())
    }
}

/// Which recurrent block a weight belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Encoder,
    Decoder,
}

/// One GRU weight kind. Input maps are `M x N`, recurrent maps `N x N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GruWeight {
    InputUpdate,
    InputReset,
    InputCandidate,
    RecurrentUpdate,
    RecurrentReset,
    RecurrentCandidate,
    BiasUpdate,
    BiasReset,
    BiasCandidate,
}

impl GruWeight {
    pub const ALL: [GruWeight; 9] = [
        GruWeight::InputUpdate,
        GruWeight::InputReset,
        GruWeight::InputCandidate,
        GruWeight::RecurrentUpdate,
        GruWeight::RecurrentReset,
        GruWeight::RecurrentCandidate,
        GruWeight::BiasUpdate,
        GruWeight::BiasReset,
        GruWeight::BiasCandidate,
    ];

    fn suffix(self) -> &'static str {
        match self {
            GruWeight::InputUpdate => "w_z",
            GruWeight::InputReset => "w_r",
            GruWeight::InputCandidate => "w_h",
            GruWeight::RecurrentUpdate => "u_z",
            GruWeight::RecurrentReset => "u_r",
            GruWeight::RecurrentCandidate => "u_h",
            GruWeight::BiasUpdate => "b_z",
            GruWeight::BiasReset => "b_r",
            GruWeight::BiasCandidate => "b_h",
        }
    }

    fn shape(self, m: usize, n: usize) -> (usize, usize) {
        match self {
            GruWeight::InputUpdate | GruWeight::InputReset | GruWeight::InputCandidate => (m, n),
            GruWeight::RecurrentUpdate | GruWeight::RecurrentReset | GruWeight::RecurrentCandidate => (n, n),
            _ => (1, n),
        }
    }

    fn is_bias(self) -> bool {
        matches!(
            self,
            GruWeight::BiasUpdate | GruWeight::BiasReset | GruWeight::BiasCandidate
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub is_bias: bool,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of the nine GRU blocks of one role, in [`GruWeight::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct GruOffsets(pub [usize; 9]);

impl GruOffsets {
    #[inline]
    pub(crate) fn of(&self, w: GruWeight) -> usize {
        self.0[w as usize]
    }
}

/// Placement of every parameter block inside the flat value buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<BlockSpec>,
    encoder: GruOffsets,
    decoder: GruOffsets,
    out_w: usize,
    out_b: usize,
    input_dim: usize,
    hidden_dim: usize,
    len: usize,
}

impl ParamLayout {
    pub fn new(input_dim: usize, hidden_dim: usize, shared: bool) -> Self {
        let (m, n) = (input_dim, hidden_dim);
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, (rows, cols): (usize, usize), is_bias: bool| {
            let at = offset;
            blocks.push(BlockSpec {
                name,
                rows,
                cols,
                offset: at,
                is_bias,
            });
            offset += rows * cols;
            at
        };
        let role_offsets = |prefix: &str, push: &mut dyn FnMut(String, (usize, usize), bool) -> usize| {
            let mut offs = [0; 9];
            for w in GruWeight::ALL {
                offs[w as usize] = push(format!("{prefix}.{}", w.suffix()), w.shape(m, n), w.is_bias());
            }
            GruOffsets(offs)
        };
        let encoder = role_offsets("encoder", &mut push);
        let decoder = if shared {
            encoder
        } else {
            role_offsets("decoder", &mut push)
        };
        let out_w = push("output.w".into(), (n, m), false);
        let out_b = push("output.b".into(), (1, m), true);
        Self {
            blocks,
            encoder,
            decoder,
            out_w,
            out_b,
            input_dim,
            hidden_dim,
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn is_shared(&self) -> bool {
        self.encoder == self.decoder
    }

    pub(crate) fn role(&self, role: Role) -> &GruOffsets {
        match role {
            Role::Encoder => &self.encoder,
            Role::Decoder => &self.decoder,
        }
    }

    /// Range of one GRU weight for a role.
    pub fn gru_range(&self, role: Role, w: GruWeight) -> std::ops::Range<usize> {
        let (r, c) = w.shape(self.input_dim, self.hidden_dim);
        let at = self.role(role).of(w);
        at..at + r * c
    }

    pub fn output_weight_range(&self) -> std::ops::Range<usize> {
        self.out_w..self.out_w + self.hidden_dim * self.input_dim
    }

    pub fn output_bias_range(&self) -> std::ops::Range<usize> {
        self.out_b..self.out_b + self.input_dim
    }

    /// Name of the block containing flat index `idx`.
    pub fn block_of(&self, idx: usize) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.range().contains(&idx))
    }
}

/// ADAM moment buffers and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

/// Every trainable value of the model plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqModelParams {
    config: SeqModelConfig,
    layout: ParamLayout,
    values: Vec<f64>,
    adam: AdamState,
}

impl SeqModelParams {
    /// Uniform weights in `[-1/sqrt(N), 1/sqrt(N)]`, zero biases.
    pub fn init(config: &SeqModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config.input_dim, config.hidden_dim, config.share_params);
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut values = vec![0.0; layout.len()];
        for b in layout.blocks() {
            if b.is_bias {
                continue;
            }
            for v in &mut values[b.range()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        let n = layout.len();
        Ok(Self {
            config: config.clone(),
            layout,
            values,
            adam: AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        })
    }

    /// Same architecture with every value zero.
    pub fn zeros(config: &SeqModelConfig) -> Result<Self> {
        let mut p = Self::init(config)?;
        p.values.iter_mut().for_each(|v| *v = 0.0);
        Ok(p)
    }

    pub(crate) fn from_parts(config: SeqModelConfig, values: Vec<f64>, adam: AdamState) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config.input_dim, config.hidden_dim, config.share_params);
        if values.len() != layout.len() || adam.m.len() != layout.len() || adam.v.len() != layout.len() {
            return Err(Error::invalid("parameter buffers do not match the layout"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter value"));
        }
        Ok(Self {
            config,
            layout,
            values,
            adam,
        })
    }

    pub fn config(&self) -> &SeqModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn gru(&self, role: Role) -> GruView<'_> {
        GruView::new(&self.values, self.layout.role(role), self.input_dim(), self.hidden_dim())
    }

    pub fn gru_block(&self, role: Role, w: GruWeight) -> &[f64] {
        &self.values[self.layout.gru_range(role, w)]
    }

    pub fn gru_block_mut(&mut self, role: Role, w: GruWeight) -> &mut [f64] {
        let r = self.layout.gru_range(role, w);
        &mut self.values[r]
    }

    /// Read-out weights, `N x M` row-major.
    pub fn output_weight(&self) -> &[f64] {
        &self.values[self.layout.output_weight_range()]
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.values[self.layout.output_bias_range()]
    }

    /// Cheap fingerprint of the weights, used to detect stale forward caches.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.values)
    }
}

pub(crate) fn fingerprint(values: &[f64]) -> u64 {
    // FNV-1a over the bit patterns
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Gradients laid out exactly like [`SeqModelParams::values`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &SeqModelParams) -> Self {
        Self {
            values: vec![0.0; params.layout().len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// `self += other * scale`.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * scale;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|g| *g *= s);
    }
}
