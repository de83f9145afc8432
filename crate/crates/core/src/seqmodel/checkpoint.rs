//! Self-describing JSON checkpoints.
//!
//! Values are written with shortest round-trip formatting and parsed with
//! exact float parsing, so weights survive a save/load cycle bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, SeqModelConfig, SeqModelParams};
use crate::{io, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "seqembed-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointBlock {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: SeqModelConfig,
    pub step: u64,
    pub blocks: Vec<CheckpointBlock>,
}

impl Checkpoint {
    pub fn from_params(params: &SeqModelParams) -> Self {
        let blocks = params
            .layout()
            .blocks()
            .iter()
            .map(|b| CheckpointBlock {
                name: b.name.clone(),
                shape: [b.rows, b.cols],
                values: params.values()[b.range()].to_vec(),
                adam_m: params.adam().m[b.range()].to_vec(),
                adam_v: params.adam().v[b.range()].to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: params.config().clone(),
            step: params.step(),
            blocks,
        }
    }

    pub fn into_params(self) -> Result<SeqModelParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("not a checkpoint: format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        self.config.validate()?;
        let layout = super::ParamLayout::new(
            self.config.input_dim,
            self.config.hidden_dim,
            self.config.share_params,
        );
        if layout.blocks().len() != self.blocks.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} blocks, the configuration needs {}",
                self.blocks.len(),
                layout.blocks().len()
            )));
        }
        let n = layout.len();
        let (mut values, mut m, mut v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (spec, block) in layout.blocks().iter().zip(&self.blocks) {
            if spec.name != block.name || [spec.rows, spec.cols] != block.shape {
                return Err(Error::invalid(format!(
                    "block `{}` {:?} does not match expected `{}` [{}, {}]",
                    block.name, block.shape, spec.name, spec.rows, spec.cols
                )));
            }
            for buf in [&block.values, &block.adam_m, &block.adam_v] {
                if buf.len() != spec.len() {
                    return Err(Error::invalid(format!(
                        "block `{}` has {} values, expected {}",
                        block.name,
                        buf.len(),
                        spec.len()
                    )));
                }
            }
            values[spec.range()].copy_from_slice(&block.values);
            m[spec.range()].copy_from_slice(&block.adam_m);
            v[spec.range()].copy_from_slice(&block.adam_v);
        }
        SeqModelParams::from_parts(self.config, values, AdamState { m, v, step: self.step })
    }
}

impl SeqModelParams {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from_params(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<Checkpoint>(text)?.into_params()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
