//! Interpretable embeddings of GRU encoder-decoder hidden states.
//!
//! The crate trains small sequence predictors, stacks their encoder and
//! decoder states into a global state matrix, decomposes it with a
//! proper orthogonal decomposition and projects per-sequence trajectories
//! into the leading modes. Clustering those projections gives training
//! diagnostics and an unsupervised segmentation of long multivariate
//! sequences.
//!
//! Module map:
//! - [`numcore`]: dense matrices, centering and a one-sided Jacobi SVD.
//! - [`seqmodel`]: the GRU encoder-decoder, BPTT and ADAM.
//! - [`datagen`]: synthetic conic corpora and CSV ingestion.
//! - [`embedding`]: state matrices, POD basis, mode counts, projection.
//! - [`clusterlab`]: K-means++, single-linkage cosine clustering, ARI.
//! - [`trainmon`]: training with per-iteration embedding snapshots.
//! - [`segment`]: sliding-window temporal segmentation.

pub mod clusterlab;
pub mod datagen;
pub mod embedding;
mod error;
pub mod io;
pub mod numcore;
pub mod segment;
pub mod seqmodel;
pub mod trainmon;

pub use error::{Error, Result};
pub use numcore::{Matrix, SvdResult};
