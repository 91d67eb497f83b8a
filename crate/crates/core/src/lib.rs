//! Relational contrastive pre-training for music track encoders, plus the
//! cold-start playlist-continuation stack that consumes the learned
//! embeddings.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense kernels, parameter containers, optimizers and the
//!   finite-difference gradient checker.
//! - [`corpus`]: tracks, playlists, interaction graphs, synthetic corpora and
//!   corpus files.
//! - [`encoder`]: the dual audio/text encoder, its momentum copy, the FIFO
//!   negative queue and the per-track representation tables.
//! - [`losses`]: the contrast primitive, within-track, track-track and
//!   track-playlist losses, and the self-attention playlist fusion layer.
//! - [`trainer`]: the multi-stage training loop with early stopping.
//! - [`recsys`]: embedding extraction, ItemKNN, WMF + DropoutNet and CLCRec.
//! - [`eval`]: ranking metrics, evaluation tasks, homogeneity, PCA export,
//!   ablations and seed-count sweeps.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod numkit;
pub mod recsys;
pub mod trainer;

pub use error::{Error, Result};
