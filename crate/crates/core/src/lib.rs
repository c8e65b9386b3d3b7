//! Masked texture-pattern reconstruction as an auxiliary task for deepfake
//! detection.
//!
//! A shared transformer encoder sees two views of every clip: the full RGB
//! clip (primary branch) and a tube-masked clip in some input modality
//! (auxiliary branch). The auxiliary branch feeds a shallow decoder that
//! reconstructs the masked patches of a local-texture target (LDP or LBP
//! codes). Mean-pooled features of both branches are multiplied element-wise
//! and classified as real or fake. Training minimises
//! `lambda * L_cls + (1 - lambda) * L_rec`.
//!
//! Crate layout:
//!
//! - [`texture`]: Kirsch responses, LDP and LBP code images.
//! - [`video`]: clips, patchification and tube masking.
//! - [`autograd`]: a small reverse-mode tape over dense matrices.
//! - [`model`]: encoder, decoder, fusion and classifier.
//! - [`objectives`]: cross-entropy, masked MSE and the joint loss.
//! - [`synth`]: synthetic real/fake clip generator, clip files and manifests.
//! - [`harness`]: configuration, training, evaluation, metrics and ablations.

pub mod autograd;
pub mod error;
pub mod harness;
pub mod model;
pub mod objectives;
pub mod synth;
pub mod texture;
pub mod video;

pub use error::{Error, Result};
