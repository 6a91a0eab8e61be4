//! Affordance network: patch tokenizer, joint cross-attention decoder,
//! per-point head, training and gradient verification.

mod checkpoint;
mod embeddings;
pub mod geometry;
mod gradcheck;
pub mod layers;
mod network;
mod params;
pub mod tensor;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use embeddings::{dump_patch_embeddings, format_patch_embeddings};
pub use geometry::{fps, knn_group, knn_indices, nearest_center};
pub use gradcheck::{grad_check, linear_grad_check, relative_error, GradCheckReport, GRAD_NORM_FLOOR, TensorCheck, FD_STEP};
pub use network::{
    bce_loss, cross_attention, forward, group_cloud, interpolate_and_head, joint_decode, patch_encode, tokenize,
    Grouping, Role, TokenBatch, PRED_CLAMP,
};
pub use params::{AttentionMode, DecoderBlock, ModelConfig, ModelParams};
pub use tensor::{Mat, Real};
pub use train::{train_one_shot, train_pairs, Adam, TrainOutcome};

use crate::cloud::ObjectPair;
use crate::error::Result;

/// Channel-`channel` probabilities of both objects as `f64` vectors.
pub fn predict_channel(
    pair: &ObjectPair,
    params: &ModelParams<f32>,
    config: &ModelConfig,
    channel: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = forward(pair, params, config, None)?;
    let col = |m: &Mat<f32>| (0..m.rows).map(|r| m.at(r, channel) as f64).collect();
    Ok((col(&a), col(&b)))
}
