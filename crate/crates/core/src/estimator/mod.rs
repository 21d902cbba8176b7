//! Sibling recurrent estimators: context transform, state update (LSTM or
//! Elman, optionally skip-gated), affine reconstruction head, K-step episodes
//! and source-only image decoding.

pub mod cell;
pub mod checkpoint;
pub mod decode;
pub mod episode;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use decode::{decode_image, decode_image_with_stats, DecodeStats};
pub use episode::{
    decode_head, run_episode, state_step, transform_context, EpisodeOutput, EpisodeState, SiblingState, TargetBlock,
};
pub use params::{is_co_estimator_tensor, CellKind, ModelConfig, Sibling, SkipMode, SneParams};
