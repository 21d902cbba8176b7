//! Sibling recurrent estimators that refine block-quantized images.
//!
//! An image is encoded by a block-DCT quantizer ([`codec`]). At decode time a
//! recurrent source estimator walks the patch grid ([`patching`]) and, over K
//! refinement steps per patch, predicts each block from its already-seen
//! neighbours ([`estimator`]). During training a co-estimator with a disjoint
//! context is tied to the source through a communication loss ([`trainer`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod corpus;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod image;
pub mod kv;
pub mod numerics;
pub mod patching;
pub mod trainer;

pub use codec::{baseline_decode, encode_image, EncodeMode, QuantTable, QuantizedRepresentation};
pub use error::{Result, SneError};
pub use estimator::{decode_image, load_checkpoint, save_checkpoint, ModelConfig, SkipMode, SneParams};
pub use eval::{KSweepReport, MetricReport};
pub use image::ImageBuffer;
pub use numerics::{RngStream, Tensor2};
pub use patching::ContextSpec;
pub use trainer::{RunConfig, TrainSchedule};
