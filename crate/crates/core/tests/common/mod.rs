#![allow(dead_code)]

use sne_core::codec::{EncodeMode, QuantTable};
use sne_core::corpus::synthetic_image;
use sne_core::estimator::{CellKind, ModelConfig, SkipMode, SneParams};
use sne_core::image::ImageBuffer;
use sne_core::numerics::{RngStream, Tensor2};
use sne_core::trainer::{prepare_samples, TrainSample};

/// State dim 8, 4×4 patches, N = 4 context blocks per sibling.
pub fn mini_config(cell: CellKind, skip: SkipMode) -> ModelConfig {
    ModelConfig { state_dim: 8, patch_edge: 4, cell, skip, ..ModelConfig::default() }
}

/// Parameters drawn wider than the training init so every path carries signal.
pub fn mini_params(cfg: ModelConfig, seed: u64) -> SneParams {
    SneParams::init(cfg, &mut RngStream::new(seed), 0.5).unwrap()
}

pub fn tiny_image(seed: u64, size: usize) -> ImageBuffer {
    synthetic_image(size, size, &mut RngStream::new(seed))
}

/// Two 8×8 images on a 4-pixel grid: a batch of two planes of four patches.
pub fn mini_batch() -> Vec<TrainSample> {
    let table = QuantTable::standard(4, 0.5).unwrap();
    (0..2).flat_map(|s| prepare_samples(&tiny_image(100 + s, 8), &table, EncodeMode::Aligned).unwrap()).collect()
}

pub fn random_column(rng: &mut RngStream, n: usize, scale: f64) -> Tensor2 {
    rng.uniform_tensor(n, 1, -scale, scale)
}

pub fn max_abs_diff(a: &Tensor2, b: &Tensor2) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
