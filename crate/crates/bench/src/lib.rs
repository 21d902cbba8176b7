//! Shared fixtures for the criterion benchmarks under `benches/`.

use sne_core::corpus::synthetic_image;
use sne_core::{
    encode_image, EncodeMode, ImageBuffer, ModelConfig, QuantTable, QuantizedRepresentation, RngStream, SneParams,
};

/// A deterministic grayscale image of the given edge length.
pub fn image(edge: usize, seed: u64) -> ImageBuffer {
    synthetic_image(edge, edge, &mut RngStream::new(seed))
}

/// Image, its aligned encoding at `quality`, and a randomly initialized model.
pub fn decode_fixture(
    edge: usize,
    state_dim: usize,
    quality: f64,
) -> (ImageBuffer, QuantizedRepresentation, SneParams) {
    let img = image(edge, 11);
    let table = QuantTable::standard(8, quality).expect("valid quality");
    let rep = encode_image(&img, &table, EncodeMode::Aligned).expect("encodable image");
    let cfg = ModelConfig { state_dim, patch_edge: 8, ..ModelConfig::default() };
    let params = SneParams::init(cfg, &mut RngStream::new(5), 0.05).expect("valid config");
    (img, rep, params)
}
