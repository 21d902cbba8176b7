use crate::codec::QuantizedRepresentation;
use crate::error::{Result, SneError};
use crate::estimator::cell::{self, BoundParams, StateVars};
use crate::estimator::episode::SiblingState;
use crate::estimator::params::{Sibling, SkipMode, SneParams};
use crate::image::ImageBuffer;
use crate::numerics::{Tape, Tensor2};
use crate::patching::{assemble_plane, scan_order, EncodedPlane};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub patches: usize,
    pub state_steps: usize,
}

impl DecodeStats {
    pub fn steps_per_patch(&self) -> f64 {
        self.state_steps as f64 / self.patches.max(1) as f64
    }
}

/// Reconstructs an image with the source estimator alone.
pub fn decode_image(
    rep: &QuantizedRepresentation,
    params: &SneParams,
    k: usize,
    skip: SkipMode,
) -> Result<ImageBuffer> {
    decode_image_with_stats(rep, params, k, skip).map(|(img, _)| img)
}

pub fn decode_image_with_stats(
    rep: &QuantizedRepresentation,
    params: &SneParams,
    k: usize,
    skip: SkipMode,
) -> Result<(ImageBuffer, DecodeStats)> {
    params.require_source(skip)?;
    if k == 0 {
        return Err(SneError::Parameter("K must be at least 1".into()));
    }
    if rep.block_edge() != params.config.patch_edge {
        return Err(SneError::Geometry(format!(
            "representation uses {}-pixel blocks, model expects {}",
            rep.block_edge(),
            params.config.patch_edge
        )));
    }
    let mut stats = DecodeStats::default();
    let mut planes = Vec::with_capacity(rep.channels());
    for ch in 0..rep.channels() {
        let plane = EncodedPlane::new(rep, ch)?;
        let patches = decode_plane(&plane, params, k, skip, &mut stats)?;
        let img = assemble_plane(rep.height(), rep.width(), rep.grid_dims(), rep.block_edge(), rep.mode(), &patches)?;
        planes.push(img.clamped());
    }
    Ok((ImageBuffer::from_planes(&planes)?, stats))
}

/// Final-step predictions for every grid position, visited in scan order with
/// the state carried from patch to patch.
pub(crate) fn decode_plane(
    plane: &EncodedPlane,
    params: &SneParams,
    k: usize,
    skip: SkipMode,
    stats: &mut DecodeStats,
) -> Result<Vec<Vec<f64>>> {
    let cfg = &params.config;
    let gated = skip.gates(Sibling::Source);
    let mut tape = Tape::new();
    let bound = BoundParams::bind_filtered(&mut tape, params, |n| n.starts_with("src.") || n.starts_with("dec."));
    let mark = tape.len();
    let mut carry = SiblingState::zeros(cfg.state_dim, 1);
    let mut out = vec![Vec::new(); plane.len()];
    let e_len = plane.block_edge * plane.block_edge;
    for idx in scan_order(plane.grid_rows, plane.grid_cols) {
        tape.truncate(mark);
        let ctx = plane.context(idx, &cfg.context.source_offsets);
        let ctx: Vec<_> = ctx.blocks.into_iter().map(|b| tape.leaf(column(b))).collect();
        let (anchor_in, anchor_px) = if cfg.anchor {
            (Some(tape.leaf(column(plane.inputs[idx].clone()))), Some(tape.leaf(column(plane.pixels[idx].clone()))))
        } else {
            (None, None)
        };
        let e = cell::input_drive(&mut tape, &bound, Sibling::Source, &ctx, anchor_in)?;
        let state: StateVars = carry.bind(&mut tape);
        let ep = cell::sibling_episode(&mut tape, &bound, Sibling::Source, e, anchor_px, state, k, gated)?;
        let last = *ep.predictions.last().expect("K >= 1");
        debug_assert_eq!(tape.value(last).len(), e_len);
        out[idx] = tape.value(last).data().to_vec();
        carry = SiblingState::read(&tape, ep.carry);
        stats.patches += 1;
        stats.state_steps += ep.hidden.len();
    }
    Ok(out)
}

fn column(data: Vec<f64>) -> Tensor2 {
    let n = data.len();
    Tensor2::from_vec(n, 1, data).expect("column shape")
}
