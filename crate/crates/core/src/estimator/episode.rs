//! Value-level entry points over the tape building blocks.

use crate::error::Result;
use crate::estimator::cell::{self, BoundParams, StateVars};
use crate::estimator::params::{Sibling, SneParams};
use crate::numerics::{Tape, Tensor2};

/// State of one sibling: hidden and cell vectors (H×B) and skip accumulator (1×B).
#[derive(Clone, Debug, PartialEq)]
pub struct SiblingState {
    pub h: Tensor2,
    pub c: Tensor2,
    pub u_hat: Tensor2,
}

impl SiblingState {
    /// Zero state with a full accumulator, so a gated sibling updates on its first step.
    pub fn zeros(state_dim: usize, cols: usize) -> Self {
        SiblingState {
            h: Tensor2::zeros(state_dim, cols),
            c: Tensor2::zeros(state_dim, cols),
            u_hat: Tensor2::filled(1, cols, 1.0),
        }
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> StateVars {
        StateVars { h: tape.leaf(self.h.clone()), c: tape.leaf(self.c.clone()), u_hat: tape.leaf(self.u_hat.clone()) }
    }

    pub(crate) fn read(tape: &Tape, vars: StateVars) -> Self {
        SiblingState {
            h: tape.value(vars.h).clone(),
            c: tape.value(vars.c).clone(),
            u_hat: tape.value(vars.u_hat).clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub src: SiblingState,
    pub co: SiblingState,
    /// Steps taken in the episode that produced this state.
    pub k: usize,
}

impl EpisodeState {
    pub fn zeros(state_dim: usize, cols: usize) -> Self {
        EpisodeState { src: SiblingState::zeros(state_dim, cols), co: SiblingState::zeros(state_dim, cols), k: 0 }
    }
}

/// The target position's own dequantized block: network input scaled to
/// `[-1, 1]` and the `[0, 1]` pixels predictions are anchored on.
#[derive(Clone, Debug)]
pub struct TargetBlock {
    pub input: Tensor2,
    pub pixels: Tensor2,
}

impl TargetBlock {
    pub fn zeros(block_len: usize, cols: usize) -> Self {
        TargetBlock { input: Tensor2::zeros(block_len, cols), pixels: Tensor2::zeros(block_len, cols) }
    }
}

pub struct EpisodeOutput {
    pub src_predictions: Vec<Tensor2>,
    /// Empty when the co-estimator did not run.
    pub co_predictions: Vec<Tensor2>,
    pub carry_out: EpisodeState,
    /// State updates performed, summed over active siblings.
    pub steps: usize,
}

/// `e = Σ W_i q_i` for one sibling.
pub fn transform_context(ctx: &[Tensor2], params: &SneParams, sibling: Sibling) -> Result<Tensor2> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let vars: Vec<_> = ctx.iter().map(|q| tape.leaf(q.clone())).collect();
    let e = cell::context_drive(&mut tape, &bound, sibling, &vars)?;
    Ok(tape.value(e).clone())
}

/// One state update of `sibling`, gated when the configured skip mode says so.
pub fn state_step(e: &Tensor2, prev: &SiblingState, sibling: Sibling, params: &SneParams) -> Result<SiblingState> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let e = tape.leaf(e.clone());
    let prev = prev.bind(&mut tape);
    let gated = params.config.skip.gates(sibling);
    let next = cell::state_step(&mut tape, &bound, sibling, e, prev, gated)?;
    Ok(SiblingState::read(&tape, next))
}

/// Raw affine head `U h + c`; clamping happens only at image assembly.
pub fn decode_head(state: &SiblingState, params: &SneParams) -> Result<Tensor2> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind_filtered(&mut tape, params, |n| n.starts_with("dec."));
    let h = tape.leaf(state.h.clone());
    let out = cell::decode_head(&mut tape, &bound, h, None)?;
    Ok(tape.value(out).clone())
}

/// Runs one K-step episode. `train = false` leaves the co-estimator untouched
/// and copies its carry through.
pub fn run_episode(
    src_ctx: &[Tensor2],
    co_ctx: &[Tensor2],
    target: Option<&TargetBlock>,
    carry_in: &EpisodeState,
    k: usize,
    params: &SneParams,
    train: bool,
) -> Result<EpisodeOutput> {
    let mut tape = Tape::new();
    let bound = if train {
        BoundParams::bind(&mut tape, params)
    } else {
        BoundParams::bind_filtered(&mut tape, params, |n| n.starts_with("src.") || n.starts_with("dec."))
    };
    let skip = params.config.skip;
    let (anchor_in, anchor_px) = match target {
        Some(t) => (Some(tape.leaf(t.input.clone())), Some(tape.leaf(t.pixels.clone()))),
        None => (None, None),
    };

    let run = |tape: &mut Tape, sibling: Sibling, ctx: &[Tensor2], carry: &SiblingState| {
        let ctx: Vec<_> = ctx.iter().map(|q| tape.leaf(q.clone())).collect();
        let e = cell::input_drive(tape, &bound, sibling, &ctx, anchor_in)?;
        let carry = carry.bind(tape);
        let ep = cell::sibling_episode(tape, &bound, sibling, e, anchor_px, carry, k, skip.gates(sibling))?;
        let preds: Vec<Tensor2> = ep.predictions.iter().map(|&p| tape.value(p).clone()).collect();
        Ok::<_, crate::error::SneError>((preds, SiblingState::read(tape, ep.carry)))
    };

    let (src_predictions, src_state) = run(&mut tape, Sibling::Source, src_ctx, &carry_in.src)?;
    let (co_predictions, co_state, steps) = if train {
        let (p, s) = run(&mut tape, Sibling::Co, co_ctx, &carry_in.co)?;
        (p, s, 2 * k)
    } else {
        (Vec::new(), carry_in.co.clone(), k)
    };
    Ok(EpisodeOutput {
        src_predictions,
        co_predictions,
        carry_out: EpisodeState { src: src_state, co: co_state, k },
        steps,
    })
}
