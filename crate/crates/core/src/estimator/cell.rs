//! Tape-level building blocks shared by training and decoding.

use std::collections::BTreeMap;

use crate::error::{Result, SneError};
use crate::estimator::params::{CellKind, ModelConfig, Sibling, SneParams, LSTM_GATES};
use crate::numerics::{Tape, Tensor2, Var};

/// Parameters recorded as leaves of one tape.
pub struct BoundParams {
    pub config: ModelConfig,
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    /// Binds every tensor of `params`.
    pub fn bind(tape: &mut Tape, params: &SneParams) -> Self {
        Self::bind_filtered(tape, params, |_| true)
    }

    /// Binds only the tensors accepted by `keep`.
    pub fn bind_filtered(tape: &mut Tape, params: &SneParams, keep: impl Fn(&str) -> bool) -> Self {
        let vars = params
            .tensors()
            .iter()
            .filter(|(name, _)| keep(name))
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
            .collect();
        BoundParams { config: params.config.clone(), vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| SneError::Checkpoint(format!("missing tensor '{name}'")))
    }

    fn sib(&self, sibling: Sibling, suffix: &str) -> Result<Var> {
        self.var(&format!("{}.{suffix}", sibling.prefix()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Recurrent state of one sibling on a tape: hidden and cell vectors (H×B) and
/// the skip accumulator (1×B).
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h: Var,
    pub c: Var,
    pub u_hat: Var,
}

/// `Σ W_i q_i` over the context blocks (E×B each); a tied matrix is applied to
/// the block sum.
pub fn context_drive(tape: &mut Tape, bound: &BoundParams, sibling: Sibling, ctx: &[Var]) -> Result<Var> {
    let n = bound.config.context.n();
    if ctx.len() != n {
        return Err(SneError::Shape {
            op: "transform_context",
            left: format!("{} blocks", ctx.len()),
            right: format!("{n} blocks"),
        });
    }
    if bound.config.tied {
        let sum = tape.add_all(ctx)?;
        let w = bound.sib(sibling, "ctx")?;
        tape.matmul(w, sum)
    } else {
        let terms = ctx
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                let w = bound.sib(sibling, &format!("ctx.{i}"))?;
                tape.matmul(w, q)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.add_all(&terms)
    }
}

/// Full input drive `e`: the context transform plus, with an anchored model,
/// the projection of the target's own dequantized block.
pub fn input_drive(
    tape: &mut Tape,
    bound: &BoundParams,
    sibling: Sibling,
    ctx: &[Var],
    anchor_input: Option<Var>,
) -> Result<Var> {
    let e = context_drive(tape, bound, sibling, ctx)?;
    match (bound.config.anchor, anchor_input) {
        (true, Some(q)) => {
            let w = bound.sib(sibling, "anchor")?;
            let t = tape.matmul(w, q)?;
            tape.add(e, t)
        }
        (true, None) => Err(SneError::Parameter("anchored model needs the target block".into())),
        (false, _) => Ok(e),
    }
}

fn affine(tape: &mut Tape, w: Var, x: Var, u: Var, z: Var, b: Option<Var>) -> Result<Var> {
    let a = tape.matmul(w, x)?;
    let r = tape.matmul(u, z)?;
    let s = tape.add(a, r)?;
    match b {
        Some(b) => tape.add_column(s, b),
        None => Ok(s),
    }
}

/// Ungated candidate state `(h, c)`.
fn candidate(tape: &mut Tape, bound: &BoundParams, sibling: Sibling, e: Var, prev: StateVars) -> Result<(Var, Var)> {
    match bound.config.cell {
        CellKind::Elman => {
            let u = bound.sib(sibling, "elman.u")?;
            let v = bound.sib(sibling, "elman.v")?;
            let pre = affine(tape, u, e, v, prev.h, None)?;
            Ok((tape.tanh(pre)?, prev.c))
        }
        CellKind::Lstm => {
            let mut gates = Vec::with_capacity(4);
            for g in LSTM_GATES {
                let wx = bound.sib(sibling, &format!("lstm.wx_{g}"))?;
                let wh = bound.sib(sibling, &format!("lstm.wh_{g}"))?;
                let b = bound.sib(sibling, &format!("lstm.b_{g}"))?;
                let pre = affine(tape, wx, e, wh, prev.h, Some(b))?;
                gates.push(if g == "g" { tape.tanh(pre)? } else { tape.sigmoid(pre)? });
            }
            let (i, f, o, g) = (gates[0], gates[1], gates[2], gates[3]);
            let keep = tape.mul(f, prev.c)?;
            let write = tape.mul(i, g)?;
            let c = tape.add(keep, write)?;
            let squashed = tape.tanh(c)?;
            let h = tape.mul(o, squashed)?;
            Ok((h, c))
        }
    }
}

/// `u·a + (1 − u)·b` with a 1×B gate broadcast over rows.
fn blend(tape: &mut Tape, u: Var, not_u: Var, a: Var, b: Var) -> Result<Var> {
    let x = tape.mul_row(a, u)?;
    let y = tape.mul_row(b, not_u)?;
    tape.add(x, y)
}

/// One state update. A gated sibling binarizes its accumulator, either takes the
/// candidate or copies the previous state, and advances the accumulator.
pub fn state_step(
    tape: &mut Tape,
    bound: &BoundParams,
    sibling: Sibling,
    e: Var,
    prev: StateVars,
    gated: bool,
) -> Result<StateVars> {
    let (h_new, c_new) = candidate(tape, bound, sibling, e, prev)?;
    if !gated {
        return Ok(StateVars { h: h_new, c: c_new, u_hat: prev.u_hat });
    }
    let u = tape.binarize(prev.u_hat);
    let not_u = tape.one_minus(u);
    let h = blend(tape, u, not_u, h_new, prev.h)?;
    let c = blend(tape, u, not_u, c_new, prev.c)?;

    let wp = bound.sib(sibling, "skip.w")?;
    let bp = bound.sib(sibling, "skip.b")?;
    let pre = tape.matmul(wp, h)?;
    let pre = tape.add_column(pre, bp)?;
    let delta = tape.sigmoid(pre)?;

    let headroom = tape.one_minus(prev.u_hat);
    let step = tape.min(delta, headroom)?;
    let grown = tape.add(prev.u_hat, step)?;
    let fresh = tape.mul(u, delta)?;
    let kept = tape.mul(not_u, grown)?;
    let u_hat = tape.add(fresh, kept)?;
    Ok(StateVars { h, c, u_hat })
}

/// Scalar form of the accumulator update, for reference and tests.
pub fn skip_accumulator_next(u: f64, u_hat: f64, delta: f64) -> f64 {
    u * delta + (1.0 - u) * (u_hat + delta.min(1.0 - u_hat))
}

/// `U h + c`, optionally on top of the target's dequantized pixels.
pub fn decode_head(tape: &mut Tape, bound: &BoundParams, h: Var, anchor_pixels: Option<Var>) -> Result<Var> {
    let u = bound.var("dec.u")?;
    let c = bound.var("dec.c")?;
    let uh = tape.matmul(u, h)?;
    let out = tape.add_column(uh, c)?;
    match anchor_pixels {
        Some(p) if bound.config.anchor => tape.add(p, out),
        _ => Ok(out),
    }
}

/// Trajectory of one sibling through a K-step episode.
pub struct SiblingEpisode {
    pub predictions: Vec<Var>,
    pub hidden: Vec<Var>,
    pub carry: StateVars,
}

#[allow(clippy::too_many_arguments)]
pub fn sibling_episode(
    tape: &mut Tape,
    bound: &BoundParams,
    sibling: Sibling,
    e: Var,
    anchor_pixels: Option<Var>,
    carry: StateVars,
    k: usize,
    gated: bool,
) -> Result<SiblingEpisode> {
    if k == 0 {
        return Err(SneError::Parameter("an episode needs K >= 1".into()));
    }
    let mut state = carry;
    let mut predictions = Vec::with_capacity(k);
    let mut hidden = Vec::with_capacity(k);
    for _ in 0..k {
        state = state_step(tape, bound, sibling, e, state, gated)?;
        hidden.push(state.h);
        predictions.push(decode_head(tape, bound, state.h, anchor_pixels)?);
    }
    Ok(SiblingEpisode { predictions, hidden, carry: state })
}

/// Per-column channel distance `‖W_err·h_co − (h_src + noise)‖₂` as a 1×B row.
/// Without `w_err` the co-estimator state enters unweighted.
pub fn channel_distance(tape: &mut Tape, w_err: Option<Var>, h_src: Var, h_co: Var, noise: Option<Var>) -> Result<Var> {
    let co = match w_err {
        Some(w) => tape.matmul(w, h_co)?,
        None => h_co,
    };
    let src = match noise {
        Some(n) => tape.add(h_src, n)?,
        None => h_src,
    };
    let diff = tape.sub(co, src)?;
    Ok(tape.col_norm(diff))
}

pub fn zero_state(tape: &mut Tape, state_dim: usize, cols: usize) -> StateVars {
    StateVars {
        h: tape.leaf(Tensor2::zeros(state_dim, cols)),
        c: tape.leaf(Tensor2::zeros(state_dim, cols)),
        u_hat: tape.leaf(Tensor2::filled(1, cols, 1.0)),
    }
}
