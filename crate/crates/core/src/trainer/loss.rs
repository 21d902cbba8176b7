//! Joint training objective: per-sibling reconstruction error plus the
//! communication term that ties the co-estimator's state to the source's.

use rayon::prelude::*;

use crate::error::{Result, SneError};
use crate::estimator::cell::{self, BoundParams, StateVars};
use crate::estimator::{Sibling, SneParams};
use crate::numerics::{NamedTensors, RngStream, Tape, Tensor2, Var};
use crate::patching::{scan_order, EncodedPlane};
use crate::trainer::schedule::Channel;

/// One training plane: decoder-side inputs plus the original pixels of every
/// patch, indexed by grid position.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub plane: EncodedPlane,
    pub targets: Vec<Vec<f64>>,
}

impl TrainSample {
    pub fn new(plane: EncodedPlane, targets: Vec<Vec<f64>>) -> Result<Self> {
        let e = plane.block_edge * plane.block_edge;
        if targets.len() != plane.len() || targets.iter().any(|t| t.len() != e) {
            return Err(SneError::Geometry("targets do not match the encoded plane".into()));
        }
        Ok(TrainSample { plane, targets })
    }

    pub fn patches(&self) -> usize {
        self.plane.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub channel: Channel,
    pub k: usize,
    pub alpha: f64,
    pub sigma2: f64,
    pub mu: f64,
    pub co_mse_weight: f64,
    /// Whether the regularized channel maps the co-estimator state through `W_err`.
    pub reg_uses_err_matrix: bool,
    pub straight_through: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            channel: Channel::Comm,
            k: 2,
            alpha: 0.1,
            sigma2: 0.0,
            mu: 0.0,
            co_mse_weight: 1.0,
            reg_uses_err_matrix: true,
            straight_through: true,
        }
    }
}

/// Normalized loss terms of a batch; `total` already carries the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse_src: f64,
    pub mse_co: f64,
    pub channel: f64,
}

/// Noise added to the source state: one H×1 draw per (scan position, step),
/// `None` on plain-channel epochs.
pub type SampleNoise = Option<Vec<Tensor2>>;

/// Draws the noise for every sample of a batch, in batch order.
pub fn sample_noise(
    batch: &[&TrainSample],
    state_dim: usize,
    cfg: &LossConfig,
    rng: &mut RngStream,
) -> Result<Vec<SampleNoise>> {
    batch
        .iter()
        .map(|s| match cfg.channel {
            Channel::Comm => Ok(None),
            Channel::RegComm => (0..s.patches() * cfg.k)
                .map(|_| rng.sample_gaussian(cfg.mu, cfg.sigma2, state_dim, 1))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        })
        .collect()
}

fn col_mean_norm(diff: &Tensor2) -> f64 {
    let mut total = 0.0;
    for c in 0..diff.cols() {
        total += (0..diff.rows()).map(|r| diff.get(r, c).powi(2)).sum::<f64>().sqrt();
    }
    total / diff.cols().max(1) as f64
}

/// Mean over columns of `‖W_err·h_co − h_src‖₂`.
pub fn comm_loss(h_src: &Tensor2, h_co: &Tensor2, w_err: &Tensor2) -> Result<f64> {
    let mapped = w_err.matmul(h_co)?;
    Ok(col_mean_norm(&mapped.sub(h_src)?))
}

/// Mean over columns of `‖W·h_co − (h_src + noise)‖₂`; `W` is the identity
/// when `w_err` is `None`.
pub fn reg_comm_loss(h_src: &Tensor2, h_co: &Tensor2, w_err: Option<&Tensor2>, noise: &Tensor2) -> Result<f64> {
    let mapped = match w_err {
        Some(w) => w.matmul(h_co)?,
        None => h_co.clone(),
    };
    Ok(col_mean_norm(&mapped.sub(&h_src.add(noise)?)?))
}

/// `Σ_k ‖x̂_k − x‖² / (2·K·B)` for one episode's predictions (E×B each).
pub fn episode_mse(predictions: &[Tensor2], target: &Tensor2) -> Result<f64> {
    if predictions.is_empty() {
        return Err(SneError::Parameter("an episode needs K >= 1".into()));
    }
    let mut total = 0.0;
    for p in predictions {
        total += p.sub(target)?.data().iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total / (2.0 * predictions.len() as f64 * target.cols().max(1) as f64))
}

struct ImageTerms {
    mse_src: Var,
    mse_co: Var,
    channel: Var,
}

fn column(tape: &mut Tape, data: &[f64]) -> Var {
    tape.leaf(Tensor2::from_vec(data.len(), 1, data.to_vec()).expect("column shape"))
}

/// Hidden states (per step) and squared errors of one sibling walking the
/// plane in `order`, with the state carried from patch to patch.
fn walk(
    tape: &mut Tape,
    bound: &BoundParams,
    sibling: Sibling,
    sample: &TrainSample,
    order: &[usize],
    k: usize,
) -> Result<(Vec<Vec<Var>>, Vec<Var>)> {
    let cfg = &bound.config;
    let offsets = match sibling {
        Sibling::Source => &cfg.context.source_offsets,
        Sibling::Co => &cfg.context.co_offsets,
    };
    let gated = cfg.skip.gates(sibling);
    let mut hidden = vec![Vec::new(); sample.patches()];
    let mut errors = Vec::with_capacity(order.len() * k);
    let mut carry: StateVars = cell::zero_state(tape, cfg.state_dim, 1);
    for &idx in order {
        let ctx = sample.plane.context(idx, offsets);
        let ctx: Vec<_> = ctx.blocks.iter().map(|b| column(tape, b)).collect();
        let (anchor_in, anchor_px) = if cfg.anchor {
            (Some(column(tape, &sample.plane.inputs[idx])), Some(column(tape, &sample.plane.pixels[idx])))
        } else {
            (None, None)
        };
        let target = column(tape, &sample.targets[idx]);
        let e = cell::input_drive(tape, bound, sibling, &ctx, anchor_in)?;
        let ep = cell::sibling_episode(tape, bound, sibling, e, anchor_px, carry, k, gated)?;
        for &p in &ep.predictions {
            let d = tape.sub(p, target)?;
            errors.push(tape.sum_squares(d));
        }
        hidden[idx] = ep.hidden;
        carry = ep.carry;
    }
    Ok((hidden, errors))
}

fn image_terms(
    tape: &mut Tape,
    bound: &BoundParams,
    sample: &TrainSample,
    cfg: &LossConfig,
    noise: Option<&[Tensor2]>,
) -> Result<ImageTerms> {
    let order = scan_order(sample.plane.grid_rows, sample.plane.grid_cols);
    let reversed: Vec<usize> = order.iter().rev().copied().collect();
    let (h_src, err_src) = walk(tape, bound, Sibling::Source, sample, &order, cfg.k)?;
    let (h_co, err_co) = walk(tape, bound, Sibling::Co, sample, &reversed, cfg.k)?;

    let use_err = match cfg.channel {
        Channel::Comm => true,
        Channel::RegComm => cfg.reg_uses_err_matrix,
    };
    let w_err = if use_err { Some(bound.var("comm.w_err")?) } else { None };
    let mut distances = Vec::with_capacity(order.len() * cfg.k);
    for (pos, &idx) in order.iter().enumerate() {
        for step in 0..cfg.k {
            let n = noise.map(|all| tape.leaf(all[pos * cfg.k + step].clone()));
            distances.push(cell::channel_distance(tape, w_err, h_src[idx][step], h_co[idx][step], n)?);
        }
    }
    Ok(ImageTerms {
        mse_src: tape.add_all(&err_src)?,
        mse_co: tape.add_all(&err_co)?,
        channel: tape.add_all(&distances)?,
    })
}

/// Loss of one sample under batch-wide normalization, plus its gradient.
fn sample_loss(
    sample: &TrainSample,
    params: &SneParams,
    cfg: &LossConfig,
    noise: Option<&[Tensor2]>,
    norm_patches: usize,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<NamedTensors>)> {
    let mut tape = Tape::new();
    tape.set_straight_through(cfg.straight_through);
    let bound = BoundParams::bind(&mut tape, params);
    let terms = image_terms(&mut tape, &bound, sample, cfg, noise)?;
    let bk = (norm_patches * cfg.k) as f64;
    let src = tape.scale(terms.mse_src, 1.0 / (2.0 * bk));
    let co = tape.scale(terms.mse_co, 1.0 / (2.0 * bk));
    let chan = tape.scale(terms.channel, 1.0 / bk);
    let co_w = tape.scale(co, cfg.co_mse_weight);
    let chan_w = tape.scale(chan, cfg.alpha);
    let total = tape.add_all(&[src, co_w, chan_w])?;
    let value = |v: Var| tape.value(v).get(0, 0);
    let breakdown = LossBreakdown { total: value(total), mse_src: value(src), mse_co: value(co), channel: value(chan) };
    let grads = if with_grad {
        let g = tape.backward(total)?;
        Some(bound.iter().map(|(name, &v)| (name.clone(), g.get_or_zeros(v, tape.value(v).shape()))).collect())
    } else {
        None
    };
    Ok((breakdown, grads))
}

/// Loss and optional gradient over a batch. Samples are evaluated in parallel,
/// then combined in batch order so the result does not depend on scheduling.
pub fn batch_loss(
    batch: &[&TrainSample],
    params: &SneParams,
    cfg: &LossConfig,
    noise: &[SampleNoise],
    with_grad: bool,
) -> Result<(LossBreakdown, Option<NamedTensors>)> {
    if batch.is_empty() {
        return Err(SneError::Parameter("empty batch".into()));
    }
    if noise.len() != batch.len() {
        return Err(SneError::Parameter("noise does not match the batch".into()));
    }
    if cfg.k == 0 {
        return Err(SneError::Parameter("K must be at least 1".into()));
    }
    for (s, n) in batch.iter().zip(noise) {
        if let Some(n) = n {
            if n.len() != s.patches() * cfg.k {
                return Err(SneError::Parameter("noise does not match the batch".into()));
            }
        }
    }
    let patches: usize = batch.iter().map(|s| s.patches()).sum();
    let parts: Vec<Result<(LossBreakdown, Option<NamedTensors>)>> = batch
        .par_iter()
        .zip(noise.par_iter())
        .map(|(s, n)| sample_loss(s, params, cfg, n.as_deref(), patches, with_grad))
        .collect();

    let mut sum = LossBreakdown::default();
    let mut grads: Option<NamedTensors> = None;
    for part in parts {
        let (b, g) = part?;
        sum.total += b.total;
        sum.mse_src += b.mse_src;
        sum.mse_co += b.mse_co;
        sum.channel += b.channel;
        if let Some(g) = g {
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => {
                    for (name, t) in g {
                        let slot = acc.get_mut(&name).expect("same tensors per sample");
                        slot.add_assign(&t);
                    }
                }
            }
        }
    }
    if !sum.total.is_finite() {
        return Err(SneError::NonFinite("training loss"));
    }
    Ok((sum, grads))
}
