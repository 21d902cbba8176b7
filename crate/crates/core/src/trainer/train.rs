use std::fmt::Write as _;

use crate::codec::{encode_image, EncodeMode, QuantTable, QuantizedRepresentation};
use crate::error::{Result, SneError};
use crate::estimator::{decode_image, SneParams};
use crate::eval::metrics::psnr;
use crate::image::ImageBuffer;
use crate::numerics::RngStream;
use crate::patching::{build_grid, EncodedPlane};
use crate::trainer::config::RunConfig;
use crate::trainer::loss::{batch_loss, sample_noise, LossConfig, TrainSample};
use crate::trainer::optim::{step, OptimizerState};
use crate::trainer::schedule::{epoch_plan, learning_rate, noise_variance, Channel, OptimizerMode};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub channel: Channel,
    pub k: usize,
    pub sigma2: f64,
    pub lr: f64,
    pub mode: OptimizerMode,
    pub train_loss: f64,
    /// Mean held-out PSNR in dB; NaN without held-out images.
    pub val_psnr: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch,channel,K,sigma2,lr,mode,train_loss,val_psnr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch, self.channel, self.k, self.sigma2, self.lr, self.mode, self.train_loss, self.val_psnr
        )
    }

    /// Parses a row written by [`EpochLog::csv_row`].
    pub fn parse_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(SneError::Format(format!("log row needs 8 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| SneError::Format(format!("bad number '{s}'")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| SneError::Format(format!("bad integer '{s}'")));
        Ok(EpochLog {
            epoch: int(f[0])?,
            channel: f[1].parse()?,
            k: int(f[2])?,
            sigma2: num(f[3])?,
            lr: num(f[4])?,
            mode: f[5].parse()?,
            train_loss: num(f[6])?,
            val_psnr: num(f[7])?,
        })
    }
}

pub fn render_log(log: &[EpochLog]) -> String {
    let mut out = String::from(EpochLog::HEADER);
    out.push('\n');
    for row in log {
        let _ = writeln!(out, "{}", row.csv_row());
    }
    out
}

pub struct TrainOutcome {
    pub params: SneParams,
    pub log: Vec<EpochLog>,
}

/// Encodes `img` and pairs every plane with its original patches.
pub fn prepare_samples(img: &ImageBuffer, table: &QuantTable, mode: EncodeMode) -> Result<Vec<TrainSample>> {
    let rep = encode_image(img, table, mode)?;
    (0..img.channels())
        .map(|ch| {
            let grid = build_grid(&img.plane(ch), table.block_edge(), mode)?;
            let targets = (0..grid.len()).map(|i| grid.target(i).to_vec()).collect();
            TrainSample::new(EncodedPlane::new(&rep, ch)?, targets)
        })
        .collect()
}

/// Mean PSNR of source-only decoding over the held-out set.
pub fn validation_psnr(val: &[(ImageBuffer, QuantizedRepresentation)], params: &SneParams, k: usize) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (img, rep) in val {
        let decoded = decode_image(rep, params, k, params.config.skip)?;
        total += psnr(img, &decoded)?;
    }
    Ok(total / val.len() as f64)
}

/// Trains a fresh model. The run is a pure function of the config and the
/// images: randomness comes from streams forked off `cfg.seed`, and batch
/// results are combined in a fixed order whatever the thread count.
pub fn train(
    cfg: &RunConfig,
    train_images: &[ImageBuffer],
    val_images: &[ImageBuffer],
    mut observer: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_images.is_empty() {
        return Err(SneError::Config("no training images".into()));
    }
    let table = QuantTable::standard(cfg.model.patch_edge, cfg.quality)?;
    let mut samples = Vec::new();
    for img in train_images {
        samples.extend(prepare_samples(img, &table, cfg.mode)?);
    }
    let val = val_images
        .iter()
        .map(|img| Ok((img.clone(), encode_image(img, &table, cfg.mode)?)))
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| SneError::Config(format!("thread pool: {e}")))?;

    let root = RngStream::new(cfg.seed);
    let mut params = SneParams::init(cfg.model.clone(), &mut root.fork(STREAM_INIT), cfg.init_scale)?;
    let mut shuffle_rng = root.fork(STREAM_SHUFFLE);
    let mut noise_rng = root.fork(STREAM_NOISE);
    let mut opt = OptimizerState::new(&params);

    let s = &cfg.schedule;
    let total_patches: usize = samples.iter().map(|x| x.patches()).sum();
    let per_sample = (total_patches / samples.len()).max(1);
    let per_batch = (s.batch / per_sample).max(1);

    let mut log = Vec::with_capacity(s.total_epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..s.total_epochs {
        let (channel, k) = epoch_plan(epoch, s);
        let sigma2 = noise_variance(epoch, s.sigma2_0, s.switch_epoch);
        let (mode, lr) = learning_rate(epoch, s);
        let loss_cfg = LossConfig {
            channel,
            k,
            alpha: s.alpha,
            sigma2,
            mu: s.mu,
            co_mse_weight: cfg.co_mse_weight,
            reg_uses_err_matrix: cfg.reg_comm_uses_err_matrix,
            straight_through: true,
        };
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(per_batch) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let noise = sample_noise(&batch, cfg.model.state_dim, &loss_cfg, &mut noise_rng)?;
            let (loss, grads) = pool.install(|| batch_loss(&batch, &params, &loss_cfg, &noise, true))?;
            step(&mut params, &grads.expect("gradient requested"), &mut opt, epoch, s)?;
            if !params.is_finite() {
                return Err(SneError::NonFinite("parameters after update"));
            }
            loss_sum += loss.total;
            batches += 1;
        }
        let row = EpochLog {
            epoch,
            channel,
            k,
            sigma2,
            lr,
            mode,
            train_loss: loss_sum / batches as f64,
            val_psnr: validation_psnr(&val, &params, cfg.decode_steps())?,
        };
        observer(&row);
        log.push(row);
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_rows_round_trip() {
        let row = EpochLog {
            epoch: 7,
            channel: Channel::RegComm,
            k: 3,
            sigma2: 0.0095,
            lr: 1.9e-4,
            mode: OptimizerMode::Adam,
            train_loss: 0.0123,
            val_psnr: f64::NAN,
        };
        let parsed = EpochLog::parse_row(&row.csv_row()).unwrap();
        assert_eq!(parsed.epoch, 7);
        assert_eq!(parsed.channel, Channel::RegComm);
        assert_eq!(parsed.lr, 1.9e-4);
        assert!(parsed.val_psnr.is_nan());
        assert!(render_log(&[row]).starts_with(EpochLog::HEADER));
    }
}
