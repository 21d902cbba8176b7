//! `key = value` run configuration for training.

use std::path::{Path, PathBuf};

use crate::codec::EncodeMode;
use crate::corpus::desk_split;
use crate::error::{Result, SneError};
use crate::estimator::checkpoint::{config_from_kv, MODEL_KEYS};
use crate::estimator::ModelConfig;
use crate::eval::pnm::read_pnm;
use crate::image::ImageBuffer;
use crate::kv::KeyValues;
use crate::trainer::schedule::TrainSchedule;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Built-in synthetic desk corpus with its fixed train/held-out split.
    Desk,
    Files {
        train: Vec<PathBuf>,
        val: Vec<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
    pub quality: f64,
    pub mode: EncodeMode,
    pub seed: u64,
    /// Worker threads for the per-sample fan-out; 0 picks the rayon default.
    pub threads: usize,
    /// Refinement steps used for validation decoding; `k_plain` when unset.
    pub decode_k: Option<usize>,
    pub co_mse_weight: f64,
    pub reg_comm_uses_err_matrix: bool,
    pub init_scale: f64,
    pub data: DataSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            schedule: TrainSchedule::default(),
            quality: 1.0,
            mode: EncodeMode::Aligned,
            seed: 0,
            threads: 0,
            decode_k: None,
            co_mse_weight: 1.0,
            reg_comm_uses_err_matrix: true,
            init_scale: 0.05,
            data: DataSource::Desk,
        }
    }
}

const RUN_KEYS: [&str; 24] = [
    "total_epochs",
    "switch_epoch",
    "reg_period",
    "k_reg",
    "k_plain",
    "alpha",
    "mu",
    "sigma2_0",
    "lr0",
    "lr_sgd",
    "clip",
    "batch",
    "quality",
    "mode",
    "seed",
    "threads",
    "decode_k",
    "co_mse_weight",
    "reg_comm_uses_err_matrix",
    "init_scale",
    "corpus",
    "train_images",
    "val_images",
    "comment",
];

fn split_paths(s: Option<&str>, base: &Path) -> Vec<PathBuf> {
    s.map(|s| s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(|p| base.join(p)).collect()).unwrap_or_default()
}

impl RunConfig {
    /// Parses config text; relative image paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let known: Vec<&str> = RUN_KEYS.iter().chain(MODEL_KEYS.iter()).copied().collect();
        kv.reject_unknown(&known)?;
        let d = RunConfig::default();
        let ds = &d.schedule;
        let schedule = TrainSchedule {
            total_epochs: kv.get_or("total_epochs", ds.total_epochs)?,
            switch_epoch: kv.get_or("switch_epoch", ds.switch_epoch)?,
            reg_period: kv.get_or("reg_period", ds.reg_period)?,
            k_reg: kv.get_or("k_reg", ds.k_reg)?,
            k_plain: kv.get_or("k_plain", ds.k_plain)?,
            alpha: kv.get_or("alpha", ds.alpha)?,
            mu: kv.get_or("mu", ds.mu)?,
            sigma2_0: kv.get_or("sigma2_0", ds.sigma2_0)?,
            lr0: kv.get_or("lr0", ds.lr0)?,
            lr_sgd: kv.get("lr_sgd")?,
            clip: kv.get_or("clip", ds.clip)?,
            batch: kv.get_or("batch", ds.batch)?,
        };
        let data = match kv.get_str("corpus") {
            Some("desk") => {
                if kv.get_str("train_images").is_some() {
                    return Err(SneError::Config("set either corpus or train_images, not both".into()));
                }
                DataSource::Desk
            }
            Some(other) => return Err(SneError::Config(format!("unknown corpus '{other}'"))),
            None => {
                let train = split_paths(kv.get_str("train_images"), base);
                if train.is_empty() {
                    return Err(SneError::Config("no training images: set corpus = desk or train_images".into()));
                }
                DataSource::Files { train, val: split_paths(kv.get_str("val_images"), base) }
            }
        };
        let cfg = RunConfig {
            model: config_from_kv(&kv)?,
            schedule,
            quality: kv.get_or("quality", d.quality)?,
            mode: kv.get_or("mode", d.mode)?,
            seed: kv.get_or("seed", d.seed)?,
            threads: kv.get_or("threads", d.threads)?,
            decode_k: kv.get("decode_k")?,
            co_mse_weight: kv.get_or("co_mse_weight", d.co_mse_weight)?,
            reg_comm_uses_err_matrix: kv.get_or("reg_comm_uses_err_matrix", d.reg_comm_uses_err_matrix)?,
            init_scale: kv.get_or("init_scale", d.init_scale)?,
            data,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        if !(self.quality > 0.0) {
            return Err(SneError::Config("quality must be positive".into()));
        }
        if self.decode_k == Some(0) {
            return Err(SneError::Config("decode_k must be at least 1".into()));
        }
        if !(self.co_mse_weight >= 0.0) || !(self.init_scale >= 0.0) {
            return Err(SneError::Config("weights and scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn decode_steps(&self) -> usize {
        self.decode_k.unwrap_or(self.schedule.k_plain)
    }

    /// Loads the training and held-out images.
    pub fn load_images(&self) -> Result<(Vec<ImageBuffer>, Vec<ImageBuffer>)> {
        match &self.data {
            DataSource::Desk => Ok(desk_split()),
            DataSource::Files { train, val } => {
                let load = |paths: &[PathBuf]| -> Result<Vec<ImageBuffer>> {
                    paths.iter().map(|p| read_pnm(&std::fs::read(p)?)).collect()
                };
                Ok((load(train)?, load(val)?))
            }
        }
    }
}
