use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SneError};

/// Which communication term links the siblings in a given epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Comm,
    /// Source state perturbed by Gaussian noise.
    RegComm,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Comm => "comm",
            Channel::RegComm => "reg_comm",
        })
    }
}

impl FromStr for Channel {
    type Err = SneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comm" => Ok(Channel::Comm),
            "reg_comm" => Ok(Channel::RegComm),
            other => Err(SneError::Config(format!("unknown channel '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerMode {
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerMode::Adam => "adam",
            OptimizerMode::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerMode {
    type Err = SneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerMode::Adam),
            "sgd" => Ok(OptimizerMode::Sgd),
            other => Err(SneError::Config(format!("unknown optimizer mode '{other}'"))),
        }
    }
}

/// Epoch-indexed training rules. Epochs are counted from zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub total_epochs: usize,
    /// First epoch trained with SGD; also where the state noise stops.
    pub switch_epoch: usize,
    pub reg_period: usize,
    pub k_reg: usize,
    pub k_plain: usize,
    /// Weight of the communication term.
    pub alpha: f64,
    pub mu: f64,
    pub sigma2_0: f64,
    pub lr0: f64,
    /// SGD step size after the switch; `lr0 / 10` when unset.
    pub lr_sgd: Option<f64>,
    /// Elementwise gradient magnitude limit.
    pub clip: f64,
    /// Patches per mini-batch.
    pub batch: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            total_epochs: 300,
            switch_epoch: 120,
            reg_period: 8,
            k_reg: 3,
            k_plain: 2,
            alpha: 0.1,
            mu: 0.0,
            sigma2_0: 0.01,
            lr0: 2e-4,
            lr_sgd: None,
            clip: 15.0,
            batch: 512,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SneError::Config(m.to_string()));
        if self.switch_epoch >= self.total_epochs {
            return fail("switch_epoch must be smaller than total_epochs");
        }
        if self.k_reg == 0 || self.k_plain == 0 {
            return fail("K values must be at least 1");
        }
        if self.reg_period == 0 {
            return fail("reg_period must be positive");
        }
        if !(self.clip > 0.0) {
            return fail("clip must be positive");
        }
        if !(self.sigma2_0 >= 0.0) {
            return fail("sigma2_0 must be non-negative");
        }
        if !(self.lr0 > 0.0) || self.lr_sgd.is_some_and(|lr| !(lr > 0.0)) {
            return fail("learning rates must be positive");
        }
        if !(self.alpha >= 0.0) {
            return fail("alpha must be non-negative");
        }
        if self.batch == 0 {
            return fail("batch must be positive");
        }
        Ok(())
    }

    pub fn sgd_rate(&self) -> f64 {
        self.lr_sgd.unwrap_or(self.lr0 / 10.0)
    }
}

/// Linearly decaying noise variance, zero from `switch_epoch` on.
pub fn noise_variance(epoch: usize, sigma2_0: f64, switch_epoch: usize) -> f64 {
    if epoch >= switch_epoch {
        return 0.0;
    }
    sigma2_0 * (1.0 - epoch as f64 / switch_epoch as f64).max(0.0)
}

/// Channel and refinement steps for `epoch`: every `reg_period`-th epoch
/// (1-based) before the switch uses the regularized channel with `k_reg` steps.
pub fn epoch_plan(epoch: usize, schedule: &TrainSchedule) -> (Channel, usize) {
    if (epoch + 1).is_multiple_of(schedule.reg_period) && epoch < schedule.switch_epoch {
        (Channel::RegComm, schedule.k_reg)
    } else {
        (Channel::Comm, schedule.k_plain)
    }
}

/// Optimizer and learning rate for `epoch`: Adam with square-root polynomial
/// decay before the switch, constant-rate SGD after.
pub fn learning_rate(epoch: usize, schedule: &TrainSchedule) -> (OptimizerMode, f64) {
    if epoch < schedule.switch_epoch {
        let frac = 1.0 - epoch as f64 / schedule.switch_epoch as f64;
        (OptimizerMode::Adam, schedule.lr0 * frac.sqrt())
    } else {
        (OptimizerMode::Sgd, schedule.sgd_rate())
    }
}
