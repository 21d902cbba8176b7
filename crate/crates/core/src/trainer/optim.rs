use crate::error::{Result, SneError};
use crate::estimator::SneParams;
use crate::numerics::{NamedTensors, Parameters, Tensor2};
use crate::trainer::schedule::{learning_rate, OptimizerMode, TrainSchedule};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments plus the bookkeeping of the Adam→SGD switch.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub mode: OptimizerMode,
    pub first: NamedTensors,
    pub second: NamedTensors,
    /// Adam steps taken; drives bias correction.
    pub adam_steps: u64,
    pub lr: f64,
    pub transitions: u32,
}

impl OptimizerState {
    pub fn new(params: &SneParams) -> Self {
        let zeros = |p: &SneParams| -> NamedTensors {
            p.tensors().iter().map(|(n, t)| (n.clone(), Tensor2::zeros(t.rows(), t.cols()))).collect()
        };
        OptimizerState {
            mode: OptimizerMode::Adam,
            first: zeros(params),
            second: zeros(params),
            adam_steps: 0,
            lr: 0.0,
            transitions: 0,
        }
    }
}

pub fn clip_elementwise(g: &Tensor2, clip: f64) -> Tensor2 {
    g.map(|v| v.clamp(-clip, clip))
}

/// One parameter update: hard elementwise clipping, then Adam or SGD depending
/// on the epoch.
pub fn step(
    params: &mut SneParams,
    grads: &NamedTensors,
    opt: &mut OptimizerState,
    epoch: usize,
    schedule: &TrainSchedule,
) -> Result<()> {
    let (mode, lr) = learning_rate(epoch, schedule);
    if mode != opt.mode {
        if opt.mode == OptimizerMode::Sgd {
            return Err(SneError::Parameter("optimizer cannot return from SGD to Adam".into()));
        }
        opt.mode = mode;
        opt.transitions += 1;
    }
    opt.lr = lr;
    for (name, g) in grads {
        let p = params
            .named()
            .get(name)
            .ok_or_else(|| SneError::Parameter(format!("gradient for unknown tensor '{name}'")))?;
        if p.shape() != g.shape() {
            return Err(SneError::shape("step", p.shape(), g.shape()));
        }
    }
    if mode == OptimizerMode::Adam {
        opt.adam_steps += 1;
    }
    let t = opt.adam_steps as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (name, g) in grads {
        let g = clip_elementwise(g, schedule.clip);
        let p = params.named_mut().get_mut(name).expect("checked above");
        match mode {
            OptimizerMode::Sgd => {
                for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                    *w -= lr * d;
                }
            }
            OptimizerMode::Adam => {
                let m = opt.first.get_mut(name).expect("moment per tensor");
                let v = opt.second.get_mut(name).expect("moment per tensor");
                let it = p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data());
                for (((w, m), v), &d) in it {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * d;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * d * d;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ModelConfig;
    use crate::numerics::RngStream;

    fn tiny() -> SneParams {
        let cfg = ModelConfig { state_dim: 2, patch_edge: 2, ..ModelConfig::default() };
        SneParams::init(cfg, &mut RngStream::new(1), 0.05).unwrap()
    }

    fn grads_like(p: &SneParams, v: f64) -> NamedTensors {
        p.tensors().iter().map(|(n, t)| (n.clone(), Tensor2::filled(t.rows(), t.cols(), v))).collect()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_for_sgd() {
        let mut p = tiny();
        let before = p.clone();
        let schedule = TrainSchedule::default();
        let mut opt = OptimizerState::new(&p);
        let grads = grads_like(&p, 0.0);
        step(&mut p, &grads, &mut opt, 150, &schedule).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.mode, OptimizerMode::Sgd);
    }

    #[test]
    fn clipping_caps_magnitude() {
        let g = Tensor2::from_rows(&[&[100.0, -100.0, 3.0]]);
        assert_eq!(clip_elementwise(&g, 15.0).data(), &[15.0, -15.0, 3.0]);
        // An SGD step with gradient 100 moves by lr * 15.
        let mut p = tiny();
        let before = p.get("dec.c").unwrap().get(0, 0);
        let schedule = TrainSchedule::default();
        let mut opt = OptimizerState::new(&p);
        let grads = grads_like(&p, 100.0);
        step(&mut p, &grads, &mut opt, 130, &schedule).unwrap();
        let after = p.get("dec.c").unwrap().get(0, 0);
        assert!((before - after - 2e-5 * 15.0).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_matches_hand_recurrence() {
        let mut p = tiny();
        let w0 = p.get("dec.c").unwrap().get(0, 0);
        let schedule = TrainSchedule::default();
        let mut opt = OptimizerState::new(&p);
        let g = 0.3;
        let grads = grads_like(&p, g);
        step(&mut p, &grads, &mut opt, 0, &schedule).unwrap();
        // m = 0.1 g, v = 0.001 g²; bias corrected m̂ = g, v̂ = g².
        let m = (1.0 - ADAM_BETA1) * g;
        let v = (1.0 - ADAM_BETA2) * g * g;
        let expected = w0 - 2e-4 * (m / (1.0 - ADAM_BETA1)) / ((v / (1.0 - ADAM_BETA2)).sqrt() + ADAM_EPS);
        assert!((p.get("dec.c").unwrap().get(0, 0) - expected).abs() < 1e-15);
        assert!((w0 - expected - 2e-4).abs() < 1e-10);
        assert_eq!(opt.adam_steps, 1);
    }

    #[test]
    fn mismatched_gradient_shape_is_rejected() {
        let mut p = tiny();
        let mut g = grads_like(&p, 0.0);
        g.insert("dec.c".into(), Tensor2::zeros(3, 3));
        let mut opt = OptimizerState::new(&p);
        assert!(matches!(step(&mut p, &g, &mut opt, 0, &TrainSchedule::default()), Err(SneError::Shape { .. })));
    }

    #[test]
    fn mode_transitions_exactly_once() {
        let mut p = tiny();
        let schedule = TrainSchedule { total_epochs: 10, switch_epoch: 4, ..TrainSchedule::default() };
        let mut opt = OptimizerState::new(&p);
        for epoch in 0..10 {
            let grads = grads_like(&p, 0.01);
            step(&mut p, &grads, &mut opt, epoch, &schedule).unwrap();
        }
        assert_eq!(opt.transitions, 1);
        assert_eq!(opt.adam_steps, 4);
    }
}
