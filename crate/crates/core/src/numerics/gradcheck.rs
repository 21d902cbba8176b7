use std::collections::BTreeMap;

use crate::error::{Result, SneError};
use crate::numerics::tensor::Tensor2;

pub type NamedTensors = BTreeMap<String, Tensor2>;

/// A collection of named trainable tensors.
pub trait Parameters: Clone {
    fn named(&self) -> &NamedTensors;
    fn named_mut(&mut self) -> &mut NamedTensors;
}

impl Parameters for NamedTensors {
    fn named(&self) -> &NamedTensors {
        self
    }

    fn named_mut(&mut self) -> &mut NamedTensors {
        self
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub per_tensor: BTreeMap<String, f64>,
    pub coordinates: usize,
}

/// Compares analytic gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, coordinate by coordinate.
///
/// `value` must be deterministic; it is evaluated twice at `params` and a bitwise
/// mismatch is reported as [`SneError::Determinism`]. The relative error of each
/// coordinate uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<P, F, G>(mut value: F, gradient: G, params: &P, epsilon: f64) -> Result<GradCheckReport>
where
    P: Parameters,
    F: FnMut(&P) -> Result<f64>,
    G: FnOnce(&P) -> Result<NamedTensors>,
{
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(SneError::Parameter(format!("epsilon {epsilon} outside [1e-7, 1e-4]")));
    }
    let first = value(params)?;
    let second = value(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(SneError::Determinism { first, second });
    }
    let analytic = gradient(params)?;

    let mut probe = params.clone();
    let mut report =
        GradCheckReport { max_relative_error: 0.0, worst: None, per_tensor: BTreeMap::new(), coordinates: 0 };
    let names: Vec<String> = params.named().keys().cloned().collect();
    for name in names {
        let len = params.named()[&name].len();
        let shape = params.named()[&name].shape();
        let grad = analytic.get(&name).cloned().unwrap_or_else(|| Tensor2::zeros(shape.0, shape.1));
        if grad.shape() != shape {
            return Err(SneError::shape("finite_diff_check", shape, grad.shape()));
        }
        let mut worst_here: f64 = 0.0;
        for i in 0..len {
            let original = params.named()[&name].data()[i];
            set_coord(&mut probe, &name, i, original + epsilon);
            let plus = value(&probe)?;
            set_coord(&mut probe, &name, i, original - epsilon);
            let minus = value(&probe)?;
            set_coord(&mut probe, &name, i, original);

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            worst_here = worst_here.max(rel);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((name.clone(), i));
            }
            report.coordinates += 1;
        }
        report.per_tensor.insert(name, worst_here);
    }
    Ok(report)
}

fn set_coord<P: Parameters>(p: &mut P, name: &str, i: usize, v: f64) {
    if let Some(t) = p.named_mut().get_mut(name) {
        t.data_mut()[i] = v;
    }
}
