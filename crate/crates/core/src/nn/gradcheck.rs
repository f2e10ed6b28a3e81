use alloc::vec::Vec;

use super::layer::Activation;
use super::loss::{cross_entropy, softmax_cross_entropy_grad};
use super::stack::{DenseStack, OutputGrad};
use crate::{Error, Result};

/// A scalar loss over a flat parameter vector, with an analytic gradient.
pub trait Objective {
    fn parameter_count(&self) -> usize;
    fn parameter(&self, index: usize) -> f64;
    fn set_parameter(&mut self, index: usize, value: f64);
    fn loss(&self) -> Result<f64>;
    /// Analytic gradient in flat parameter order.
    fn gradient(&self) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Compares analytic gradients against central differences for every
/// parameter. Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_difference_check<O: Objective + ?Sized>(
    objective: &mut O,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = objective.gradient()?;
    let n = objective.parameter_count();
    if analytic.len() != n {
        return Err(Error::ShapeMismatch {
            context: "analytic gradient",
            expected: n,
            actual: analytic.len(),
        });
    }
    let mut report = GradCheckReport {
        checked: n,
        max_rel_error: 0.0,
        worst_index: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        tolerance,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let original = objective.parameter(i);
        objective.set_parameter(i, original + step);
        let plus = objective.loss()?;
        objective.set_parameter(i, original - step);
        let minus = objective.loss()?;
        objective.set_parameter(i, original);
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StackTarget {
    /// Cross-entropy against a class index; the stack must end in softmax.
    Class(usize),
    /// Half squared error against a target vector.
    Values(Vec<f64>),
}

/// A single network evaluated on one input, as a gradient-check objective.
#[derive(Debug, Clone)]
pub struct StackObjective {
    pub stack: DenseStack,
    pub input: Vec<f64>,
    pub target: StackTarget,
}

impl Objective for StackObjective {
    fn parameter_count(&self) -> usize {
        self.stack.parameter_count()
    }

    fn parameter(&self, index: usize) -> f64 {
        self.stack.parameter(index)
    }

    fn set_parameter(&mut self, index: usize, value: f64) {
        self.stack.set_parameter(index, value);
    }

    fn loss(&self) -> Result<f64> {
        if self.stack.layers().is_empty() {
            return Ok(0.0);
        }
        let cache = self.stack.forward(&self.input)?;
        match &self.target {
            StackTarget::Class(t) => cross_entropy(cache.output(), *t),
            StackTarget::Values(t) => Ok(cache
                .output()
                .iter()
                .zip(t)
                .map(|(y, t)| 0.5 * (y - t) * (y - t))
                .sum()),
        }
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        if self.stack.layers().is_empty() {
            return Ok(Vec::new());
        }
        let cache = self.stack.forward(&self.input)?;
        let (store, _) = match &self.target {
            StackTarget::Class(t) => {
                let last = self.stack.layers().last().map(|l| l.activation());
                if last != Some(Activation::Softmax) {
                    return Err(Error::InvalidShape(
                        "class target needs a softmax output".into(),
                    ));
                }
                let g = softmax_cross_entropy_grad(cache.output(), *t)?;
                self.stack.backward(&cache, OutputGrad::Logits(&g))?
            }
            StackTarget::Values(t) => {
                let g: Vec<f64> = cache.output().iter().zip(t).map(|(y, t)| y - t).collect();
                self.stack.backward(&cache, OutputGrad::Activation(&g))?
            }
        };
        Ok(store.values().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::vec;

    #[test]
    fn linear_single_layer_check() {
        let mut rng = stream_rng(11, 0);
        let stack = DenseStack::mlp(5, 0, 0, 3, Activation::Linear, &mut rng);
        let mut obj = StackObjective {
            stack,
            input: vec![0.3, -1.0, 0.5, 2.0, -0.2],
            target: StackTarget::Values(vec![1.0, 0.0, -1.0]),
        };
        let report = finite_difference_check(&mut obj, 1e-5, 1e-7).unwrap();
        assert_eq!(report.checked, 18);
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn relu_softmax_classifier_check() {
        let mut rng = stream_rng(12, 0);
        let stack = DenseStack::mlp(4, 6, 2, 3, Activation::Softmax, &mut rng);
        let mut obj = StackObjective {
            stack,
            input: vec![0.7, -0.1, 0.4, 1.3],
            target: StackTarget::Class(2),
        };
        let report = finite_difference_check(&mut obj, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn softmax_jacobian_path_check() {
        let mut rng = stream_rng(13, 0);
        let stack = DenseStack::mlp(3, 5, 1, 4, Activation::Softmax, &mut rng);
        let mut obj = StackObjective {
            stack,
            input: vec![0.5, 0.9, -0.6],
            target: StackTarget::Values(vec![0.1, 0.2, 0.3, 0.4]),
        };
        let report = finite_difference_check(&mut obj, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn empty_model_gives_empty_report() {
        let mut obj = StackObjective {
            stack: DenseStack::new(vec![]).unwrap(),
            input: vec![],
            target: StackTarget::Values(vec![]),
        };
        let report = finite_difference_check(&mut obj, 1e-5, 1e-7).unwrap();
        assert_eq!(report.checked, 0);
        assert_eq!(report.worst_index, None);
        assert!(report.passed());
    }
}
