use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::ensure_finite;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weights,
    Bias,
}

/// Names one parameter tensor for diagnostics, e.g. `rx_ctc[1].layer0.bias`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId {
    pub network: &'static str,
    pub receiver: Option<usize>,
    pub layer: usize,
    pub kind: ParamKind,
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.network)?;
        if let Some(r) = self.receiver {
            write!(f, "[{r}]")?;
        }
        let kind = match self.kind {
            ParamKind::Weights => "weights",
            ParamKind::Bias => "bias",
        };
        write!(f, ".layer{}.{kind}", self.layer)
    }
}

/// One parameter tensor paired with its gradient.
pub struct ParamSlot<'a> {
    pub id: ParamId,
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
}

pub trait Optimizer {
    fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()>;
}

fn check_slots(slots: &[ParamSlot<'_>], lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config(
            "lr",
            format!("must be positive and finite, got {lr}"),
        ));
    }
    for slot in slots {
        if slot.values.len() != slot.grad.len() {
            return Err(Error::ShapeMismatch {
                context: "gradient for parameter tensor",
                expected: slot.values.len(),
                actual: slot.grad.len(),
            });
        }
        ensure_finite(slot.grad, &format!("gradient of {}", slot.id))?;
    }
    Ok(())
}

/// `θ ← θ − lr·g`. Nothing is modified if any gradient is non-finite.
pub fn sgd_step(slots: &mut [ParamSlot<'_>], lr: f64) -> Result<()> {
    check_slots(slots, lr)?;
    for slot in slots.iter_mut() {
        for (p, g) in slot.values.iter_mut().zip(slot.grad) {
            *p -= lr * g;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        sgd_step(slots, self.lr)
    }
}

/// First and second moment estimates, one vector per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// One bias-corrected Adam update. A fresh (default) state is sized on the
/// first call.
pub fn adam_step(
    slots: &mut [ParamSlot<'_>],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    check_slots(slots, lr)?;
    if state.step == 0 && state.first.is_empty() {
        state.first = slots.iter().map(|s| vec![0.0; s.values.len()]).collect();
        state.second = state.first.clone();
    }
    let congruent = state.first.len() == slots.len()
        && slots
            .iter()
            .zip(&state.first)
            .all(|(s, m)| s.values.len() == m.len());
    if !congruent {
        return Err(Error::ShapeMismatch {
            context: "adam state tensors",
            expected: state.first.len(),
            actual: slots.len(),
        });
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(beta1, t);
    let c2 = 1.0 - libm::pow(beta2, t);
    for (slot, (m, v)) in slots
        .iter_mut()
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (((p, &g), mi), vi) in slot.values.iter_mut().zip(slot.grad).zip(m).zip(v) {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: AdamState,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: AdamState::default(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        adam_step(
            slots,
            &mut self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ID: ParamId = ParamId {
        network: "net",
        receiver: None,
        layer: 0,
        kind: ParamKind::Weights,
    };

    fn step_sgd(theta: &mut [f64], g: &[f64], lr: f64) -> Result<()> {
        sgd_step(
            &mut [ParamSlot {
                id: ID,
                values: theta,
                grad: g,
            }],
            lr,
        )
    }

    #[test]
    fn sgd_examples() {
        let mut t = [1.0];
        step_sgd(&mut t, &[2.0], 0.1).unwrap();
        assert!((t[0] - 0.8).abs() < 1e-15);

        let mut t = [0.3, -0.7];
        step_sgd(&mut t, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(t, [0.3, -0.7]);

        let (mut twice, mut once) = ([0.5], [0.5]);
        step_sgd(&mut twice, &[0.25], 0.1).unwrap();
        step_sgd(&mut twice, &[0.25], 0.1).unwrap();
        step_sgd(&mut once, &[0.25], 0.2).unwrap();
        assert!((twice[0] - once[0]).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_bad_gradients_without_touching_params() {
        let mut t = [1.0, 2.0];
        let err = step_sgd(&mut t, &[0.1, f64::NAN], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref s) if s.contains("net.layer0.weights")));
        assert_eq!(t, [1.0, 2.0]);
        assert!(matches!(
            step_sgd(&mut t, &[0.1], 0.1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut t = [0.0];
        let mut opt = Adam::new(1e-3);
        opt.step(&mut [ParamSlot {
            id: ID,
            values: &mut t,
            grad: &[1.0],
        }])
        .unwrap();
        assert!((t[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut t = [0.4];
        let mut opt = Adam::new(1e-2);
        for _ in 0..5 {
            opt.step(&mut [ParamSlot {
                id: ID,
                values: &mut t,
                grad: &[0.0],
            }])
            .unwrap();
        }
        assert_eq!(t, [0.4]);
    }

    #[test]
    fn adam_matches_hand_stepped_trace() {
        // Two steps, g = 0.5 then -0.2, lr 0.01, default betas.
        // Step 1: m = 0.05, v = 0.00025, m̂ = 0.5, v̂ = 0.25, Δ = -0.01·0.5/(0.5+1e-8)
        // Step 2: m = 0.045 - 0.02 = 0.025, v = 0.00024975 + 0.00004 = 0.00028975,
        //         m̂ = 0.025/0.19, v̂ = 0.00028975/0.001999
        let m2_hat = 0.025 / (1.0 - 0.81);
        let v2_hat: f64 = 0.000_289_75 / (1.0 - 0.998_001);
        let expected = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8) - 0.01 * m2_hat / (v2_hat.sqrt() + 1e-8);

        let mut t = [1.0];
        let mut opt = Adam::new(0.01);
        for g in [0.5, -0.2] {
            opt.step(&mut [ParamSlot {
                id: ID,
                values: &mut t,
                grad: &[g],
            }])
            .unwrap();
        }
        assert!((t[0] - expected).abs() < 1e-14, "{} vs {expected}", t[0]);
        assert_eq!(opt.state.step, 2);
    }

    #[test]
    fn adam_state_must_stay_congruent() {
        let mut opt = Adam::new(0.01);
        let mut a = [0.0, 0.0];
        opt.step(&mut [ParamSlot {
            id: ID,
            values: &mut a,
            grad: &[1.0, 1.0],
        }])
        .unwrap();
        let mut b = [0.0];
        assert!(opt
            .step(&mut [ParamSlot {
                id: ID,
                values: &mut b,
                grad: &[1.0]
            }])
            .is_err());
    }

    #[test]
    fn param_id_display() {
        let id = ParamId {
            network: "rx_ctc",
            receiver: Some(1),
            layer: 0,
            kind: ParamKind::Bias,
        };
        assert_eq!(
            alloc::string::ToString::to_string(&id),
            "rx_ctc[1].layer0.bias"
        );
    }
}
