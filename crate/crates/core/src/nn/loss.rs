use alloc::vec::Vec;

use crate::tensor::ensure_finite;
use crate::{Error, Result};

/// Probabilities are clamped to this floor before taking the logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    ensure_finite(z, "softmax input")?;
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `-ln p[target]` with `p` clamped to [`PROBABILITY_FLOOR`].
pub fn cross_entropy(p: &[f64], target: usize) -> Result<f64> {
    let &pt = p.get(target).ok_or(Error::IndexOutOfRange {
        index: target,
        size: p.len(),
    })?;
    Ok(-libm::log(pt.max(PROBABILITY_FLOOR)))
}

/// Gradient of `cross_entropy(softmax(z), target)` w.r.t. the logits `z`,
/// given `p = softmax(z)`: `p - onehot(target)`.
pub fn softmax_cross_entropy_grad(p: &[f64], target: usize) -> Result<Vec<f64>> {
    if target >= p.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            size: p.len(),
        });
    }
    let mut g = p.to_vec();
    g[target] -= 1.0;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert!(close(&softmax(&[0.0, 0.0]).unwrap(), &[0.5, 0.5], 1e-15));
        let third = 1.0 / 3.0;
        assert!(close(
            &softmax(&[1000.0, 1000.0, 1000.0]).unwrap(),
            &[third, third, third],
            1e-15
        ));
        assert!(close(
            &softmax(&[0.0, libm::log(3.0)]).unwrap(),
            &[0.25, 0.75],
            1e-15
        ));
    }

    #[test]
    fn softmax_rejects_non_finite_and_empty() {
        assert!(matches!(
            softmax(&[0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(softmax(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.0);
        let uniform = [1.0 / 64.0; 64];
        assert!((cross_entropy(&uniform, 17).unwrap() - libm::log(64.0)).abs() < 1e-12);
        assert!((cross_entropy(&[0.25, 0.75], 1).unwrap() - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(Error::IndexOutOfRange { index: 2, size: 2 })
        ));
    }

    #[test]
    fn cross_entropy_is_clamped_at_zero_probability() {
        let loss = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((loss - 15.0 * core::f64::consts::LN_10).abs() < 1e-9);
    }

    #[test]
    fn joint_gradient_is_p_minus_onehot() {
        assert_eq!(
            softmax_cross_entropy_grad(&[0.25, 0.75], 1).unwrap(),
            [0.25, -0.25]
        );
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let p = softmax(&z).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn softmax_entries_are_interior_for_moderate_spread(
            base in -1e6f64..1e6,
            offsets in prop::collection::vec(-15f64..15.0, 2..40),
        ) {
            let z: Vec<f64> = offsets.iter().map(|o| base + o).collect();
            let p = softmax(&z).unwrap();
            prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn cross_entropy_is_nonnegative(
            z in prop::collection::vec(-50f64..50.0, 1..20),
            idx in 0usize..20,
        ) {
            let p = softmax(&z).unwrap();
            let t = idx % p.len();
            prop_assert!(cross_entropy(&p, t).unwrap() >= 0.0);
        }
    }
}
