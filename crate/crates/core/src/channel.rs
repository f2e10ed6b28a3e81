//! AWGN channel, SNR bookkeeping and the transmit energy constraint.
//!
//! The transmitter normalizes every block to unit average power per channel
//! use, so SNR in dB is simply `10·log10(1/σ²)`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{stream_rng, SimRng};
use crate::tensor::ensure_finite;
use crate::{Error, Result};

/// Below this squared norm a block is treated as carrying no signal.
pub const MIN_ENERGY: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        Ok(Self { snr_db, seed })
    }

    pub fn sigma(&self) -> f64 {
        snr_db_to_sigma(self.snr_db)
    }

    /// Noise generator for worker `worker_index`.
    pub fn rng(&self, worker_index: u64) -> SimRng {
        stream_rng(self.seed, worker_index)
    }
}

/// Scale factor `sqrt(n / ‖x‖²)` applied by [`normalize_energy`].
pub fn energy_scale(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("signal"));
    }
    ensure_finite(x, "transmit signal")?;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy <= MIN_ENERGY {
        return Err(Error::DegenerateEnergy(energy));
    }
    Ok(libm::sqrt(x.len() as f64 / energy))
}

/// Rescales `x` so that `‖out‖² = n`, i.e. unit average power per use.
pub fn normalize_energy(x: &[f64]) -> Result<Vec<f64>> {
    let s = energy_scale(x)?;
    Ok(x.iter().map(|v| v * s).collect())
}

/// Vector-Jacobian product of [`normalize_energy`] at `x`.
///
/// With `s = sqrt(n/‖x‖²)`, `∂out_i/∂x_j = s·(δ_ij − x_i x_j / ‖x‖²)`, so the
/// input gradient is `s·(g − x·⟨g, x⟩/‖x‖²)`.
pub fn normalize_energy_backward(x: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
    if grad_out.len() != x.len() {
        return Err(Error::ShapeMismatch {
            context: "normalization gradient",
            expected: x.len(),
            actual: grad_out.len(),
        });
    }
    let s = energy_scale(x)?;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let proj = grad_out.iter().zip(x).map(|(g, v)| g * v).sum::<f64>() / energy;
    Ok(grad_out
        .iter()
        .zip(x)
        .map(|(g, v)| s * (g - v * proj))
        .collect())
}

/// Noise standard deviation for a given SNR at unit signal power.
pub fn snr_db_to_sigma(snr_db: f64) -> f64 {
    libm::sqrt(libm::pow(10.0, -snr_db / 10.0))
}

pub fn sigma_to_snr_db(sigma: f64) -> f64 {
    -20.0 * libm::log10(sigma)
}

/// Converts the per-use SNR axis to Eb/N0 for a real-valued channel carrying
/// `rate` bits per channel use. With unit power and `σ² = N0/2`,
/// `Eb/N0 = SNR / (2·rate)`.
pub fn snr_db_to_ebn0_db(snr_db: f64, rate_bits_per_use: f64) -> f64 {
    snr_db - 10.0 * libm::log10(2.0 * rate_bits_per_use)
}

/// `log2(alphabet) / channel_uses` bits per grid use.
pub fn rate_bits_per_use(alphabet: usize, channel_uses: usize) -> f64 {
    libm::log2(alphabet as f64) / channel_uses as f64
}

/// Appends i.i.d. `N(0, σ²)` samples.
pub fn draw_noise<R: Rng + ?Sized>(
    n: usize,
    sigma: f64,
    rng: &mut R,
    out: &mut Vec<f64>,
) -> Result<()> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::NegativeSigma(sigma));
    }
    out.extend((0..n).map(|_| {
        let z: f64 = rng.sample(StandardNormal);
        sigma * z
    }));
    Ok(())
}

/// `x + n` with `n ~ N(0, σ² I)`; exactly `x` when `σ = 0`.
pub fn awgn_apply<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    ensure_finite(x, "channel input")?;
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let mut noise = Vec::with_capacity(x.len());
    draw_noise(x.len(), sigma, rng, &mut noise)?;
    Ok(x.iter().zip(noise).map(|(a, n)| a + n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_energy(&[1.0; 4]).unwrap(), [1.0; 4]);
        let out = normalize_energy(&[3.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15 && out[1..].iter().all(|&v| v == 0.0));
        assert!(matches!(
            normalize_energy(&[0.0, 0.0]),
            Err(Error::DegenerateEnergy(_))
        ));
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let x = [0.3, -1.2, 0.8, 2.1, -0.4];
        let w = [0.5, 0.1, -0.9, 0.3, 1.1];
        let loss = |x: &[f64]| -> f64 {
            normalize_energy(x)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum()
        };
        let analytic = normalize_energy_backward(&x, &w).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x, x);
            xp[i] += h;
            xm[i] -= h;
            let numeric = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((analytic[i] - numeric).abs() < 1e-8, "{i}");
        }
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(snr_db_to_sigma(0.0), 1.0);
        let s10 = snr_db_to_sigma(10.0);
        assert!((s10 * s10 - 0.1).abs() < 1e-15);
        assert!((s10 - 0.316_227_766_016_837_94).abs() < 1e-15);
        let s3 = snr_db_to_sigma(3.0);
        assert!((s3 * s3 - 0.501_187_233_627_272_3).abs() < 1e-15);
    }

    #[test]
    fn ebn0_helper() {
        // 6 bits over 16 uses: rate 3/8, Eb/N0 = SNR / 0.75.
        let r = rate_bits_per_use(64, 16);
        assert!((r - 0.375).abs() < 1e-15);
        let expected = 3.0 - 10.0 * libm::log10(0.75);
        assert!((snr_db_to_ebn0_db(3.0, r) - expected).abs() < 1e-12);
    }

    #[test]
    fn awgn_identity_and_errors() {
        let mut rng = stream_rng(1, 0);
        let x = [0.5, -2.0, 3.25];
        assert_eq!(awgn_apply(&x, 0.0, &mut rng).unwrap(), x);
        assert!(matches!(
            awgn_apply(&x, -0.1, &mut rng),
            Err(Error::NegativeSigma(_))
        ));
    }

    #[test]
    fn awgn_moments_at_unit_sigma() {
        let n = 1_000_000;
        let cfg = ChannelConfig::new(0.0, 2024).unwrap();
        let mut rng = cfg.rng(0);
        let y = awgn_apply(&vec![0.0; n], cfg.sigma(), &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        // 3σ bounds: sd(mean) = 1e-3, sd(var) = sqrt(2/n) ≈ 1.41e-3.
        assert!(mean.abs() <= 0.005, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.01, "var {var}");
    }

    #[test]
    fn awgn_is_seed_deterministic() {
        let x = vec![0.0; 64];
        let a = awgn_apply(&x, 1.0, &mut stream_rng(9, 2)).unwrap();
        let b = awgn_apply(&x, 1.0, &mut stream_rng(9, 2)).unwrap();
        let c = awgn_apply(&x, 1.0, &mut stream_rng(10, 2)).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn normalized_energy_is_n(x in prop::collection::vec(-100.0f64..100.0, 1..64)) {
            prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let out = normalize_energy(&x).unwrap();
            let e: f64 = out.iter().map(|v| v * v).sum();
            prop_assert!((e - x.len() as f64).abs() <= 1e-9 * x.len() as f64);
        }

        #[test]
        fn normalization_is_scale_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 1..32),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = normalize_energy(&x).unwrap();
            let b = normalize_energy(&scaled).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-12));
        }

        #[test]
        fn snr_sigma_round_trip(db in -40.0f64..40.0) {
            prop_assert!((sigma_to_snr_db(snr_db_to_sigma(db)) - db).abs() <= 1e-12);
        }
    }
}
