//! Monte-Carlo block error rate (BLER) estimation.

use alloc::vec::Vec;

use crate::channel::{draw_noise, snr_db_to_sigma};
use crate::model::{decode, Autoencoder, ModelConfig};
use crate::rng::{derive_seed, stream_rng};
use crate::training::sample_batch;
use crate::{Error, Result};

/// Error counts at one SNR. BLER is `errors / n_samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlerPoint {
    pub snr_db: f64,
    pub n_samples: u64,
    pub intech_errors: Option<u64>,
    pub ctc_errors: Vec<u64>,
}

impl BlerPoint {
    pub fn bler_intech(&self) -> Option<f64> {
        self.intech_errors.map(|e| self.rate(e))
    }

    pub fn bler_ctc(&self) -> Vec<f64> {
        self.ctc_errors.iter().map(|&e| self.rate(e)).collect()
    }

    /// Worst receiver, the broadcast figure of merit.
    pub fn max_bler_ctc(&self) -> Option<f64> {
        self.ctc_errors.iter().max().map(|&e| self.rate(e))
    }

    fn rate(&self, errors: u64) -> f64 {
        errors as f64 / self.n_samples as f64
    }

    /// One-sided 95% upper bound on a BLER for which no errors were seen
    /// (rule of three).
    pub fn zero_error_upper_bound(&self) -> f64 {
        3.0 / self.n_samples as f64
    }
}

/// BLER points sorted by strictly increasing SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct BlerCurve {
    pub config: ModelConfig,
    points: Vec<BlerPoint>,
}

impl BlerCurve {
    pub fn new(config: ModelConfig, points: Vec<BlerPoint>) -> Result<Self> {
        if points
            .windows(2)
            .any(|w| w[0].snr_db.partial_cmp(&w[1].snr_db) != Some(core::cmp::Ordering::Less))
        {
            return Err(Error::config(
                "snr_db",
                "curve points must be strictly increasing",
            ));
        }
        Ok(Self { config, points })
    }

    pub fn points(&self) -> &[BlerPoint] {
        &self.points
    }

    pub fn receivers(&self) -> usize {
        self.config.ctc_rx_grids.len()
    }

    pub fn intech(&self) -> Option<Vec<(f64, f64)>> {
        self.points
            .iter()
            .map(|p| p.bler_intech().map(|b| (p.snr_db, b)))
            .collect()
    }

    pub fn ctc(&self, receiver: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.snr_db, p.bler_ctc()[receiver]))
            .collect()
    }
}

/// Draws `n_samples` uniform message pairs, sends each through AWGN at
/// `snr_db` and counts decoding errors per receiver.
pub fn estimate_bler(
    model: &Autoencoder,
    snr_db: f64,
    n_samples: u64,
    seed: u64,
) -> Result<BlerPoint> {
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    let config = model.config();
    let m = if config.intech_enabled {
        config.intech_alphabet
    } else {
        1
    };
    let uses = config.tx_grid.channel_uses();
    let sigma = snr_db_to_sigma(snr_db);
    let mut message_rng = stream_rng(seed, 0);
    let mut noise_rng = stream_rng(seed, 1);
    let mut intech_errors = config.intech_enabled.then_some(0u64);
    let mut ctc_errors = alloc::vec![0u64; config.ctc_rx_grids.len()];
    let mut noise = Vec::with_capacity(uses);
    for _ in 0..n_samples {
        let pair = sample_batch(m, config.ctc_alphabet, 1, &mut message_rng)[0];
        noise.clear();
        draw_noise(uses, sigma, &mut noise_rng, &mut noise)?;
        let out = model.forward_with_noise(pair, &noise)?;
        if let (Some(errors), Some(p)) = (intech_errors.as_mut(), out.intech.as_ref()) {
            *errors += u64::from(decode(p)? != pair.intech);
        }
        for (errors, p) in ctc_errors.iter_mut().zip(&out.ctc) {
            *errors += u64::from(decode(p)? != pair.ctc);
        }
    }
    Ok(BlerPoint {
        snr_db,
        n_samples,
        intech_errors,
        ctc_errors,
    })
}

/// `start, start + step, ...` up to and including `stop` (with a small
/// tolerance for accumulated rounding).
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(Error::config("snr", "bounds and step must be finite"));
    }
    if step <= 0.0 {
        return Err(Error::config("snr_step", "must be positive"));
    }
    if start > stop {
        return Err(Error::config("snr_start", "must not exceed snr_stop"));
    }
    let count = libm::floor((stop - start) / step + 1e-9) as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Seed for the `index`-th point of a sweep.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// One independent BLER estimate per grid value.
pub fn sweep(
    model: &Autoencoder,
    snr_start: f64,
    snr_stop: f64,
    snr_step: f64,
    n_samples: u64,
    seed: u64,
) -> Result<BlerCurve> {
    let points = snr_grid(snr_start, snr_stop, snr_step)?
        .into_iter()
        .enumerate()
        .map(|(i, snr)| estimate_bler(model, snr, n_samples, point_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    BlerCurve::new(model.config().clone(), points)
}

/// Pointwise maximum over CTC receivers.
pub fn broadcast_max_bler(curve: &BlerCurve) -> Result<Vec<(f64, f64)>> {
    if curve.receivers() == 0 {
        return Err(Error::Empty("CTC receiver list"));
    }
    curve
        .points()
        .iter()
        .map(|p| {
            p.max_bler_ctc()
                .map(|b| (p.snr_db, b))
                .ok_or(Error::Empty("CTC receiver list"))
        })
        .collect()
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Block error rate of `k_bits` independent uncoded BPSK uses at unit
/// power: `1 − (1 − Q(sqrt(2·SNR)))^k`.
pub fn bpsk_reference_bler(snr_db: f64, k_bits: u32) -> f64 {
    let snr = libm::pow(10.0, snr_db / 10.0);
    let p = q_function(libm::sqrt(2.0 * snr));
    // -expm1(k·log1p(-p)) keeps precision when p is tiny.
    -libm::expm1(f64::from(k_bits) * libm::log1p(-p))
}

/// Wilson score interval for `errors` out of `n` at normal quantile `z`.
pub fn wilson_interval(errors: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided normal quantile for 99% coverage.
pub const Z_99: f64 = 2.575_829_303_548_901;

/// Lowest SNR at which the curve drops to `target`, interpolating
/// `log10(BLER)` linearly between bracketing points. Zero-error points are
/// floored at half an error so the log stays finite.
pub fn snr_at_bler(points: &[(f64, f64)], target: f64, n_samples: u64) -> Option<f64> {
    let floor = 0.5 / n_samples as f64;
    let log = |b: f64| libm::log10(b.max(floor));
    let t = log(target);
    if let Some(&(snr, b)) = points.first() {
        if b <= target {
            return Some(snr);
        }
    }
    points.windows(2).find_map(|w| {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 > target && b1 <= target {
            let (l0, l1) = (log(b0), log(b1));
            Some(s0 + (s1 - s0) * (l0 - t) / (l0 - l1))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otfg::OtfgSpec;
    use alloc::vec;

    fn g(t: usize, f: usize) -> OtfgSpec {
        OtfgSpec::new(t, f).unwrap()
    }

    fn point(snr: f64, ctc: Vec<u64>) -> BlerPoint {
        BlerPoint {
            snr_db: snr,
            n_samples: 10,
            intech_errors: None,
            ctc_errors: ctc,
        }
    }

    fn curve(points: Vec<BlerPoint>, receivers: usize) -> BlerCurve {
        let grids = vec![g(4, 4); receivers];
        BlerCurve::new(ModelConfig::broadcast(4, g(4, 4), grids), points).unwrap()
    }

    #[test]
    fn max_bler_examples() {
        let one = curve(vec![point(0.0, vec![2]), point(1.0, vec![1])], 1);
        assert_eq!(broadcast_max_bler(&one).unwrap(), [(0.0, 0.2), (1.0, 0.1)]);
        let two = curve(vec![point(0.0, vec![1, 3])], 2);
        assert_eq!(broadcast_max_bler(&two).unwrap(), [(0.0, 0.3)]);
        let equal = curve(vec![point(0.0, vec![4, 4])], 2);
        assert_eq!(
            broadcast_max_bler(&equal).unwrap()[0].1,
            equal.points()[0].bler_ctc()[0]
        );
        let none = curve(vec![point(0.0, vec![])], 0);
        assert!(broadcast_max_bler(&none).is_err());
    }

    #[test]
    fn curve_requires_increasing_snr() {
        let cfg = ModelConfig::broadcast(4, g(4, 4), vec![g(4, 4)]);
        assert!(
            BlerCurve::new(cfg.clone(), vec![point(1.0, vec![0]), point(1.0, vec![0])]).is_err()
        );
        assert!(BlerCurve::new(cfg, vec![point(1.0, vec![0]), point(0.0, vec![0])]).is_err());
    }

    #[test]
    fn grid_arithmetic() {
        let grid = snr_grid(-2.0, 8.0, 1.0).unwrap();
        assert_eq!(grid.len(), 11);
        assert_eq!((grid[0], grid[10]), (-2.0, 8.0));
        assert_eq!(snr_grid(0.0, 1.0, 0.1).unwrap().len(), 11);
        assert_eq!(snr_grid(3.0, 3.0, 1.0).unwrap(), [3.0]);
        assert!(snr_grid(1.0, 0.0, 1.0).is_err());
        assert!(snr_grid(0.0, 1.0, 0.0).is_err());
    }

    // Independent oracle: Q(x) by composite Simpson integration of the
    // standard normal density over [x, x + 40].
    fn q_quadrature(x: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (x, x + 40.0);
        let h = (b - a) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * core::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn q_function_matches_quadrature() {
        for x in [0.0, 0.044_721_359_549_995_8, 0.5, 1.0, 2.0, 3.5] {
            let q = q_function(x);
            assert!((q - q_quadrature(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn bpsk_reference_examples() {
        // -30 dB: Q(sqrt(2e-3)) from the quadrature oracle.
        let expected = q_quadrature(libm::sqrt(2e-3));
        assert!((expected - 0.482_164).abs() < 1e-6);
        assert!((bpsk_reference_bler(-30.0, 1) - expected).abs() < 1e-12);
        // k = 1 is the raw bit error probability.
        let snr_db = 4.0;
        let p = q_function(libm::sqrt(2.0 * libm::pow(10.0, 0.4)));
        assert!((bpsk_reference_bler(snr_db, 1) - p).abs() < 1e-15);
        assert!(bpsk_reference_bler(20.0, 6) < 1e-20);
    }

    #[test]
    fn bpsk_reference_is_monotone() {
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let b = bpsk_reference_bler(-10.0 + i as f64 * 0.25, 4);
            assert!(b < prev);
            prev = b;
        }
        for snr in [-5.0, 0.0, 5.0, 10.0] {
            assert!((1..8).all(|k| bpsk_reference_bler(snr, k) < bpsk_reference_bler(snr, k + 1)));
        }
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(50, 1000, Z_99);
        assert!(lo < 0.05 && 0.05 < hi);
        let (lo0, hi0) = wilson_interval(0, 1000, Z_99);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.01);
    }

    #[test]
    fn interpolated_crossing() {
        let pts = [(0.0, 1e-1), (1.0, 1e-3), (2.0, 1e-4)];
        assert!((snr_at_bler(&pts, 1e-2, 100_000).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(snr_at_bler(&pts, 0.5, 100_000), Some(0.0));
        assert_eq!(snr_at_bler(&pts, 1e-6, 100_000), None);
    }

    #[test]
    fn single_sample_bler_is_binary() {
        let model = Autoencoder::build(
            ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.5),
            &mut stream_rng(1, 0),
        )
        .unwrap();
        let p = estimate_bler(&model, 0.0, 1, 5).unwrap();
        assert!(p
            .bler_ctc()
            .iter()
            .chain(p.bler_intech().iter())
            .all(|&b| b == 0.0 || b == 1.0));
        assert!(estimate_bler(&model, 0.0, 0, 5).is_err());
    }

    #[test]
    fn single_point_sweep_equals_estimate() {
        let model = Autoencoder::build(
            ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.5),
            &mut stream_rng(1, 0),
        )
        .unwrap();
        let c = sweep(&model, 2.0, 2.0, 1.0, 500, 42).unwrap();
        assert_eq!(
            c.points(),
            [estimate_bler(&model, 2.0, 500, point_seed(42, 0)).unwrap()]
        );
        let full = sweep(&model, -1.0, 1.0, 0.5, 50, 42).unwrap();
        assert_eq!(full.points().len(), 5);
    }
}
