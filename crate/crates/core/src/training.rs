//! Dataset sampling and the end-to-end training loop.

use alloc::format;
use alloc::vec::Vec;
use core::convert::Infallible;

use rand::Rng;

use crate::channel::snr_db_to_sigma;
use crate::model::{Autoencoder, MessagePair, ModelConfig};
use crate::nn::{Adam, Optimizer, Sgd};
use crate::rng::{stream_rng, STREAM_INIT, STREAM_MESSAGES, STREAM_NOISE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "adam" => Some(OptimizerKind::Adam),
            "sgd" => Some(OptimizerKind::Sgd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub total_samples: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Fixed channel SNR used throughout training.
    pub train_snr_db: f64,
    pub seed: u64,
    /// Steps between checkpoints handed to the observer; 0 disables.
    pub checkpoint_every: usize,
    /// Steps per aggregated log entry.
    pub log_every: usize,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            total_samples: 1_000_000,
            batch_size: 256,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            train_snr_db: 3.0,
            seed: 0,
            checkpoint_every: 500,
            log_every: 100,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.total_samples == 0 {
            return Err(Error::config("total_samples", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > self.total_samples {
            return Err(Error::config(
                "batch_size",
                format!(
                    "must be in 1..={}, got {}",
                    self.total_samples, self.batch_size
                ),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive and finite"));
        }
        // +inf is accepted and means a noiseless channel.
        if self.train_snr_db.is_nan() || self.train_snr_db == f64::NEG_INFINITY {
            return Err(Error::config("train_snr_db", "must be a number or +inf"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be positive"));
        }
        Ok(())
    }

    /// Number of optimizer steps, `total_samples / batch_size`.
    pub fn steps(&self) -> usize {
        self.total_samples / self.batch_size
    }
}

/// `n` i.i.d. uniform message pairs over `{0..m} × {0..c}`.
pub fn sample_batch<R: Rng + ?Sized>(
    m: usize,
    c: usize,
    n: usize,
    rng: &mut R,
) -> Vec<MessagePair> {
    (0..n)
        .map(|_| MessagePair::new(rng.random_range(0..m.max(1)), rng.random_range(0..c.max(1))))
        .collect()
}

/// Mean losses over the log interval ending at `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub intech: Option<f64>,
    pub ctc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    pub entries: Vec<LogEntry>,
    /// Total loss at every step.
    pub step_losses: Vec<f64>,
    pub checksum: [u8; 32],
    /// Filled in by callers that have a clock.
    pub wall_clock_secs: Option<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.step_losses.last().copied()
    }
}

/// Hooks for logging and checkpointing during [`train_with`].
pub trait TrainObserver {
    type Error;

    fn on_log(&mut self, _entry: &LogEntry) -> core::result::Result<(), Self::Error> {
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        _step: usize,
        _model: &Autoencoder,
    ) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

impl TrainObserver for () {
    type Error = Infallible;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError<E> {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("training observer failed")]
    Observer(E),
}

pub fn train(config: ModelConfig, plan: &TrainPlan) -> Result<(Autoencoder, TrainReport)> {
    train_with(config, plan, &mut ()).map_err(|e| match e {
        TrainError::Model(e) => e,
        TrainError::Observer(never) => match never {},
    })
}

/// Runs `plan.steps()` optimizer steps at fixed noise. Deterministic in
/// `(config, plan)`.
pub fn train_with<O: TrainObserver + ?Sized>(
    config: ModelConfig,
    plan: &TrainPlan,
    observer: &mut O,
) -> core::result::Result<(Autoencoder, TrainReport), TrainError<O::Error>> {
    plan.validate()?;
    let mut model = Autoencoder::build(config, &mut stream_rng(plan.seed, STREAM_INIT))?;
    let mut message_rng = stream_rng(plan.seed, STREAM_MESSAGES);
    let mut noise_rng = stream_rng(plan.seed, STREAM_NOISE);
    let sigma = snr_db_to_sigma(plan.train_snr_db);
    let mut optimizer: alloc::boxed::Box<dyn Optimizer> = match plan.optimizer {
        OptimizerKind::Adam => alloc::boxed::Box::new(Adam::new(plan.lr)),
        OptimizerKind::Sgd => alloc::boxed::Box::new(Sgd { lr: plan.lr }),
    };
    let m = if model.config().intech_enabled {
        model.config().intech_alphabet
    } else {
        1
    };
    let c = model.config().ctc_alphabet;
    let receivers = model.config().ctc_rx_grids.len();

    let steps = plan.steps();
    let mut step_losses = Vec::with_capacity(steps);
    let mut entries = Vec::new();
    let mut acc = LogAccumulator::new(receivers);

    for step in 1..=steps {
        let batch = sample_batch(m, c, plan.batch_size, &mut message_rng);
        let diverged = |e: Error| {
            TrainError::Model(Error::Diverged {
                step,
                detail: format!("{e}"),
            })
        };
        let out = model
            .joint_loss(&batch, sigma, &mut noise_rng)
            .map_err(diverged)?;
        model
            .apply_gradients(&out.gradients, optimizer.as_mut())
            .map_err(diverged)?;
        step_losses.push(out.loss);
        acc.add(out.loss, out.intech, &out.ctc);
        if step % plan.log_every == 0 || step == steps {
            let entry = acc.finish(step);
            observer.on_log(&entry).map_err(TrainError::Observer)?;
            entries.push(entry);
        }
        if plan.checkpoint_every > 0 && step % plan.checkpoint_every == 0 {
            observer
                .on_checkpoint(step, &model)
                .map_err(TrainError::Observer)?;
        }
    }

    let report = TrainReport {
        steps,
        entries,
        step_losses,
        checksum: model.parameter_checksum(),
        wall_clock_secs: None,
    };
    Ok((model, report))
}

struct LogAccumulator {
    count: usize,
    loss: f64,
    intech: Option<f64>,
    ctc: Vec<f64>,
}

impl LogAccumulator {
    fn new(receivers: usize) -> Self {
        Self {
            count: 0,
            loss: 0.0,
            intech: None,
            ctc: alloc::vec![0.0; receivers],
        }
    }

    fn add(&mut self, loss: f64, intech: Option<f64>, ctc: &[f64]) {
        self.count += 1;
        self.loss += loss;
        if let Some(l) = intech {
            *self.intech.get_or_insert(0.0) += l;
        }
        for (a, l) in self.ctc.iter_mut().zip(ctc) {
            *a += l;
        }
    }

    fn finish(&mut self, step: usize) -> LogEntry {
        let n = self.count.max(1) as f64;
        let entry = LogEntry {
            step,
            loss: self.loss / n,
            intech: self.intech.map(|l| l / n),
            ctc: self.ctc.iter().map(|l| l / n).collect(),
        };
        *self = Self::new(self.ctc.len());
        entry
    }
}

/// Exponential moving average with smoothing `2 / (window + 1)`.
pub fn ema(values: &[f64], window: usize) -> Vec<f64> {
    let k = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut state = None;
    for &v in values {
        let s = match state {
            None => v,
            Some(prev) => prev + k * (v - prev),
        };
        state = Some(s);
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otfg::OtfgSpec;
    use alloc::vec;

    fn g(t: usize, f: usize) -> OtfgSpec {
        OtfgSpec::new(t, f).unwrap()
    }

    #[test]
    fn degenerate_alphabets_sample_zero() {
        let b = sample_batch(1, 1, 50, &mut stream_rng(1, 0));
        assert!(b.iter().all(|p| *p == MessagePair::new(0, 0)));
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_batch(64, 4, 100, &mut stream_rng(3, 1));
        let b = sample_batch(64, 4, 100, &mut stream_rng(3, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_frequencies_within_binomial_bounds() {
        let n = 1_000_000;
        let batch = sample_batch(64, 4, n, &mut stream_rng(77, 1));
        let mut counts = vec![0usize; 256];
        for p in &batch {
            counts[p.intech * 4 + p.ctc] += 1;
        }
        let p = 1.0 / 256.0;
        let bound = 3.0 * libm::sqrt(p * (1.0 - p) / n as f64);
        let worst = counts
            .iter()
            .map(|&k| (k as f64 / n as f64 - p).abs())
            .fold(0.0, f64::max);
        // 256 cells at 3σ each: allow the rare 3σ excursion by checking 4σ
        // on the maximum and 3σ on 99% of cells.
        assert!(worst <= 4.0 * bound / 3.0, "worst deviation {worst}");
        let within = counts
            .iter()
            .filter(|&&k| (k as f64 / n as f64 - p).abs() <= bound)
            .count();
        assert!(within >= 253, "{within} of 256 within 3σ");
    }

    #[test]
    fn plan_validation() {
        let mut plan = TrainPlan::default();
        assert!(plan.validate().is_ok());
        assert_eq!(plan.steps(), 3906);
        plan.batch_size = 2_000_000;
        assert!(matches!(
            plan.validate(),
            Err(Error::InvalidConfig {
                field: "batch_size",
                ..
            })
        ));
        plan.batch_size = 256;
        plan.lr = -1.0;
        assert!(matches!(
            plan.validate(),
            Err(Error::InvalidConfig { field: "lr", .. })
        ));
    }

    fn tiny_plan(seed: u64) -> TrainPlan {
        TrainPlan {
            total_samples: 100_000,
            batch_size: 64,
            lr: 1e-2,
            train_snr_db: f64::INFINITY,
            seed,
            ..TrainPlan::default()
        }
    }

    #[test]
    fn noiseless_tiny_model_separates_everything() {
        let config = ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.5);
        let (model, report) = train(config, &tiny_plan(3)).unwrap();
        let tail = &report.step_losses[report.steps - 20..];
        let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(final_loss < 0.01, "final loss {final_loss}");
        for i in 0..4 {
            for j in 0..2 {
                let out = model
                    .forward_with_noise(MessagePair::new(i, j), &[0.0; 4])
                    .unwrap();
                assert_eq!(
                    crate::model::decode(out.intech.as_ref().unwrap()).unwrap(),
                    i
                );
                assert_eq!(crate::model::decode(&out.ctc[0]).unwrap(), j);
            }
        }
        let x0 = model.encode(MessagePair::new(0, 0)).unwrap();
        let x1 = model.encode(MessagePair::new(0, 1)).unwrap();
        let dist: f64 = x0
            .values()
            .data()
            .iter()
            .zip(x1.values().data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(dist > 0.0);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let config = ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.5);
        let plan = TrainPlan {
            total_samples: 6_400,
            ..tiny_plan(11)
        };
        let (a, ra) = train(config.clone(), &plan).unwrap();
        let (b, rb) = train(config, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    struct Recorder {
        logs: Vec<usize>,
        checkpoints: Vec<usize>,
    }

    impl TrainObserver for Recorder {
        type Error = ();

        fn on_log(&mut self, entry: &LogEntry) -> core::result::Result<(), ()> {
            self.logs.push(entry.step);
            Ok(())
        }

        fn on_checkpoint(&mut self, step: usize, _: &Autoencoder) -> core::result::Result<(), ()> {
            self.checkpoints.push(step);
            if step >= 20 {
                Err(())
            } else {
                Ok(())
            }
        }
    }

    #[test]
    fn observer_sees_monotone_steps_and_can_abort() {
        let config = ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.5);
        let plan = TrainPlan {
            total_samples: 64 * 30,
            checkpoint_every: 10,
            log_every: 7,
            ..tiny_plan(1)
        };
        let mut rec = Recorder {
            logs: vec![],
            checkpoints: vec![],
        };
        let err = train_with(config, &plan, &mut rec).unwrap_err();
        assert_eq!(err, TrainError::Observer(()));
        assert_eq!(rec.checkpoints, [10, 20]);
        assert_eq!(rec.logs, [7, 14]);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let config = ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.5);
        let plan = TrainPlan {
            total_samples: 64 * 50,
            optimizer: OptimizerKind::Sgd,
            lr: 1e300,
            ..tiny_plan(2)
        };
        match train(config, &plan) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn ema_smooths() {
        assert_eq!(ema(&[1.0, 1.0, 1.0], 100), [1.0, 1.0, 1.0]);
        let e = ema(&[0.0, 10.0], 1);
        assert_eq!(e, [0.0, 10.0]);
    }
}
