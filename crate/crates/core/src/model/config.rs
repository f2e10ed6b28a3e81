use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::otfg::{resample_plan, OtfgSpec};
use crate::{Error, Result};

/// One in-technology and one CTC message, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MessagePair {
    pub intech: usize,
    pub ctc: usize,
}

impl MessagePair {
    pub fn new(intech: usize, ctc: usize) -> Self {
        Self { intech, ctc }
    }
}

/// Architecture and loss weighting of an autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// In-technology alphabet size `M`.
    pub intech_alphabet: usize,
    /// CTC alphabet size `C`.
    pub ctc_alphabet: usize,
    /// Transmitter grid; the in-technology receiver uses the same grid.
    pub tx_grid: OtfgSpec,
    pub ctc_rx_grids: Vec<OtfgSpec>,
    /// When false only the CTC branch and CTC receivers exist (broadcast).
    pub intech_enabled: bool,
    /// Weight of the in-technology loss in joint mode.
    pub alpha: f64,
    /// Per-receiver CTC weights in broadcast mode; `None` means all ones.
    pub ctc_weights: Option<Vec<f64>>,
    /// Hidden units per hidden layer; `None` selects
    /// [`default_hidden_width`](Self::default_hidden_width).
    pub hidden_width: Option<usize>,
    pub hidden_depth: usize,
}

/// Resolved loss weighting.
#[derive(Debug, Clone, PartialEq)]
pub enum LossWeights {
    /// `α·L_intech + (1 − α)·mean_i L_ctc,i`.
    Joint { alpha: f64 },
    /// `Σ_i w_i·L_ctc,i`.
    Broadcast { weights: Vec<f64> },
}

impl LossWeights {
    /// `(intech weight, weight per CTC receiver)` applied to per-sample losses.
    pub fn coefficients(&self, receivers: usize) -> (f64, Vec<f64>) {
        match self {
            LossWeights::Joint { alpha } => {
                (*alpha, vec![(1.0 - alpha) / receivers as f64; receivers])
            }
            LossWeights::Broadcast { weights } => (0.0, weights.clone()),
        }
    }

    pub fn combine(&self, intech: Option<f64>, ctc: &[f64]) -> f64 {
        match self {
            LossWeights::Joint { alpha } => {
                let mean = ctc.iter().sum::<f64>() / ctc.len() as f64;
                alpha * intech.unwrap_or(0.0) + (1.0 - alpha) * mean
            }
            LossWeights::Broadcast { weights } => weights.iter().zip(ctc).map(|(w, l)| w * l).sum(),
        }
    }
}

impl ModelConfig {
    /// Joint in-technology + single-CTC-receiver configuration.
    pub fn joint(
        intech_alphabet: usize,
        ctc_alphabet: usize,
        tx_grid: OtfgSpec,
        ctc_rx_grids: Vec<OtfgSpec>,
        alpha: f64,
    ) -> Self {
        Self {
            intech_alphabet,
            ctc_alphabet,
            tx_grid,
            ctc_rx_grids,
            intech_enabled: true,
            alpha,
            ctc_weights: None,
            hidden_width: None,
            hidden_depth: 1,
        }
    }

    /// CTC-only broadcast configuration with unit receiver weights.
    pub fn broadcast(ctc_alphabet: usize, tx_grid: OtfgSpec, ctc_rx_grids: Vec<OtfgSpec>) -> Self {
        Self {
            intech_alphabet: 1,
            ctc_alphabet,
            tx_grid,
            ctc_rx_grids,
            intech_enabled: false,
            alpha: 0.0,
            ctc_weights: None,
            hidden_width: None,
            hidden_depth: 1,
        }
    }

    pub fn intech_rx_grid(&self) -> OtfgSpec {
        self.tx_grid
    }

    /// `max(A, 2·t·f)` where `A` is the largest enabled alphabet.
    pub fn default_hidden_width(&self) -> usize {
        let alphabet = if self.intech_enabled {
            self.intech_alphabet.max(self.ctc_alphabet)
        } else {
            self.ctc_alphabet
        };
        alphabet.max(2 * self.tx_grid.channel_uses())
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
            .unwrap_or_else(|| self.default_hidden_width())
    }

    pub fn loss_weights(&self) -> LossWeights {
        if self.intech_enabled {
            LossWeights::Joint { alpha: self.alpha }
        } else {
            LossWeights::Broadcast {
                weights: self
                    .ctc_weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0; self.ctc_rx_grids.len()]),
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intech_enabled && self.intech_alphabet < 2 {
            return Err(Error::config("intech_alphabet", "must be at least 2"));
        }
        if self.ctc_alphabet < 2 {
            return Err(Error::config("ctc_alphabet", "must be at least 2"));
        }
        if self.ctc_rx_grids.is_empty() {
            return Err(Error::config(
                "ctc_rx_grids",
                "at least one CTC receiver is required",
            ));
        }
        for &grid in &self.ctc_rx_grids {
            resample_plan(self.tx_grid, grid).map_err(|e| {
                Error::config(
                    "ctc_rx_grids",
                    format!("{grid} is not reachable from {}: {e}", self.tx_grid),
                )
            })?;
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if let Some(weights) = &self.ctc_weights {
            if weights.len() != self.ctc_rx_grids.len() {
                return Err(Error::config(
                    "ctc_weights",
                    format!(
                        "{} weights for {} receivers",
                        weights.len(),
                        self.ctc_rx_grids.len()
                    ),
                ));
            }
            if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::config(
                    "ctc_weights",
                    "weights must be finite and nonnegative",
                ));
            }
            if self.intech_enabled {
                return Err(Error::config(
                    "ctc_weights",
                    "only used when intech_enabled = false",
                ));
            }
        }
        if self.hidden_width == Some(0) {
            return Err(Error::config("hidden_width", "must be positive"));
        }
        if self.hidden_depth == 0 {
            return Err(Error::config("hidden_depth", "must be positive"));
        }
        Ok(())
    }

    pub fn check_pair(&self, pair: MessagePair) -> Result<()> {
        let intech_size = if self.intech_enabled {
            self.intech_alphabet
        } else {
            1
        };
        if pair.intech >= intech_size {
            return Err(Error::IndexOutOfRange {
                index: pair.intech,
                size: intech_size,
            });
        }
        if pair.ctc >= self.ctc_alphabet {
            return Err(Error::IndexOutOfRange {
                index: pair.ctc,
                size: self.ctc_alphabet,
            });
        }
        Ok(())
    }
}
