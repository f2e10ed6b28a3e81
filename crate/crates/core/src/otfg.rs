//! OFDM time-frequency grids (OTFGs) and cross-grid resampling.
//!
//! Grid values are indexed `[symbol][subcarrier]` (time-major). A receiver
//! whose FFT is `r` times larger than the transmitter's sees `r` times more
//! subcarriers and symbols `r` times longer, so it observes the mean over
//! `r` transmitter symbols, repeated across the `r` finer subcarriers that
//! fall inside one transmitter subcarrier. The mirror case pools frequency
//! and repeats time.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result, Tensor};

/// Grid geometry: `symbols × subcarriers` channel uses.
///
/// Equality and hashing consider only the dimensions, not the label.
#[derive(Debug, Clone, Copy, Eq)]
pub struct OtfgSpec {
    symbols: usize,
    subcarriers: usize,
    label: Option<&'static str>,
}

impl PartialEq for OtfgSpec {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols && self.subcarriers == other.subcarriers
    }
}

impl core::hash::Hash for OtfgSpec {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        (self.symbols, self.subcarriers).hash(state);
    }
}

impl OtfgSpec {
    pub fn new(symbols: usize, subcarriers: usize) -> Result<Self> {
        if symbols == 0 || subcarriers == 0 {
            return Err(Error::InvalidGrid(format!("{symbols}x{subcarriers}")));
        }
        Ok(Self {
            symbols,
            subcarriers,
            label: None,
        })
    }

    pub fn with_label(mut self, label: &'static str) -> Self {
        self.label = Some(label);
        self
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn label(&self) -> Option<&'static str> {
        self.label
    }

    /// Number of channel uses `symbols · subcarriers`.
    pub fn channel_uses(&self) -> usize {
        self.symbols * self.subcarriers
    }

    /// Parses `SYMxSUB` (e.g. `4x4`, `1x16`) or a [`GridPreset`] name, which
    /// yields one symbol over the preset's FFT size.
    pub fn parse(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if let Some(preset) = GridPreset::by_name(trimmed) {
            return Ok(preset.otfg(1));
        }
        let (sym, sub) = trimmed
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidGrid(String::from(s)))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidGrid(String::from(s)))
        };
        Self::new(parse(sym)?, parse(sub)?).map_err(|_| Error::InvalidGrid(String::from(s)))
    }
}

impl fmt::Display for OtfgSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.symbols, self.subcarriers)
    }
}

impl FromStr for OtfgSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// A signal laid out on a grid, values `[symbol][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    grid: OtfgSpec,
    values: Tensor,
}

impl GridSignal {
    pub fn grid(&self) -> OtfgSpec {
        self.grid
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn at(&self, symbol: usize, subcarrier: usize) -> f64 {
        self.values.at(symbol, subcarrier)
    }

    /// Row-major flattening into a rank-1 tensor.
    pub fn flatten(&self) -> Tensor {
        Tensor::from_vec(self.values.data().to_vec())
    }

    pub fn unflatten(values: &[f64], grid: OtfgSpec) -> Result<Self> {
        if values.len() != grid.channel_uses() {
            return Err(Error::ShapeMismatch {
                context: "grid signal",
                expected: grid.channel_uses(),
                actual: values.len(),
            });
        }
        Ok(Self {
            grid,
            values: Tensor::new(vec![grid.symbols, grid.subcarriers], values.to_vec())?,
        })
    }
}

pub fn flatten(x: &GridSignal) -> Tensor {
    x.flatten()
}

pub fn unflatten(v: &Tensor, grid: OtfgSpec) -> Result<GridSignal> {
    GridSignal::unflatten(v.data(), grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Identity,
    /// Mean over `factor` consecutive symbols, each subcarrier repeated
    /// `factor` times.
    PoolTimeRepeatFrequency,
    /// Mean over `factor` consecutive subcarriers, each symbol repeated
    /// `factor` times.
    PoolFrequencyRepeatTime,
}

/// A validated mapping between two grids with a single integer factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResamplePlan {
    src: OtfgSpec,
    dst: OtfgSpec,
    factor: usize,
    orientation: Orientation,
}

pub fn resample_plan(src: OtfgSpec, dst: OtfgSpec) -> Result<ResamplePlan> {
    let incompatible = |reason| Error::IncompatibleGrids { src, dst, reason };
    if src.channel_uses() != dst.channel_uses() {
        return Err(incompatible("total channel uses differ"));
    }
    let (ts, fs, td, fd) = (src.symbols, src.subcarriers, dst.symbols, dst.subcarriers);
    let (factor, orientation) = if src == dst {
        (1, Orientation::Identity)
    } else if ts % td == 0 && fd % fs == 0 && ts / td == fd / fs {
        (ts / td, Orientation::PoolTimeRepeatFrequency)
    } else if fs % fd == 0 && td % ts == 0 && fs / fd == td / ts {
        (fs / fd, Orientation::PoolFrequencyRepeatTime)
    } else {
        return Err(incompatible("no single integer resampling factor"));
    };
    Ok(ResamplePlan {
        src,
        dst,
        factor,
        orientation,
    })
}

impl ResamplePlan {
    pub fn src(&self) -> OtfgSpec {
        self.src
    }

    pub fn dst(&self) -> OtfgSpec {
        self.dst
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Source flat index feeding each destination cell: the destination
    /// value at `(i, j)` is the mean of `factor` source cells.
    fn sources(&self, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        let r = self.factor;
        let fs = self.src.subcarriers;
        (0..r).map(move |u| match self.orientation {
            Orientation::Identity => i * fs + j,
            Orientation::PoolTimeRepeatFrequency => (i * r + u) * fs + j / r,
            Orientation::PoolFrequencyRepeatTime => (i / r) * fs + j * r + u,
        })
    }

    /// Applies the plan to a flat source-grid signal.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len(), self.src)?;
        if self.orientation == Orientation::Identity {
            return Ok(x.to_vec());
        }
        let inv = 1.0 / self.factor as f64;
        let (td, fd) = (self.dst.symbols, self.dst.subcarriers);
        let mut out = Vec::with_capacity(td * fd);
        for i in 0..td {
            for j in 0..fd {
                out.push(self.sources(i, j).map(|k| x[k]).sum::<f64>() * inv);
            }
        }
        Ok(out)
    }

    /// Adjoint (transpose) of [`apply`](Self::apply): maps a destination-grid
    /// gradient back onto the source grid.
    pub fn adjoint(&self, grad: &[f64]) -> Result<Vec<f64>> {
        self.check_len(grad.len(), self.dst)?;
        if self.orientation == Orientation::Identity {
            return Ok(grad.to_vec());
        }
        let inv = 1.0 / self.factor as f64;
        let fd = self.dst.subcarriers;
        let mut out = vec![0.0; self.src.channel_uses()];
        for i in 0..self.dst.symbols {
            for j in 0..fd {
                let g = grad[i * fd + j] * inv;
                for k in self.sources(i, j) {
                    out[k] += g;
                }
            }
        }
        Ok(out)
    }

    fn check_len(&self, len: usize, grid: OtfgSpec) -> Result<()> {
        if len != grid.channel_uses() {
            return Err(Error::ShapeMismatch {
                context: "resample input",
                expected: grid.channel_uses(),
                actual: len,
            });
        }
        Ok(())
    }
}

pub fn grid_resample(x: &GridSignal, dst: OtfgSpec) -> Result<GridSignal> {
    let plan = resample_plan(x.grid, dst)?;
    GridSignal::unflatten(&plan.apply(x.values.data())?, dst)
}

/// Reference parameters of common OFDM technologies. Informational; the
/// simulations themselves run on abstract grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPreset {
    pub name: &'static str,
    pub bandwidth_mhz: f64,
    pub sampling_rate_mhz: f64,
    pub fft_size: usize,
    pub subcarrier_spacing_khz: f64,
    pub symbol_duration_us: f64,
}

pub const GRID_PRESETS: [GridPreset; 4] = [
    GridPreset {
        name: "802.11n/ac",
        bandwidth_mhz: 17.5,
        sampling_rate_mhz: 20.0,
        fft_size: 64,
        subcarrier_spacing_khz: 312.5,
        symbol_duration_us: 3.2,
    },
    GridPreset {
        name: "802.11ax",
        bandwidth_mhz: 17.5,
        sampling_rate_mhz: 20.0,
        fft_size: 256,
        subcarrier_spacing_khz: 78.125,
        symbol_duration_us: 12.8,
    },
    GridPreset {
        name: "LTE-LAA/U",
        bandwidth_mhz: 18.0,
        sampling_rate_mhz: 30.72,
        fft_size: 2048,
        subcarrier_spacing_khz: 15.0,
        symbol_duration_us: 66.6,
    },
    GridPreset {
        name: "WiMAX",
        bandwidth_mhz: 18.4,
        sampling_rate_mhz: 22.4,
        fft_size: 2048,
        subcarrier_spacing_khz: 10.94,
        symbol_duration_us: 91.4,
    },
];

impl GridPreset {
    /// Case-insensitive lookup by technology name.
    pub fn by_name(name: &str) -> Option<&'static GridPreset> {
        GRID_PRESETS
            .iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
    }

    /// `symbols` OFDM symbols over the full FFT.
    pub fn otfg(&self, symbols: usize) -> OtfgSpec {
        OtfgSpec::new(symbols.max(1), self.fft_size)
            .expect("preset FFT size is positive")
            .with_label(self.name)
    }
}
