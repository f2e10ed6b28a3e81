//! Versioned plain-text model format.
//!
//! ```text
//! deepctc-model 1
//! [config]
//! intech_alphabet = 64
//! ctc_alphabet = 4
//! tx_grid = 4x4
//! ctc_rx_grids = 1x16
//! intech_enabled = true
//! alpha = 0.9
//! ctc_weights = none
//! hidden_width = auto
//! hidden_depth = 1
//! [train]
//! total_samples = 1000000
//! batch_size = 256
//! optimizer = adam
//! lr = 0.001
//! train_snr_db = 3
//! seed = 7
//! checkpoint_every = 500
//! log_every = 100
//! [layers]
//! tx_intech 0 64 64 relu
//! tx_intech 1 64 16 linear
//! ...
//! [weights tx_intech 0]
//! <one line of `inputs` values per output row>
//! [bias tx_intech 0]
//! <one line of `outputs` values>
//! ...
//! [end]
//! sha256 <hex digest of the parameters>
//! ```
//!
//! The `[train]` section is optional. Each `[layers]` line reads
//! `network index inputs outputs activation`.
//!
//! Values are whitespace separated. Parameters are written in Rust's
//! shortest round-trip exponent notation, so a loaded model is bit-identical
//! to the saved one. The digest is SHA-256 over the little-endian bytes of
//! every parameter in file order.

use std::fmt::Write as _;
use std::path::Path;

use deepctc_core::model::Network;
use deepctc_core::nn::{Activation, DenseLayer, DenseStack};
use deepctc_core::otfg::OtfgSpec;
use deepctc_core::training::{OptimizerKind, TrainPlan};
use deepctc_core::{Autoencoder, ModelConfig, Tensor};

pub const MAGIC: &str = "deepctc-model";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported model file version {found} (expected {VERSION})")]
    Version { found: String },
    #[error("model file truncated: missing section `{0}`")]
    Missing(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("model does not match its configuration: {0}")]
    Dimension(String),
    #[error("parameter checksum mismatch")]
    Checksum,
}

/// A model together with the training plan that produced it, if known.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: Autoencoder,
    pub plan: Option<TrainPlan>,
}

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn checksum_hex(model: &Autoencoder) -> String {
    hex(&model.parameter_checksum())
}

fn grids_to_string(grids: &[OtfgSpec]) -> String {
    grids
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn to_string(model: &Autoencoder, plan: Option<&TrainPlan>) -> String {
    let cfg = model.config();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    s.push_str("[config]\n");
    let _ = writeln!(s, "intech_alphabet = {}", cfg.intech_alphabet);
    let _ = writeln!(s, "ctc_alphabet = {}", cfg.ctc_alphabet);
    let _ = writeln!(s, "tx_grid = {}", cfg.tx_grid);
    let _ = writeln!(s, "ctc_rx_grids = {}", grids_to_string(&cfg.ctc_rx_grids));
    let _ = writeln!(s, "intech_enabled = {}", cfg.intech_enabled);
    let _ = writeln!(s, "alpha = {}", cfg.alpha);
    match &cfg.ctc_weights {
        None => s.push_str("ctc_weights = none\n"),
        Some(w) => {
            let w: Vec<String> = w.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "ctc_weights = {}", w.join(","));
        }
    }
    match cfg.hidden_width {
        None => s.push_str("hidden_width = auto\n"),
        Some(w) => {
            let _ = writeln!(s, "hidden_width = {w}");
        }
    }
    let _ = writeln!(s, "hidden_depth = {}", cfg.hidden_depth);
    if let Some(p) = plan {
        s.push_str("[train]\n");
        let _ = writeln!(s, "total_samples = {}", p.total_samples);
        let _ = writeln!(s, "batch_size = {}", p.batch_size);
        let _ = writeln!(s, "optimizer = {}", p.optimizer.name());
        let _ = writeln!(s, "lr = {}", p.lr);
        let _ = writeln!(s, "train_snr_db = {}", p.train_snr_db);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "checkpoint_every = {}", p.checkpoint_every);
        let _ = writeln!(s, "log_every = {}", p.log_every);
    }
    s.push_str("[layers]\n");
    let networks = model.networks();
    for (id, net) in &networks {
        for (i, l) in net.layers().iter().enumerate() {
            let _ = writeln!(
                s,
                "{} {i} {} {} {}",
                id.label(),
                l.inputs(),
                l.outputs(),
                l.activation().name()
            );
        }
    }
    let row = |s: &mut String, values: &[f64]| {
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:e}");
        }
        s.push('\n');
    };
    for (id, net) in &networks {
        for (i, l) in net.layers().iter().enumerate() {
            let _ = writeln!(s, "[weights {} {i}]", id.label());
            for r in l.weights().data().chunks(l.inputs()) {
                row(&mut s, r);
            }
            let _ = writeln!(s, "[bias {} {i}]", id.label());
            row(&mut s, l.bias().data());
        }
    }
    s.push_str("[end]\n");
    let _ = writeln!(s, "sha256 {}", checksum_hex(model));
    s
}

pub fn save(
    model: &Autoencoder,
    plan: Option<&TrainPlan>,
    path: &Path,
) -> Result<(), ModelFileError> {
    std::fs::write(path, to_string(model, plan)).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<StoredModel, ModelFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, section: &str) -> Result<(usize, &'a str), ModelFileError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| ModelFileError::Missing(section.to_string()))
    }

    fn peek_is_header(&mut self) -> bool {
        self.inner
            .peek()
            .is_none_or(|(_, l)| l.trim_start().starts_with('['))
    }

    fn expect_header(&mut self, header: &str) -> Result<(), ModelFileError> {
        let (line, text) = self.next_line(header)?;
        if text != format!("[{header}]") {
            return Err(malformed(
                line,
                format!("expected `[{header}]`, found `{text}`"),
            ));
        }
        Ok(())
    }

    /// `key = value` lines up to the next section header.
    fn key_values(
        &mut self,
        section: &str,
    ) -> Result<Vec<(usize, &'a str, &'a str)>, ModelFileError> {
        let mut out = Vec::new();
        while !self.peek_is_header() {
            let (line, text) = self.next_line(section)?;
            let (k, v) = text.split_once('=').ok_or_else(|| {
                malformed(line, format!("expected `key = value`, found `{text}`"))
            })?;
            out.push((line, k.trim(), v.trim()));
        }
        Ok(out)
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> ModelFileError {
    ModelFileError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ModelFileError> {
    v.parse()
        .map_err(|_| malformed(line, format!("invalid value `{v}` for `{key}`")))
}

fn take<'a>(
    kv: &[(usize, &str, &'a str)],
    section: &str,
    key: &str,
) -> Result<(usize, &'a str), ModelFileError> {
    kv.iter()
        .find(|(_, k, _)| *k == key)
        .map(|(l, _, v)| (*l, *v))
        .ok_or_else(|| ModelFileError::Missing(format!("{section}.{key}")))
}

fn parse_config(kv: &[(usize, &str, &str)]) -> Result<ModelConfig, ModelFileError> {
    for (line, k, _) in kv {
        const KNOWN: [&str; 9] = [
            "intech_alphabet",
            "ctc_alphabet",
            "tx_grid",
            "ctc_rx_grids",
            "intech_enabled",
            "alpha",
            "ctc_weights",
            "hidden_width",
            "hidden_depth",
        ];
        if !KNOWN.contains(k) {
            return Err(malformed(*line, format!("unknown config key `{k}`")));
        }
    }
    let get = |key: &str| take(kv, "config", key);
    let num = |key: &str| -> Result<usize, ModelFileError> {
        let (l, v) = get(key)?;
        parse_value(l, key, v)
    };
    let grid = |l: usize, v: &str| OtfgSpec::parse(v).map_err(|e| malformed(l, e.to_string()));
    let (l, v) = get("tx_grid")?;
    let tx_grid = grid(l, v)?;
    let (l, v) = get("ctc_rx_grids")?;
    let ctc_rx_grids = v
        .split(',')
        .map(|g| grid(l, g))
        .collect::<Result<Vec<_>, _>>()?;
    let (l, v) = get("intech_enabled")?;
    let intech_enabled = parse_value(l, "intech_enabled", v)?;
    let (l, v) = get("alpha")?;
    let alpha = parse_value(l, "alpha", v)?;
    let (l, v) = get("ctc_weights")?;
    let ctc_weights = match v {
        "none" => None,
        list => Some(
            list.split(',')
                .map(|w| parse_value(l, "ctc_weights", w.trim()))
                .collect::<Result<Vec<f64>, _>>()?,
        ),
    };
    let (l, v) = get("hidden_width")?;
    let hidden_width = match v {
        "auto" => None,
        w => Some(parse_value(l, "hidden_width", w)?),
    };
    Ok(ModelConfig {
        intech_alphabet: num("intech_alphabet")?,
        ctc_alphabet: num("ctc_alphabet")?,
        tx_grid,
        ctc_rx_grids,
        intech_enabled,
        alpha,
        ctc_weights,
        hidden_width,
        hidden_depth: num("hidden_depth")?,
    })
}

fn parse_plan(kv: &[(usize, &str, &str)]) -> Result<TrainPlan, ModelFileError> {
    let get = |key: &str| take(kv, "train", key);
    macro_rules! field {
        ($key:literal) => {{
            let (l, v) = get($key)?;
            parse_value(l, $key, v)?
        }};
    }
    let (l, v) = get("optimizer")?;
    let optimizer = OptimizerKind::from_name(v)
        .ok_or_else(|| malformed(l, format!("unknown optimizer `{v}`")))?;
    Ok(TrainPlan {
        total_samples: field!("total_samples"),
        batch_size: field!("batch_size"),
        optimizer,
        lr: field!("lr"),
        train_snr_db: field!("train_snr_db"),
        seed: field!("seed"),
        checkpoint_every: field!("checkpoint_every"),
        log_every: field!("log_every"),
    })
}

struct LayerSpec {
    network: Network,
    index: usize,
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

fn parse_floats(line: usize, text: &str, expected: usize) -> Result<Vec<f64>, ModelFileError> {
    let values = text
        .split_whitespace()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| malformed(line, format!("invalid number `{v}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(malformed(
            line,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(malformed(line, "non-finite parameter"));
    }
    Ok(values)
}

pub fn parse(text: &str) -> Result<StoredModel, ModelFileError> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (line, header) = lines.next_line("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| malformed(line, format!("not a {MAGIC} file")))?;
    if version != VERSION.to_string() {
        return Err(ModelFileError::Version {
            found: version.to_string(),
        });
    }

    lines.expect_header("config")?;
    let config = parse_config(&lines.key_values("config")?)?;

    let (line, text) = lines.next_line("layers")?;
    let plan = if text == "[train]" {
        let plan = parse_plan(&lines.key_values("train")?)?;
        lines.expect_header("layers")?;
        Some(plan)
    } else if text == "[layers]" {
        None
    } else {
        return Err(malformed(
            line,
            format!("expected `[train]` or `[layers]`, found `{text}`"),
        ));
    };

    let mut specs = Vec::new();
    while !lines.peek_is_header() {
        let (line, text) = lines.next_line("layers")?;
        let f: Vec<&str> = text.split_whitespace().collect();
        let [net, index, inputs, outputs, act] = f[..] else {
            return Err(malformed(
                line,
                "expected `network index inputs outputs activation`",
            ));
        };
        specs.push(LayerSpec {
            network: Network::parse_label(net)
                .ok_or_else(|| malformed(line, format!("unknown network `{net}`")))?,
            index: parse_value(line, "layer index", index)?,
            inputs: parse_value(line, "inputs", inputs)?,
            outputs: parse_value(line, "outputs", outputs)?,
            activation: Activation::from_name(act)
                .ok_or_else(|| malformed(line, format!("unknown activation `{act}`")))?,
        });
    }

    let mut networks: Vec<(Network, Vec<DenseLayer>)> = Vec::new();
    for spec in &specs {
        let label = spec.network.label();
        let weights_header = format!("weights {label} {}", spec.index);
        lines.expect_header(&weights_header)?;
        let mut weights = Vec::with_capacity(spec.inputs * spec.outputs);
        for _ in 0..spec.outputs {
            let (line, text) = lines.next_line(&weights_header)?;
            weights.extend(parse_floats(line, text, spec.inputs)?);
        }
        let bias_header = format!("bias {label} {}", spec.index);
        lines.expect_header(&bias_header)?;
        let (line, text) = lines.next_line(&bias_header)?;
        let bias = parse_floats(line, text, spec.outputs)?;
        let layer = DenseLayer::new(
            Tensor::new(vec![spec.outputs, spec.inputs], weights)
                .map_err(|e| ModelFileError::Dimension(e.to_string()))?,
            Tensor::new(vec![spec.outputs], bias)
                .map_err(|e| ModelFileError::Dimension(e.to_string()))?,
            spec.activation,
        )
        .map_err(|e| ModelFileError::Dimension(e.to_string()))?;
        match networks.last_mut() {
            Some((id, layers)) if *id == spec.network => {
                if spec.index != layers.len() {
                    return Err(ModelFileError::Dimension(format!(
                        "{label} layer {} out of order",
                        spec.index
                    )));
                }
                layers.push(layer);
            }
            _ => {
                if spec.index != 0 {
                    return Err(ModelFileError::Dimension(format!(
                        "{label} does not start at layer 0"
                    )));
                }
                networks.push((spec.network, vec![layer]));
            }
        }
    }

    lines.expect_header("end")?;
    let (line, text) = lines.next_line("end.sha256")?;
    let digest = text
        .strip_prefix("sha256 ")
        .ok_or_else(|| malformed(line, "expected `sha256 <digest>`"))?;

    let networks = networks
        .into_iter()
        .map(|(id, layers)| {
            DenseStack::new(layers)
                .map(|s| (id, s))
                .map_err(|e| ModelFileError::Dimension(format!("{}: {e}", id.label())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let model = Autoencoder::from_networks(config, networks)
        .map_err(|e| ModelFileError::Dimension(e.to_string()))?;
    if checksum_hex(&model) != digest.trim() {
        return Err(ModelFileError::Checksum);
    }
    Ok(StoredModel { model, plan })
}
