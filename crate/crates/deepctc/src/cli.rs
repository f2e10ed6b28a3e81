//! Command-line interface.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use deepctc_core::eval::{snr_at_bler, BlerCurve};
use deepctc_core::model::JointObjective;
use deepctc_core::nn::finite_difference_check;
use deepctc_core::otfg::OtfgSpec;
use deepctc_core::rng::stream_rng;
use deepctc_core::training::sample_batch;
use deepctc_core::{Autoencoder, MessagePair, ModelConfig};

use crate::config::{
    self, load_experiment, parse_grid, EvalPlan, Experiment, FULL_SCALE_TEST_SAMPLES,
};
use crate::presets::Preset;
use crate::runner::{self, resolve_seed, SeedSource};
use crate::{csv, model_file, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "deepctc",
    version,
    about = "Train and evaluate cross-technology communication autoencoders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its training log.
    Train(TrainArgs),
    /// Estimate BLER over an SNR sweep and write a CSV.
    Eval(EvalArgs),
    /// Train and evaluate one model per alpha with a shared seed.
    SweepAlpha(SweepAlphaArgs),
    /// Check end-to-end gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print a model summary.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Base experiment: joint-alpha, broadcast-hetero, broadcast-homo-a or broadcast-homo-b.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML config file applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// In-technology alphabet size M.
    #[arg(long)]
    pub intech_alphabet: Option<usize>,
    /// CTC alphabet size C.
    #[arg(long)]
    pub ctc_alphabet: Option<usize>,
    /// Transmitter grid, SYMxSUB or a technology name.
    #[arg(long)]
    pub tx_grid: Option<String>,
    /// CTC receiver grids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ctc_rx_grids: Option<Vec<String>>,
    /// Enable or disable the in-technology link.
    #[arg(long)]
    pub intech_enabled: Option<bool>,
    /// Broadcast loss weights per CTC receiver, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ctc_weights: Option<Vec<f64>>,
    /// Hidden layer width (default: max(alphabet, 2 * grid size)).
    #[arg(long)]
    pub hidden_width: Option<usize>,
    /// Number of hidden layers per network.
    #[arg(long)]
    pub hidden_depth: Option<usize>,
    /// Number of training samples.
    #[arg(long)]
    pub train_samples: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Channel SNR in dB used during training.
    #[arg(long, allow_hyphen_values = true)]
    pub train_snr: Option<f64>,
    /// Steps between checkpoints (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Steps per training log line.
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Seed for everything random (default: DEEPCTC_SEED, else entropy).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub snr_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_stop: Option<f64>,
    #[arg(long)]
    pub snr_step: Option<f64>,
    /// Test samples per SNR point.
    #[arg(long, conflicts_with = "full_scale")]
    pub samples: Option<u64>,
    /// Use 2,000,000 test samples per SNR point.
    #[arg(long)]
    pub full_scale: bool,
    /// Worker threads for the sweep (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl SweepArgs {
    fn apply(&self, plan: &mut EvalPlan) {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut plan.snr_start, self.snr_start);
        set(&mut plan.snr_stop, self.snr_stop);
        set(&mut plan.snr_step, self.snr_step);
        if let Some(n) = self.samples {
            plan.test_samples = n;
        }
        if self.full_scale {
            plan.test_samples = FULL_SCALE_TEST_SAMPLES;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Alpha, the in-technology loss weight in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output model file. The log goes to `<out>.log`.
    #[arg(long)]
    pub out: PathBuf,
    /// Echo training log lines to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Take the default SNR range and sample count from this preset.
    #[arg(long)]
    pub preset: Option<String>,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// CSV output path (default: stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Seed for the test set (default: DEEPCTC_SEED, else entropy).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepAlphaArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Alphas to train, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphas: Vec<String>,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Directory for models, per-alpha CSVs and summary.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub intech_alphabet: usize,
    #[arg(long, default_value_t = 2)]
    pub ctc_alphabet: usize,
    #[arg(long, default_value = "2x2")]
    pub tx_grid: String,
    /// CTC receiver grids, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1x4")]
    pub ctc_rx_grids: Vec<String>,
    #[arg(long, default_value_t = 8)]
    pub hidden_width: usize,
    #[arg(long, default_value_t = 1)]
    pub hidden_depth: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Check the CTC-only broadcast loss instead of the joint loss.
    #[arg(long)]
    pub broadcast: bool,
    /// Batch size (default: every message pair once).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Noise standard deviation of the fixed channel realisation.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Central difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Maximum relative error for success.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Write the noiseless transmit signal of every message pair to this CSV.
    #[arg(long)]
    pub encodings: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("deepctc: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::SweepAlpha(a) => cmd_sweep_alpha(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

fn seed(explicit: Option<u64>) -> Result<u64, CliError> {
    let (seed, source) = resolve_seed(explicit)?;
    match source {
        SeedSource::Explicit => {}
        SeedSource::Environment => eprintln!("seed {seed} (from {})", runner::SEED_ENV),
        SeedSource::Entropy => {
            eprintln!("seed {seed} (from entropy; pass --seed {seed} to reproduce)")
        }
    }
    Ok(seed)
}

impl ExperimentArgs {
    /// Preset, then config file, then flags.
    fn resolve(&self, alpha: Option<f64>) -> Result<Experiment, CliError> {
        let mut exp = load_experiment(self.preset.as_deref(), self.config.as_deref())?;
        let m = &mut exp.model;
        override_with(&mut m.intech_alphabet, self.intech_alphabet);
        override_with(&mut m.ctc_alphabet, self.ctc_alphabet);
        if let Some(g) = &self.tx_grid {
            m.tx_grid = parse_grid("tx-grid", g)?;
        }
        if let Some(grids) = &self.ctc_rx_grids {
            m.ctc_rx_grids = parse_grids("ctc-rx-grids", grids)?;
        }
        override_with(&mut m.intech_enabled, self.intech_enabled);
        override_with(&mut m.alpha, alpha);
        if self.ctc_weights.is_some() {
            m.ctc_weights.clone_from(&self.ctc_weights);
        }
        if self.hidden_width.is_some() {
            m.hidden_width = self.hidden_width;
        }
        override_with(&mut m.hidden_depth, self.hidden_depth);
        let t = &mut exp.train;
        override_with(&mut t.total_samples, self.train_samples);
        override_with(&mut t.batch_size, self.batch_size);
        if let Some(o) = &self.optimizer {
            t.optimizer = config::parse_optimizer(o)?;
        }
        override_with(&mut t.lr, self.lr);
        override_with(&mut t.train_snr_db, self.train_snr);
        override_with(&mut t.checkpoint_every, self.checkpoint_every);
        override_with(&mut t.log_every, self.log_every);
        if self.seed.is_some() {
            exp.seed = self.seed;
        }
        Ok(exp)
    }
}

fn override_with<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_grids(field: &str, grids: &[String]) -> Result<Vec<OtfgSpec>, CliError> {
    grids.iter().map(|g| parse_grid(field, g)).collect()
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p.display(), e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("stdout", e)),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let mut exp = a.experiment.resolve(a.alpha)?;
    exp.validate()?;
    exp.train.seed = seed(exp.seed)?;
    let (model, report) = runner::train_to_file(exp.model, &exp.train, &a.out, a.verbose)?;
    println!("model      {}", a.out.display());
    println!("log        {}", runner::log_path(&a.out).display());
    println!("parameters {}", model.parameter_count());
    println!("steps      {}", report.steps);
    if let Some(l) = report.entries.last() {
        println!("final loss {}", runner::format_log_entry(l));
    }
    println!("sha256     {}", hex(&report.checksum));
    println!("seconds    {:.1}", report.wall_clock_secs.unwrap_or(0.0));
    Ok(())
}

fn load_model(path: &Path) -> Result<model_file::StoredModel, CliError> {
    Ok(model_file::load(path)?)
}

fn eval_with(
    model: &Autoencoder,
    plan: &EvalPlan,
    seed: u64,
    jobs: Option<usize>,
) -> Result<BlerCurve, CliError> {
    let pool = runner::thread_pool(jobs)?;
    runner::parallel_sweep(model, plan, seed, &pool)
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let mut plan = match &a.preset {
        Some(name) => Preset::from_name(name)
            .ok_or_else(|| CliError::Config(format!("preset: unknown preset `{name}`")))?
            .eval(),
        None => EvalPlan::default(),
    };
    a.sweep.apply(&mut plan);
    if plan.test_samples == 0 {
        return Err(CliError::Config("samples: must be positive".into()));
    }
    let stored = load_model(&a.model)?;
    let seed = seed(a.seed)?;
    let curve = eval_with(&stored.model, &plan, seed, a.sweep.jobs)?;
    write_output(a.csv.as_deref(), &csv::to_string(&curve))
}

/// Parses and deduplicates an alpha list, keeping first occurrences.
pub fn parse_alphas(raw: &[String]) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut alphas = Vec::new();
    let mut duplicates = Vec::new();
    for s in raw.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let a: f64 = s
            .parse()
            .map_err(|_| CliError::Config(format!("alphas: `{s}` is not a number")))?;
        if !(0.0..=1.0).contains(&a) {
            return Err(CliError::Config(format!("alphas: {a} is outside [0, 1]")));
        }
        if alphas.contains(&a) {
            duplicates.push(a);
        } else {
            alphas.push(a);
        }
    }
    if alphas.is_empty() {
        return Err(CliError::Config("alphas: the list is empty".into()));
    }
    Ok((alphas, duplicates))
}

fn cmd_sweep_alpha(a: &SweepAlphaArgs) -> Result<(), CliError> {
    let (alphas, duplicates) = parse_alphas(&a.alphas)?;
    for d in duplicates {
        eprintln!("warning: alpha {d} listed more than once; training it once");
    }
    let mut exp = a.experiment.resolve(None)?;
    a.sweep.apply(&mut exp.eval);
    if !exp.model.intech_enabled {
        return Err(CliError::Config(
            "alphas: the experiment has no in-technology link".into(),
        ));
    }
    for &alpha in &alphas {
        let mut e = exp.clone();
        e.model.alpha = alpha;
        e.validate()?;
    }
    let seed = seed(exp.seed)?;
    exp.train.seed = seed;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(a.out_dir.display(), e))?;
    let mut curves = Vec::new();
    for &alpha in &alphas {
        let mut cfg = exp.model.clone();
        cfg.alpha = alpha;
        let out = a.out_dir.join(format!("alpha-{alpha}.model"));
        let (model, report) = runner::train_to_file(cfg, &exp.train, &out, a.verbose)?;
        let curve = eval_with(&model, &exp.eval, seed, a.sweep.jobs)?;
        let path = a.out_dir.join(format!("alpha-{alpha}.csv"));
        write_output(Some(&path), &csv::to_string(&curve))?;
        println!(
            "alpha {alpha}: {} steps in {:.1}s, in-technology 1e-2 crossing {}",
            report.steps,
            report.wall_clock_secs.unwrap_or(0.0),
            curve
                .intech()
                .and_then(|c| snr_at_bler(&c, 1e-2, exp.eval.test_samples))
                .map_or_else(|| "not reached".to_string(), |s| format!("{s:.2} dB")),
        );
        curves.push((alpha, curve));
    }
    let refs: Vec<(f64, &BlerCurve)> = curves.iter().map(|(a, c)| (*a, c)).collect();
    write_output(Some(&a.out_dir.join("summary.csv")), &csv::summary(&refs))
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let tx = parse_grid("tx-grid", &a.tx_grid)?;
    let grids = parse_grids("ctc-rx-grids", &a.ctc_rx_grids)?;
    let mut cfg = if a.broadcast {
        ModelConfig::broadcast(a.ctc_alphabet, tx, grids)
    } else {
        ModelConfig::joint(a.intech_alphabet, a.ctc_alphabet, tx, grids, a.alpha)
    };
    cfg.hidden_width = Some(a.hidden_width);
    cfg.hidden_depth = a.hidden_depth;
    cfg.validate()?;
    let seed = seed(a.seed)?;
    let m = if cfg.intech_enabled {
        cfg.intech_alphabet
    } else {
        1
    };
    let c = cfg.ctc_alphabet;
    let batch: Vec<MessagePair> = match a.batch {
        Some(n) => sample_batch(m, c, n, &mut stream_rng(seed, 1)),
        None => (0..m)
            .flat_map(|i| (0..c).map(move |j| MessagePair::new(i, j)))
            .collect(),
    };
    let model = Autoencoder::build(cfg, &mut stream_rng(seed, 0))?;
    let mut objective = JointObjective::new(model, batch, a.sigma, &mut stream_rng(seed, 2))?;
    let report = finite_difference_check(&mut objective, a.step, a.tolerance)?;
    println!("parameters checked {}", report.checked);
    println!("max relative error {:e}", report.max_rel_error);
    if let Some(i) = report.worst_index {
        println!(
            "worst parameter    {i} (analytic {:e}, numeric {:e})",
            report.analytic_at_worst, report.numeric_at_worst
        );
    }
    if report.passed() {
        println!("PASS (tolerance {:e})", a.tolerance);
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "max relative error {:e} exceeds {:e}",
            report.max_rel_error, a.tolerance
        )))
    }
}

pub fn summary(stored: &model_file::StoredModel) -> String {
    let model = &stored.model;
    let cfg = model.config();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "in-technology   {}",
        match cfg.intech_enabled {
            true => format!("M = {}, alpha = {}", cfg.intech_alphabet, cfg.alpha),
            false => "disabled (broadcast)".to_string(),
        }
    );
    let _ = writeln!(s, "ctc alphabet    C = {}", cfg.ctc_alphabet);
    let _ = writeln!(
        s,
        "tx grid         {} ({} channel uses)",
        cfg.tx_grid,
        cfg.tx_grid.channel_uses()
    );
    for (i, (g, plan)) in cfg
        .ctc_rx_grids
        .iter()
        .zip(model.resample_plans())
        .enumerate()
    {
        let weight = match &cfg.ctc_weights {
            Some(w) if !cfg.intech_enabled => format!(", weight {}", w[i]),
            _ => String::new(),
        };
        let _ = writeln!(
            s,
            "ctc receiver {}  {g} ({:?}, factor {}{weight})",
            i + 1,
            plan.orientation(),
            plan.factor()
        );
    }
    let _ = writeln!(
        s,
        "hidden          width {}, depth {}",
        cfg.hidden_width(),
        cfg.hidden_depth
    );
    for (id, net) in model.networks() {
        let dims: Vec<String> = std::iter::once(net.inputs().to_string())
            .chain(
                net.layers()
                    .iter()
                    .map(|l| format!("{} {}", l.outputs(), l.activation().name())),
            )
            .collect();
        let _ = writeln!(s, "  {:<12} {}", id.label(), dims.join(" -> "));
    }
    let _ = writeln!(s, "parameters      {}", model.parameter_count());
    if let Some(p) = &stored.plan {
        let _ = writeln!(
            s,
            "trained         {} samples, batch {}, {} lr {}, {} dB, seed {}",
            p.total_samples,
            p.batch_size,
            p.optimizer.name(),
            p.lr,
            p.train_snr_db,
            p.seed
        );
    }
    let _ = writeln!(s, "sha256          {}", model_file::checksum_hex(model));
    s
}

/// One row per message pair: `s_intech,s_ctc,x_0_0,...` with cells in
/// `[symbol][subcarrier]` order.
pub fn encodings_csv(model: &Autoencoder) -> Result<String, CliError> {
    let cfg = model.config();
    let m = if cfg.intech_enabled {
        cfg.intech_alphabet
    } else {
        1
    };
    let mut out = String::from("s_intech,s_ctc");
    for t in 0..cfg.tx_grid.symbols() {
        for f in 0..cfg.tx_grid.subcarriers() {
            let _ = write!(out, ",x_{t}_{f}");
        }
    }
    out.push('\n');
    for i in 0..m {
        for j in 0..cfg.ctc_alphabet {
            let x = model.encode(MessagePair::new(i, j))?;
            let _ = write!(out, "{i},{j}");
            for v in x.flatten().data() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

fn cmd_inspect(a: &InspectArgs) -> Result<(), CliError> {
    let stored = load_model(&a.model)?;
    print!("{}", summary(&stored));
    if let Some(path) = &a.encodings {
        write_output(Some(path), &encodings_csv(&stored.model)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn alphas_are_deduplicated_in_order() {
        let raw: Vec<String> = ["1.0", "0.9", "1", " 0.9"].map(String::from).to_vec();
        let (alphas, dups) = parse_alphas(&raw).unwrap();
        assert_eq!(alphas, vec![1.0, 0.9]);
        assert_eq!(dups, vec![1.0, 0.9]);
    }

    #[test]
    fn empty_or_invalid_alpha_lists_are_config_errors() {
        for raw in [
            vec![],
            vec![String::new()],
            vec!["1.5".into()],
            vec!["x".into()],
        ] {
            assert_eq!(parse_alphas(&raw).unwrap_err().exit_code(), 2, "{raw:?}");
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[model]\nalpha = 0.2\nhidden_depth = 2\n").unwrap();
        let cli = Cli::try_parse_from([
            "deepctc",
            "train",
            "--config",
            path.to_str().unwrap(),
            "--alpha",
            "0.7",
            "--train-snr",
            "-1.5",
            "--out",
            "x",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else {
            panic!()
        };
        let exp = a.experiment.resolve(a.alpha).unwrap();
        assert_eq!(exp.model.alpha, 0.7);
        assert_eq!(exp.model.hidden_depth, 2);
        assert_eq!(exp.train.train_snr_db, -1.5);
        assert_eq!(exp.model.intech_alphabet, 64);
    }

    #[test]
    fn encodings_have_one_row_per_pair() {
        let g = |t, f| OtfgSpec::new(t, f).unwrap();
        let cfg = ModelConfig::joint(4, 2, g(2, 2), vec![g(1, 4)], 0.9);
        let model = Autoencoder::build(cfg, &mut stream_rng(0, 0)).unwrap();
        let text = encodings_csv(&model).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 8);
        assert_eq!(lines[0], "s_intech,s_ctc,x_0_0,x_0_1,x_1_0,x_1_1");
        for l in &lines[1..] {
            let energy: f64 = l
                .split(',')
                .skip(2)
                .map(|v| v.parse::<f64>().unwrap().powi(2))
                .sum();
            assert!((energy - 4.0).abs() < 1e-9);
        }
    }
}
