//! Training and evaluation drivers with file output.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use deepctc_core::eval::{estimate_bler, point_seed, snr_grid, BlerCurve};
use deepctc_core::training::{
    train_with, LogEntry, TrainError, TrainObserver, TrainPlan, TrainReport,
};
use deepctc_core::{Autoencoder, ModelConfig};
use rayon::prelude::*;

use crate::config::EvalPlan;
use crate::model_file;
use crate::CliError;

pub const SEED_ENV: &str = "DEEPCTC_SEED";

/// Number of checkpoints kept on disk.
pub const CHECKPOINTS_KEPT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSource {
    Explicit,
    Environment,
    Entropy,
}

/// `explicit`, else `DEEPCTC_SEED`, else a fresh seed from OS entropy.
pub fn resolve_seed(explicit: Option<u64>) -> Result<(u64, SeedSource), CliError> {
    if let Some(seed) = explicit {
        return Ok((seed, SeedSource::Explicit));
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, SeedSource::Environment))
            .map_err(|_| CliError::Config(format!("{SEED_ENV}: `{v}` is not an unsigned integer"))),
        Err(_) => Ok((entropy_seed(), SeedSource::Entropy)),
    }
}

fn entropy_seed() -> u64 {
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos()),
    );
    h.finish()
}

pub fn log_path(out: &Path) -> PathBuf {
    suffixed(out, ".log")
}

pub fn checkpoint_path(out: &Path, step: usize) -> PathBuf {
    suffixed(out, &format!(".step{step}.ckpt"))
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the training log and rotating checkpoints next to `out`.
///
/// The log has one whitespace-separated line per log interval:
/// `step loss loss_intech loss_ctc_1 ... loss_ctc_N`, with `-` for an absent
/// in-technology receiver.
pub struct FileObserver {
    out: PathBuf,
    log: BufWriter<File>,
    plan: TrainPlan,
    checkpoints: VecDeque<PathBuf>,
    pub echo: bool,
}

impl FileObserver {
    pub fn create(out: &Path, plan: &TrainPlan, receivers: usize) -> Result<Self, CliError> {
        let path = log_path(out);
        let file = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        let mut log = BufWriter::new(file);
        let mut header = String::from("step loss loss_intech");
        for i in 1..=receivers {
            header.push_str(&format!(" loss_ctc_{i}"));
        }
        writeln!(log, "{header}").map_err(|e| CliError::io(path.display(), e))?;
        Ok(Self {
            out: out.to_path_buf(),
            log,
            plan: plan.clone(),
            checkpoints: VecDeque::new(),
            echo: false,
        })
    }

    fn io(&self, e: std::io::Error) -> CliError {
        CliError::io(log_path(&self.out).display(), e)
    }

    pub fn finish(&mut self, wall_clock_secs: f64) -> Result<(), CliError> {
        writeln!(self.log, "# wall_clock_secs {wall_clock_secs:.3}").map_err(|e| self.io(e))?;
        self.log.flush().map_err(|e| self.io(e))
    }
}

pub fn format_log_entry(entry: &LogEntry) -> String {
    let mut line = format!("{} {:e} ", entry.step, entry.loss);
    match entry.intech {
        Some(l) => line.push_str(&format!("{l:e}")),
        None => line.push('-'),
    }
    for l in &entry.ctc {
        line.push_str(&format!(" {l:e}"));
    }
    line
}

impl TrainObserver for FileObserver {
    type Error = CliError;

    fn on_log(&mut self, entry: &LogEntry) -> Result<(), CliError> {
        let line = format_log_entry(entry);
        if self.echo {
            eprintln!("{line}");
        }
        writeln!(self.log, "{line}").map_err(|e| self.io(e))
    }

    fn on_checkpoint(&mut self, step: usize, model: &Autoencoder) -> Result<(), CliError> {
        self.log.flush().map_err(|e| self.io(e))?;
        let path = checkpoint_path(&self.out, step);
        model_file::save(model, Some(&self.plan), &path)?;
        self.checkpoints.push_back(path);
        while self.checkpoints.len() > CHECKPOINTS_KEPT {
            if let Some(old) = self.checkpoints.pop_front() {
                std::fs::remove_file(&old).map_err(|e| CliError::io(old.display(), e))?;
            }
        }
        Ok(())
    }
}

/// Trains, writing the log and checkpoints next to `out`, then saves the
/// final model to `out`.
pub fn train_to_file(
    config: ModelConfig,
    plan: &TrainPlan,
    out: &Path,
    echo: bool,
) -> Result<(Autoencoder, TrainReport), CliError> {
    let receivers = config.ctc_rx_grids.len();
    let mut observer = FileObserver::create(out, plan, receivers)?;
    observer.echo = echo;
    let start = Instant::now();
    let result = train_with(config, plan, &mut observer);
    let secs = start.elapsed().as_secs_f64();
    observer.finish(secs)?;
    let (model, mut report) = result.map_err(|e| match e {
        TrainError::Model(e) => CliError::from(e),
        TrainError::Observer(e) => e,
    })?;
    report.wall_clock_secs = Some(secs);
    model_file::save(&model, Some(plan), out)?;
    Ok((model, report))
}

/// A thread pool of `jobs` workers, or the available cores when `None`.
pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    if jobs == 0 {
        return Err(CliError::Config("jobs: must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("jobs: {e}")))
}

/// Evaluates every SNR point in parallel. The result equals the sequential
/// [`deepctc_core::eval::sweep`] because each point owns its seed.
pub fn parallel_sweep(
    model: &Autoencoder,
    plan: &EvalPlan,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<BlerCurve, CliError> {
    let grid = snr_grid(plan.snr_start, plan.snr_stop, plan.snr_step)?;
    let points = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, &snr)| estimate_bler(model, snr, plan.test_samples, point_seed(seed, i)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(BlerCurve::new(model.config().clone(), points)?)
}
