//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage, parse or validation errors, 2 when
//! the variance target cannot be met.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::allocator::{waterfill, SolverConfig};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::model::{AllocationResult, ChannelRealization, NetworkRealization, SensorProfile};
use crate::par::{with_threads, Execution};
use crate::simkit::{
    book_applies, cell_key, monte_carlo, train_codebook, write_csv, SimulationConfig, SweepSummary,
};
use config::{load_config, parse_document, read, CliConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "blue-power",
    version,
    about = "Power allocation and limited-feedback codebooks for distributed BLUE estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal allocation for one network realization.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// JSON file with `sensors` and `channels`.
        #[arg(long)]
        channels: PathBuf,
        /// Variance target; defaults to the single entry of `d0_grid`.
        #[arg(long)]
        d0: Option<f64>,
    },
    /// Train a Lloyd codebook on optimal allocations.
    TrainCodebook {
        #[command(flatten)]
        common: Common,
        /// Feedback bits; defaults to `codebook_bits`.
        #[arg(long)]
        bits: Option<u32>,
        /// Variance target; defaults to the single entry of `d0_grid`.
        #[arg(long)]
        d0: Option<f64>,
        /// Sensor count; defaults to the single entry of `k`.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Monte-Carlo sweep over the configured K and D0 values.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Summary JSON; defaults to the CSV path with extension `summary.json`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Compare full feedback with one or more codebooks on shared realizations.
    EvalFeedback {
        #[command(flatten)]
        common: Common,
        #[arg(long = "codebook", required = true)]
        codebooks: Vec<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleTarget { .. } | Error::Infeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Allocate {
            common,
            channels,
            d0,
        } => {
            let cfg = prepare(&common)?;
            allocate(&cfg, &channels, d0)
        }
        Command::TrainCodebook {
            common,
            bits,
            d0,
            k,
        } => {
            let cfg = prepare(&common)?;
            with_threads(common.threads, || cmd_train_codebook(&cfg, bits, d0, k))
        }
        Command::Simulate {
            common,
            codebook,
            summary,
        } => {
            let cfg = prepare(&common)?;
            with_threads(common.threads, || {
                cmd_simulate(&cfg, codebook.as_deref(), summary)
            })
        }
        Command::EvalFeedback {
            common,
            codebooks,
            summary,
        } => {
            let cfg = prepare(&common)?;
            with_threads(common.threads, || {
                cmd_eval_feedback(&cfg, &codebooks, summary)
            })
        }
    }
}

fn prepare(common: &Common) -> Result<CliConfig> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if common.threads == Some(0) {
        return Err(Error::InvalidParameter {
            name: "threads",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    Ok(cfg)
}

fn single<T: Copy>(flag: Option<T>, values: &[T], name: &'static str) -> Result<T> {
    match (flag, values) {
        (Some(v), _) => Ok(v),
        (None, [v]) => Ok(*v),
        _ => Err(Error::InvalidParameter {
            name,
            value: values.len() as f64,
            reason: "the configuration lists several values; pick one with the flag",
        }),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = output(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::Format(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Contents of the `--channels` file for `allocate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationFile {
    pub sensors: Vec<SensorProfile>,
    pub channels: Vec<ChannelRealization>,
}

/// Output of `allocate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationReport {
    pub d0: f64,
    pub sigma_theta2: f64,
    #[serde(flatten)]
    pub result: AllocationResult,
}

fn allocate(cfg: &CliConfig, channels: &Path, d0: Option<f64>) -> Result<()> {
    let d0 = single(d0, &cfg.sim.d0_grid, "d0")?;
    let file: RealizationFile = parse_document(&read(channels)?, &channels.display().to_string())?;
    let net = NetworkRealization::new(file.sensors, file.channels, cfg.sim.sigma_theta2, d0)?;
    let result = waterfill(&net, &SolverConfig::default())?;
    let report = AllocationReport {
        d0,
        sigma_theta2: cfg.sim.sigma_theta2,
        result,
    };
    write_text(cfg.out.as_deref(), &to_json(&report)?)
}

fn cmd_train_codebook(
    cfg: &CliConfig,
    bits: Option<u32>,
    d0: Option<f64>,
    k: Option<usize>,
) -> Result<()> {
    let bits = bits
        .or(cfg.sim.codebook_bits)
        .ok_or(Error::InvalidParameter {
            name: "bits",
            value: 0.0,
            reason: "pass --bits or set codebook_bits",
        })?;
    if !(1..=24).contains(&bits) {
        return Err(Error::InvalidParameter {
            name: "bits",
            value: bits as f64,
            reason: "must be between 1 and 24",
        });
    }
    let d0 = single(d0, &cfg.sim.d0_grid, "d0")?;
    let k = single(k, &cfg.sim.k, "k")?;
    let sim = SimulationConfig {
        k: vec![k],
        ..cfg.sim.clone()
    };
    let book = train_codebook(&sim, k, d0, bits, Execution::Parallel)?;
    if book.meta.skipped > 0 {
        log::warn!(
            "{} of {} training realizations were infeasible at D0 = {d0} and were skipped",
            book.meta.skipped,
            book.meta.m
        );
    }
    log::info!(
        "trained {} codewords in {} iterations, distortion {:e}",
        book.len(),
        book.meta.iterations,
        book.meta.final_distortion
    );
    write_text(cfg.out.as_deref(), &book.to_json()?)
}

fn load_book(path: &Path) -> Result<Codebook> {
    Codebook::from_json(&read(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn cmd_simulate(cfg: &CliConfig, codebook: Option<&Path>, summary: Option<PathBuf>) -> Result<()> {
    let book = codebook.map(load_book).transpose()?;
    let out = monte_carlo(&cfg.sim, book.as_ref(), Execution::Parallel)?;
    write_records(cfg.out.as_deref(), &out.records)?;
    let summary_path = summary
        .or_else(|| cfg.summary.clone())
        .or_else(|| cfg.out.as_ref().map(|p| p.with_extension("summary.json")));
    if let Some(p) = summary_path {
        write_text(Some(&p), &to_json(&out.summary)?)?;
    }
    report_infeasible(&out.summary);
    Ok(())
}

fn write_records(path: Option<&Path>, records: &[crate::simkit::TrialRecord]) -> Result<()> {
    let mut w = output(path)?;
    write_csv(&mut w, records)?;
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

fn report_infeasible(summary: &SweepSummary) {
    for (key, cell) in summary {
        if cell.infeasible > 0 {
            log::warn!(
                "{key}: {} of {} trials infeasible",
                cell.infeasible,
                cell.trials
            );
        }
    }
}

/// Mean cost per `(d0, k)` cell: full feedback followed by one column per
/// codebook, empty where a codebook does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRow {
    pub d0: f64,
    pub k: usize,
    pub full: Option<f64>,
    pub quantized: Vec<Option<f64>>,
}

fn cmd_eval_feedback(cfg: &CliConfig, paths: &[PathBuf], summary: Option<PathBuf>) -> Result<()> {
    let books = paths
        .iter()
        .map(|p| load_book(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(b) = books.iter().find(|b| b.k() != books[0].k()) {
        return Err(Error::DimensionMismatch {
            what: "codebook K",
            got: b.k(),
            expected: books[0].k(),
        });
    }
    let full = monte_carlo(&cfg.sim, None, Execution::Parallel)?;
    let passes = books
        .iter()
        .map(|b| monte_carlo(&cfg.sim, Some(b), Execution::Parallel))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &k in &cfg.sim.k {
        for &d0 in &cfg.sim.d0_grid {
            let quantized = books
                .iter()
                .zip(&passes)
                .map(|(b, pass)| {
                    if !book_applies(b, k, d0) {
                        return None;
                    }
                    pass.summary
                        .get(&cell_key(d0, k, Some(b.bits())))
                        .and_then(|c| c.mean_cost_quantized)
                })
                .collect();
            rows.push(FeedbackRow {
                d0,
                k,
                full: full.summary[&cell_key(d0, k, None)].mean_cost_full,
                quantized,
            });
        }
    }

    let mut w = csv::WriterBuilder::new().from_writer(output(cfg.out.as_deref())?);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut header = vec!["d0".to_string(), "k".to_string(), "full".to_string()];
    header.extend(books.iter().map(|b| format!("l{}", b.bits())));
    w.write_record(&header).map_err(fmt)?;
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in &rows {
        let mut fields = vec![row.d0.to_string(), row.k.to_string(), cell(row.full)];
        fields.extend(row.quantized.iter().map(|&q| cell(q)));
        w.write_record(&fields).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;

    if let Some(p) = summary.or_else(|| cfg.summary.clone()) {
        let mut merged = full.summary.clone();
        for pass in &passes {
            merged.extend(pass.summary.clone());
        }
        write_text(Some(&p), &to_json(&merged)?)?;
    }
    report_infeasible(&full.summary);
    Ok(())
}
