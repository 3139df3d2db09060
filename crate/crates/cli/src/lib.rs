//! The `vpdense` command line.
//!
//! Every command reads KITTI-layout data below `--data` and writes
//! deterministic outputs: files are named after frame and instance, manifests
//! are JSON lines in split order, and no timestamps or thread-dependent
//! orderings reach the output.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use vpdense_core::config::{ConfigError, PipelineConfig};
use vpdense_core::io::synth::SynthConfig;
use vpdense_core::io::IoError;
use vpdense_core::metrics::MetricsError;
use vpdense_core::pipeline::PipelineError;

mod commands;

pub use commands::{vp_ratio_report, VpRatioReport};

#[derive(Debug, Parser)]
#[command(name = "vpdense", version, about = "Visible-part depth ground truth and densification for lidar objects")]
pub struct Cli {
    /// Pipeline settings (TOML); defaults are used for missing keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set densify.max_iters=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Seed for commands that sample (`synth`).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Dataset root with velodyne/, calib/, label_2/, mask/ and split files.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub data: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate per-object visible depth ground truth for a split.
    GenGt {
        split: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the frustum foreground filter on one frame.
    Segment {
        frame: String,
        /// Write the JSON lines here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Densify every object of one frame by mesh deformation.
    Densify {
        frame: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// RMSE of predicted depth PNGs against ground-truth PNGs of the same name.
    Eval {
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
        #[arg(long, value_name = "DIR")]
        gt: PathBuf,
        /// Restrict to ground-truth object pixels; honours `eval.per_object`.
        #[arg(long)]
        foreground: bool,
        /// Also write the report here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Pool admission counts and the visible-part point ratio of a split.
    Stats {
        split: String,
        /// Manifest written by `gen-gt`; ground truth is regenerated without it.
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
    /// Run the oracle-based self checks.
    Selftest {
        /// Run only these checks (1-8).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Write a synthetic KITTI-layout split to `--data`.
    Synth {
        split: String,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        /// Scene settings (TOML).
        #[arg(long, value_name = "FILE")]
        scene: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Data(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Pipeline(_) | CliError::Data(_) => 1,
        }
    }
}

/// Reads the config file (if any) and applies `--set` overrides on top.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.display().to_string(),
                source,
            })?;
            text.parse().map_err(|e: toml::de::Error| CliError::Config(e.into()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override `{o}` is not KEY=VALUE")))?;
        let value: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("just parsed"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut parts: Vec<&str> = key.trim().split('.').collect();
        let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Usage(format!("empty key in `{o}`")))?;
        let mut node = &mut table;
        for p in parts {
            node = node
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| CliError::Usage(format!("`{p}` in `{o}` is not a section")))?;
        }
        node.insert(last.to_string(), value);
    }
    Ok(PipelineConfig::from_toml_str(&table.to_string())?)
}

pub(crate) fn load_scene(path: Option<&Path>) -> Result<SynthConfig, CliError> {
    let Some(p) = path else {
        return Ok(SynthConfig::default());
    };
    let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
        path: p.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config(e.into()))
}

/// Parses `argv` (including the program name) and runs the command, writing
/// reports to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let result = pool.install(|| commands::dispatch(cli, &cfg, &mut o, &mut e));
    out.write_all(&o)
        .and_then(|_| err.write_all(&e))
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))?;
    result
}
