//! The `hobz` command-line tool.
//!
//! Every artifact starts with a provenance record (tool version, seed and a
//! config hash). The hash covers numeric settings and the bytes of every
//! input file but not output paths, so reruns with the same inputs produce
//! byte-identical files wherever they are written.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hobz::HobzError;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

mod commands;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "hobz", version, about = "Sequential-hurdle Bayesian tree ensembles for [0,1] outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sampler and write a posterior draw file.
    Fit(commands::FitArgs),
    /// Posterior expectations, predictive samples and fit metrics from a draw file.
    Predict(commands::PredictArgs),
    /// Per-individual treatment contrasts from two per-arm draw files.
    Pite(commands::PiteArgs),
    /// Permutation test for treatment-effect heterogeneity.
    Permtest(commands::PermtestArgs),
    /// Generate a synthetic dataset and its truth sidecar.
    Simulate(commands::SimulateArgs),
    /// Compare the tree ensemble with the linear baseline on simulated scenarios.
    Benchmark(commands::BenchmarkArgs),
}

/// Sampler settings shared by the fitting subcommands.
#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 200)]
    pub trees: usize,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 2500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Smallest number of training rows allowed in a leaf.
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
}

impl ChainArgs {
    pub fn schedule(&self) -> hobz::Schedule {
        hobz::Schedule {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
        }
    }

    pub fn hyperparams(&self) -> hobz::Hyperparams {
        let mut h = hobz::Hyperparams::new(self.trees);
        h.min_leaf_size = self.min_leaf;
        h
    }

    pub fn to_json(&self) -> Value {
        json!({
            "trees": self.trees,
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "min_leaf": self.min_leaf,
        })
    }
}

/// Failure surfaced to the shell.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Hobz(HobzError),
}

impl From<HobzError> for CliError {
    fn from(e: HobzError) -> Self {
        CliError::Hobz(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Hobz(HobzError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Hobz(HobzError::Io(e.into()))
        } else {
            CliError::Hobz(HobzError::format(e.to_string()))
        }
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Hobz(HobzError::Validation(_)) => 2,
            CliError::Hobz(HobzError::Numeric(_)) => 3,
            CliError::Hobz(HobzError::Format(_) | HobzError::Io(_)) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Hobz(HobzError::Validation(_)) => "validation",
            CliError::Hobz(HobzError::Numeric(_)) => "numeric",
            CliError::Hobz(HobzError::Format(_)) => "format",
            CliError::Hobz(HobzError::Io(_)) => "io",
        }
    }

    fn message(&self) -> String {
        let raw = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Hobz(e) => e.to_string(),
        };
        raw.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    /// The single line printed on failure.
    pub fn line(&self) -> String {
        format!("error code={} kind={}: {}", self.code(), self.kind(), self.message())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse `args` (program name first), run the subcommand and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            let err = usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return err.code();
        }
    };
    let out = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Pite(a) => commands::pite(&a),
        Command::Permtest(a) => commands::permtest(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
    };
    match out {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code()
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| io_context(e, path))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn io_context(e: std::io::Error, path: &Path) -> CliError {
    CliError::Hobz(HobzError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    )))
}

/// Identity of one run, embedded in every artifact it writes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: u64,
}

impl Provenance {
    /// Hash of the command name and its canonical JSON settings.
    pub fn new(command: &str, seed: u64, config: &Value) -> Self {
        let canon = json!({ "command": command, "config": config }).to_string();
        let d = Sha256::digest(canon.as_bytes());
        let config_hash = u64::from_be_bytes(d[..8].try_into().expect("8 bytes"));
        Provenance { seed, config_hash }
    }

    pub fn comment(&self) -> String {
        format!("hobz v{VERSION} seed={} config={:016x}", self.seed, self.config_hash)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "version": VERSION,
            "seed": self.seed,
            "config_hash": format!("{:016x}", self.config_hash),
        })
    }
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_context(e, dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_context(e, path))?))
}

pub fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| io_context(e, path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `base` with `suffix` appended to its file name.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
