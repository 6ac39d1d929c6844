//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 a computation rejected its input (the error name
//! is printed), 2 usage or I/O failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pulsekit_core::identity::{GalleryParams, IdentityError, DEFAULT_DIM};
use pulsekit_core::report::{analyze_trace, canonical_json, extract_pulse};
use pulsekit_core::synth::{synth_trace, SynthParams};
use pulsekit_core::trace::serialize_trace;
use pulsekit_core::{EmbeddingGallery, Error};

use crate::config::{parse_band, AnalysisOverrides, FileConfig};
use crate::server::{self, ServiceState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const GALLERY_ENV: &str = "VITALS_GALLERY";
const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "pulsekit", version, about = "Remote-PPG vitals and face-embedding identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the full vitals report for a trace
    Compute {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Report destination, `-` for standard output
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Extract the pulse signal only
    Pos {
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        out: String,
    },
    /// Generate a synthetic trace with a ground-truth sidecar
    Synth {
        #[arg(long)]
        hr: f64,
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        fs: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.01)]
        amplitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
        /// Ground-truth JSON path; defaults to `<out stem>.truth.json`
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Add an embedding to a gallery file, creating it if needed
    Enroll {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        subject: String,
        /// JSON array, or `@path` to a file holding one
        #[arg(long)]
        vector: String,
        /// Dimension of a newly created gallery
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Match a probe embedding against a gallery
    Identify {
        #[arg(long, env = GALLERY_ENV)]
        gallery: PathBuf,
        /// JSON array, or `@path` to a file holding one
        #[arg(long)]
        probe: String,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Run the batch HTTP service
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, env = GALLERY_ENV)]
        gallery: Option<PathBuf>,
        #[command(flatten)]
        analysis: ServeAnalysisArgs,
    },
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    tuning: ServeAnalysisArgs,
}

#[derive(Debug, Args)]
struct ServeAnalysisArgs {
    /// Resampling rate in Hz (default: estimated from the trace)
    #[arg(long)]
    fs: Option<f64>,
    /// POS window length in seconds
    #[arg(long)]
    window: Option<f64>,
    /// Pulse band as `lo:hi` in Hz
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ServeAnalysisArgs {
    fn file_config(&self) -> Result<FileConfig, Failure> {
        self.config.as_deref().map(FileConfig::load).transpose().map(Option::unwrap_or_default).map_err(Failure::Usage)
    }

    fn overrides(&self, file: &FileConfig) -> Result<AnalysisOverrides, Failure> {
        AnalysisOverrides { fs: self.fs, window: self.window, stride: None, band: self.band }
            .with_file(file)
            .map_err(Failure::Usage)
    }
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Identity(IdentityError::Io(msg)) => Failure::Usage(msg),
            other => Failure::Domain(other),
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(dest: &str, contents: &str) -> Result<(), Failure> {
    if dest == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(contents.as_bytes()).and_then(|_| stdout.flush())
    } else {
        fs::write(dest, contents)
    }
    .map_err(|e| Failure::Usage(format!("cannot write {dest}: {e}")))
}

fn read_vector(arg: &str) -> Result<Vec<f64>, Failure> {
    let text = match arg.strip_prefix('@') {
        Some(path) => read_file(Path::new(path))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("vector must be a JSON array of numbers: {e}")))
}

fn load_gallery(path: &Path) -> Result<EmbeddingGallery, Failure> {
    if !path.exists() {
        return Err(Failure::Usage(format!("gallery {} does not exist", path.display())));
    }
    Ok(EmbeddingGallery::load(path).map_err(Error::from)?)
}

fn sidecar_path(out: &str) -> PathBuf {
    Path::new(out).with_extension("truth.json")
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Compute { analysis, out } => {
            let file = analysis.tuning.file_config()?;
            let cfg = analysis.tuning.overrides(&file)?.build().map_err(Failure::Usage)?;
            let document = read_file(&analysis.trace)?;
            let report = analyze_trace(&document, &cfg)?;
            write_output(&out, &canonical_json(&report))
        }
        Command::Pos { analysis, out } => {
            let file = analysis.tuning.file_config()?;
            let cfg = analysis.tuning.overrides(&file)?.build().map_err(Failure::Usage)?;
            let document = read_file(&analysis.trace)?;
            let pulse = extract_pulse(&document, &cfg)?;
            write_output(&out, &pulse.to_csv())
        }
        Command::Synth { hr, duration, fs, noise, amplitude, seed, out, truth } => {
            let params = SynthParams { hr_bpm: hr, duration_s: duration, fs, amplitude_frac: amplitude, noise_sigma_frac: noise, seed };
            let (trace, ground_truth) = synth_trace(&params).map_err(Error::from)?;
            write_output(&out, &serialize_trace(&trace))?;
            let truth_path = truth.or_else(|| (out != "-").then(|| sidecar_path(&out)));
            if let Some(path) = truth_path {
                let text = serde_json::to_string_pretty(&ground_truth).expect("ground truth serializes");
                fs::write(&path, text + "\n")
                    .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Enroll { gallery, subject, vector, dim, k, tau } => {
            let v = read_vector(&vector)?;
            let mut g = if gallery.exists() {
                load_gallery(&gallery)?
            } else {
                EmbeddingGallery::new(dim, GalleryParams::default()).map_err(Error::from)?
            };
            if k.is_some() || tau.is_some() {
                let current = g.params();
                let params = GalleryParams { k: k.unwrap_or(current.k), tau: tau.unwrap_or(current.tau) };
                g.set_params(params).map_err(Error::from)?;
            }
            g.enroll(&subject, &v).map_err(Error::from)?;
            g.save(&gallery).map_err(Error::from)?;
            eprintln!("enrolled `{subject}`; gallery holds {} records", g.len());
            Ok(())
        }
        Command::Identify { gallery, probe, out } => {
            let g = load_gallery(&gallery)?;
            let m = g.identify(&read_vector(&probe)?).map_err(Error::from)?;
            write_output(&out, &canonical_json(&m))
        }
        Command::Serve { bind, gallery, analysis } => {
            let file = analysis.file_config()?;
            let cfg = analysis.overrides(&file)?.build().map_err(Failure::Usage)?;
            let gallery = gallery.or(file.gallery.clone()).map(|p| load_gallery(&p)).transpose()?;
            let bind = bind.or(file.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.to_string());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Usage(e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .map_err(|e| Failure::Usage(format!("cannot bind {bind}: {e}")))?;
                eprintln!("listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or(bind));
                server::serve(listener, ServiceState { analysis: cfg, gallery })
                    .await
                    .map_err(|e| Failure::Usage(e.to_string()))
            })
        }
    }
}

/// Runs one CLI invocation and returns its exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {}: {e}", e.name());
            EXIT_DOMAIN
        }
    }
}
