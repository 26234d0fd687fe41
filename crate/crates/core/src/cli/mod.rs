//! Command-line front end: `overdx <subcommand> [flags]`.

pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
use stages::{Context, Input};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "overdx",
    version,
    about = "Flag potential overdiagnosis by clustering treatment trajectories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (JSON); unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Event log, CSV or XES (by extension).
    #[arg(long, global = true)]
    pub events: Option<PathBuf>,
    /// Case attributes CSV.
    #[arg(long, global = true)]
    pub attrs: Option<PathBuf>,
    /// Predictions CSV overriding y_pred (`case_id,score` and/or `case_id,y_pred`).
    #[arg(long, global = true)]
    pub predictions: Option<PathBuf>,
    /// Feature table CSV for `classify` (`case_id,label,f1..fn`).
    #[arg(long, global = true)]
    pub features: Option<PathBuf>,
    /// Clustering document for `analyze` and `export-dot`
    /// [default: <out>/clustering.json].
    #[arg(long, global = true)]
    pub clustering: Option<PathBuf>,
    /// Output directory [default: overdx_out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for distance and fitness evaluation (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for sampling, training and generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write tabular CSV artifacts.
    #[arg(long, global = true)]
    pub emit_csv: bool,
    /// Reject activities outside the vocabulary instead of adding them.
    #[arg(long, global = true)]
    pub strict_vocab: bool,
    /// Record a generation time in outputs: `now` or a fixed RFC 3339 value.
    /// Omitted by default so reruns are byte-identical.
    #[arg(long, global = true)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse events and attributes and keep the TP/TN cohort.
    Ingest,
    /// List trace variants and repeat-based features.
    Variants,
    /// Train the baseline classifier and write out-of-fold predictions.
    Classify,
    /// Cluster trace variants.
    Cluster,
    /// Test outcomes per cluster and flag potential overdiagnosis.
    Analyze,
    /// ingest, cluster and analyze in sequence.
    Report,
    /// Generate a synthetic cohort with a planted overdiagnosed subgroup.
    Synth,
    /// Write the process model of one cluster as Graphviz DOT.
    ExportDot {
        #[arg(long)]
        cluster: usize,
    },
}

const DEFAULT_OUT: &str = "overdx_out";

fn required(flag: Option<&PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(from_config.as_ref())
        .cloned()
        .ok_or_else(|| Error::Invalid(format!("--{name} is required")))
}

fn generated_at(flag: &Option<String>) -> Result<Option<String>> {
    match flag.as_deref() {
        None => Ok(None),
        Some("now") => Ok(Some(crate::eventlog::format_timestamp(&chrono::Utc::now()))),
        Some(fixed) => crate::eventlog::parse_timestamp(fixed)
            .map(|t| Some(crate::eventlog::format_timestamp(&t)))
            .ok_or_else(|| Error::Invalid(format!("--timestamp: cannot parse {fixed:?}"))),
    }
}

fn read_optional(path: Option<&PathBuf>) -> Result<Option<Input>> {
    path.map(|p| Input::read(p)).transpose()
}

/// Runs a parsed command line and returns the paths written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.synth.seed = config.seed;
    if cli.strict_vocab {
        config.cohort.strict_vocabulary = true;
    }
    config.validate()?;
    let paths = config.paths.clone();
    let out = cli
        .out
        .clone()
        .or(paths.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let ctx = Context {
        config,
        out: out.clone(),
        emit_csv: cli.emit_csv,
        generated_at: generated_at(&cli.timestamp)?,
    };
    let events = || Input::read(&required(cli.events.as_ref(), &paths.events, "events")?);
    let attrs = || Input::read(&required(cli.attrs.as_ref(), &paths.attrs, "attrs")?);
    let predictions = || read_optional(cli.predictions.as_ref().or(paths.predictions.as_ref()));
    let clustering = || {
        Input::read(
            &cli.clustering
                .clone()
                .unwrap_or_else(|| out.join(stages::CLUSTERING_JSON)),
        )
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Ingest => stages::ingest(&ctx, &events()?, &attrs()?, predictions()?.as_ref()),
        Command::Variants => stages::variants_step(&ctx, &events()?),
        Command::Classify => {
            let features = required(cli.features.as_ref(), &paths.features, "features")?;
            stages::classify_step(&ctx, &Input::read(&features)?)
        }
        Command::Cluster => stages::cluster_step(&ctx, &events()?),
        Command::Analyze => stages::analyze_step(&ctx, &clustering()?, &attrs()?),
        Command::Report => {
            stages::report_step(&ctx, &events()?, &attrs()?, predictions()?.as_ref())
        }
        Command::Synth => stages::synth_step(&ctx),
        Command::ExportDot { cluster } => {
            let dot = stages::export_dot(&clustering()?, *cluster)?;
            if cli.out.is_some() || ctx.config.paths.out.is_some() {
                std::fs::create_dir_all(&out)?;
                let path = out.join(format!("cluster_{cluster}.dot"));
                std::fs::write(&path, dot)?;
                Ok(vec![path])
            } else {
                std::io::stdout().write_all(dot.as_bytes())?;
                Ok(Vec::new())
            }
        }
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code: 0 on success, 1 for input or
/// validation errors, 2 for internal errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Logging goes to stderr, filtered by `OVERDX_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("OVERDX_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}
