//! Command-line front end: `aggregate`, `simulate`, `bounds` and `bench`.
//!
//! Exit codes: 0 on success, 2 for malformed input (arguments, CSV,
//! config schema, I/O), 3 when a rule or bound precondition is violated.

pub mod bench;
pub mod config;
pub mod metrics;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use byzsgd::training::Simulation;
use byzsgd::{AggregationRule, Error, GradientBatch};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONSTRAINT: i32 = 3;

/// Environment variable naming the default directory for metrics files.
pub const OUTPUT_DIR_ENV: &str = "BYZSGD_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "byzsgd", version, about = "Byzantine-resilient SGD toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a CSV matrix (one worker per line) and print the result.
    Aggregate {
        input: PathBuf,
        #[arg(long)]
        rule: String,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        c: Option<usize>,
    },
    /// Run a training simulation from a JSON config and write metrics CSV.
    Simulate {
        config: PathBuf,
        /// Average metrics over seeds 0..k.
        #[arg(long)]
        repeat: Option<usize>,
        /// Metrics path; overrides the config and the environment.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the error bounds for (m, q, b, V) as JSON.
    Bounds {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 0)]
        b: usize,
        #[arg(long = "v", default_value_t = 1.0)]
        v: f64,
    },
    /// Time aggregation rules over a grid of worker counts.
    Bench {
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<usize>,
        #[arg(long)]
        d: usize,
        #[arg(long, value_delimiter = ',', default_value = "mean,krum,trmean,phocas")]
        rules: Vec<String>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_constraint() { EXIT_CONSTRAINT } else { EXIT_INPUT },
            message: e.to_string(),
        }
    }
}

/// Parses a matrix with one worker row per line.
pub fn read_matrix(text: &str) -> Result<GradientBatch, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::input(format!("malformed CSV: {e}")))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Failure::input(format!("malformed CSV: line {}: `{f}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::input("malformed CSV: no rows"));
    }
    GradientBatch::from_rows(&rows).map_err(|e| Failure::input(format!("malformed CSV: {e}")))
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn aggregate(text: &str, rule: &AggregationRule) -> Result<String, Failure> {
    let batch = read_matrix(text)?;
    rule.validate(batch.m())?;
    Ok(join(&rule.apply(&batch)?.vector))
}

/// Where metrics go: `--output`, then the config's `output_path`, then
/// `$BYZSGD_OUTPUT_DIR/metrics.csv`, then `./metrics.csv`.
pub fn metrics_path(flag: Option<&Path>, cfg: &ExperimentConfig, env_dir: Option<OsString>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.run.output_path.clone())
        .unwrap_or_else(|| env_dir.map(PathBuf::from).unwrap_or_default().join("metrics.csv"))
}

/// Runs a config (averaging seeds `0..repeat` when given) and writes the
/// metrics file. Returns the summary line.
pub fn simulate(cfg: &ExperimentConfig, repeat: Option<usize>, out: &Path) -> Result<String, Failure> {
    let runs = match repeat {
        Some(0) => return Err(Failure::input("--repeat must be >= 1")),
        Some(k) => (0..k as u64)
            .map(|seed| Simulation::new(cfg.training(Some(seed)))?.run())
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![Simulation::new(cfg.training(None))?.run()?],
    };
    let records = metrics::average(&runs);
    metrics::write_atomic(out, &metrics::to_csv(&records))
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", out.display())))?;
    let last = records.last().expect("at least one round");
    let accuracy = last.test_accuracy.map_or("n/a".to_string(), |a| a.to_string());
    Ok(format!(
        "rounds={} runs={} final_loss={} final_accuracy={} metrics={}",
        last.round,
        runs.len(),
        last.train_loss,
        accuracy,
        out.display()
    ))
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::input(e.to_string());
    match cli.command {
        Command::Aggregate { input, rule, q, b, c } => {
            let rule = AggregationRule::from_name(&rule, q, b, c)?;
            let text = std::fs::read_to_string(&input)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", input.display())))?;
            writeln!(stdout, "{}", aggregate(&text, &rule)?).map_err(io)
        }
        Command::Simulate { config, repeat, output } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", config.display())))?;
            let cfg = ExperimentConfig::parse(&text).map_err(|e| Failure::input(format!("invalid config: {e}")))?;
            let path = metrics_path(output.as_deref(), &cfg, std::env::var_os(OUTPUT_DIR_ENV));
            writeln!(stdout, "{}", simulate(&cfg, repeat, &path)?).map_err(io)
        }
        Command::Bounds { m, q, b, v } => {
            let report = byzsgd::analysis::bound_report(m, q, b, v);
            writeln!(stdout, "{}", serde_json::to_string(&report).expect("report serializes")).map_err(io)
        }
        Command::Bench { m, d, rules, reps, seed } => {
            let rules = rules
                .iter()
                .map(|r| bench::BenchRule::parse(r))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = bench::run(&rules, &m, d, reps, seed)?;
            write!(stdout, "{}", bench::to_csv(&rows)).map_err(io)
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = if code == 0 {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}
