//! Command-line front end: every analysis as a subcommand reading a JSON
//! [`RunConfig`](config::RunConfig) and writing CSV or JSON artifacts.
//!
//! Exit codes are 0 on success, 1 for invalid input, 2 when acceptance
//! checks fail and 3 for numerical failures. Errors are written to stderr as
//! a JSON object `{error, message, exit_code}`.

pub mod config;
pub mod corpus;
pub mod figures;
pub mod run;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::series::fmt_num;
use config::{Analysis, RunConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::ChecksFailed(_) => 2,
            CliError::Model(crate::Error::Numerical(_)) => 3,
            CliError::Model(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::ChecksFailed(_) => "check_failure",
            CliError::Model(e) => match e {
                crate::Error::InvalidInput(_) => "invalid_input",
                crate::Error::Singular(_) => "singular",
                crate::Error::Infeasible(_) => "infeasible",
                crate::Error::PolarityUndefined(_) => "polarity_undefined",
                crate::Error::TuneInfeasible(_) => "tune_infeasible",
                crate::Error::ZeroIntegralGain => "zero_integral_gain",
                crate::Error::Numerical(_) => "numerical",
            },
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Obj<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&Obj { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() })
            .expect("error object serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; artifacts go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureSet {
    #[value(alias = "paper-figures")]
    Figures,
}

#[derive(Debug, Parser)]
#[command(name = "wpr", version, about = "Wireless power receiver models, loop analysis and PI tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium and linearisation.
    Model(Common),
    /// Control-to-output transfer function.
    Tf(Common),
    /// Zeros and poles of the plant.
    Zeros(Common),
    /// Frequency response of the plant or loop gain.
    Bode(Common),
    /// Nyquist curve and encirclement count of the loop gain.
    Nyquist(Common),
    /// Crossover, gain and phase margins.
    Margins(Common),
    /// PI design for a crossover or a margin pair.
    Tune(Common),
    /// Averaged closed-loop simulation.
    Simulate(Common),
    /// Switching-cycle simulation.
    Switched(Common),
    /// Sine-injection frequency response of the switched model.
    Sysid(Common),
    /// Data behind the published figures.
    Report {
        #[arg(value_enum, default_value = "figures")]
        set: FigureSet,
        #[command(flatten)]
        common: Common,
    },
    /// Acceptance checks and corpus regression.
    Validate {
        /// Corpus directory; defaults to the bundled corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// A file produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Self { name: name.into(), contents: contents.into() }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    match &common.config {
        Some(p) => RunConfig::from_path(p),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(common: &Common, cfg: &RunConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.out_dir.clone())
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    let (analysis, common) = match cmd {
        Command::Model(c) => (Analysis::Model, c),
        Command::Tf(c) => (Analysis::Tf, c),
        Command::Zeros(c) => (Analysis::Zeros, c),
        Command::Bode(c) => (Analysis::Bode, c),
        Command::Nyquist(c) => (Analysis::Nyquist, c),
        Command::Margins(c) => (Analysis::Margins, c),
        Command::Tune(c) => (Analysis::Tune, c),
        Command::Simulate(c) => (Analysis::Simulate, c),
        Command::Switched(c) => (Analysis::Switched, c),
        Command::Sysid(c) => (Analysis::Sysid, c),
        Command::Report { common, .. } => (Analysis::Report, common),
        Command::Validate { corpus, common } => {
            let dir = corpus.clone().unwrap_or_else(corpus::default_dir);
            let (artifact, passed) = corpus::validate(&dir, common.format)?;
            emit(common.out.as_deref(), &[artifact])?;
            return if passed { Ok(()) } else { Err(CliError::ChecksFailed("one or more checks failed".into())) };
        }
    };
    let cfg = load(common)?;
    cfg.check_analysis(analysis)?;
    let format = common.format.unwrap_or(if analysis == Analysis::Report { Format::Csv } else { Format::Json });
    let artifacts = if analysis == Analysis::Report {
        figures::render(&cfg, format)?
    } else {
        run::artifacts(&run::run(analysis, &cfg)?, format)
    };
    emit(out_dir(common, &cfg).as_deref(), &artifacts)
}

/// Writes artifacts into `dir` (temp file then rename), or to stdout.
pub fn emit(dir: Option<&Path>, artifacts: &[Artifact]) -> Result<(), CliError> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
            for a in artifacts {
                write_atomic(&dir.join(&a.name), &a.contents)?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let multi = artifacts.len() > 1;
            for a in artifacts {
                if multi {
                    let _ = writeln!(lock, "# file: {}", a.name);
                }
                let _ = lock.write_all(a.contents.as_bytes());
            }
        }
    }
    Ok(())
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Flattens a JSON value into `pointer,value` CSV rows.
pub fn flatten_csv(value: &serde_json::Value) -> String {
    let mut out = String::from("pointer,value\n");
    flatten_into(value, String::new(), &mut out);
    out
}

fn flatten_into(v: &serde_json::Value, pointer: String, out: &mut String) {
    use serde_json::Value;
    let leaf = |out: &mut String, text: String| {
        out.push_str(&csv_field(if pointer.is_empty() { "/" } else { &pointer }));
        out.push(',');
        out.push_str(&csv_field(&text));
        out.push('\n');
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let k = k.replace('~', "~0").replace('/', "~1");
                flatten_into(x, format!("{pointer}/{k}"), out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten_into(x, format!("{pointer}/{i}"), out);
            }
        }
        Value::Null => leaf(out, "null".into()),
        Value::Bool(b) => leaf(out, b.to_string()),
        Value::Number(n) => leaf(out, if n.is_f64() { fmt_num(n.as_f64().unwrap()) } else { n.to_string() }),
        Value::String(s) => leaf(out, s.clone()),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Model(crate::Error::InvalidInput("x".into())).exit_code(), 1);
        assert_eq!(CliError::ChecksFailed("x".into()).exit_code(), 2);
        assert_eq!(CliError::Model(crate::Error::Numerical("x".into())).exit_code(), 3);
        let v: serde_json::Value = serde_json::from_str(&CliError::Config("bad".into()).to_json()).unwrap();
        assert_eq!(v["exit_code"], 1);
        assert_eq!(v["error"], "config");
    }

    #[test]
    fn flattening_uses_pointers() {
        let v = serde_json::json!({"a": {"b/c": [1.5, null]}, "s": "x,y", "n": 3});
        let csv = flatten_csv(&v);
        assert!(csv.contains("/a/b~1c/0,1.50000000e0\n"));
        assert!(csv.contains("/a/b~1c/1,null\n"));
        assert!(csv.contains("/s,\"x,y\"\n"));
        assert!(csv.contains("/n,3\n"));
    }

    #[test]
    fn cli_parses_figure_alias() {
        let c = Cli::try_parse_from(["wpr", "report", "paper-figures", "--out", "x"]).unwrap();
        assert!(matches!(c.command, Command::Report { set: FigureSet::Figures, .. }));
        assert!(Cli::try_parse_from(["wpr", "bode", "--format", "xml"]).is_err());
    }
}
