use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mdiqkd_cli::commands;
use mdiqkd_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "mdiqkd",
    version,
    about = "Finite-key MDI-QKD secure rate with source intensity errors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Secure key rate at one distance, printed as JSON.
    Rate(Common),
    /// Distance sweep written as CSV.
    Scan(Common),
    /// Source optimization at one distance.
    Optimize(Common),
    /// Analytic channel model against the photon-level simulation.
    ValidateModel {
        #[command(flatten)]
        common: Common,
        /// Replace the dark-count probability of the analytic model only.
        #[arg(long, hide = true)]
        corrupt_dark_count: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `A:B:STEP` or a comma-separated list, in km.
    #[arg(long)]
    distances: Option<String>,
    /// Optimize the sources at every distance of a scan.
    #[arg(long, value_enum)]
    optimize: Option<Switch>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(&self.config)
            .map_err(|e| CliError::Config(format!("{}: {e}", self.config.display())))?;
        let mut cfg = RunConfig::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", self.config.display())),
            other => other,
        })?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(d) = &self.distances {
            cfg.distances = Some(d.clone());
        }
        if let Some(o) = self.optimize {
            cfg.optimize = matches!(o, Switch::On);
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_out(path: &Option<String>, text: &str) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(Path::new(p), text).map_err(|e| CliError::Io(format!("{p}: {e}")))?;
    }
    Ok(())
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn single_distance(cfg: &RunConfig) -> Result<f64, CliError> {
    match cfg.distance_list()?.as_slice() {
        [d] => Ok(*d),
        _ => Err(CliError::Config(
            "distances: this command takes a single distance".into(),
        )),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rate(common) => {
            let mut cfg = common.load()?;
            cfg.distance_km = single_distance(&cfg)?;
            let report = commands::rate_report(&cfg, cfg.distance_km)?;
            emit(&(commands::rate_json(&cfg, &report, false)? + "\n"))?;
            write_out(&cfg.out, &commands::rate_json(&cfg, &report, true)?)
        }
        Command::Scan(common) => {
            let cfg = common.load()?;
            let csv = commands::scan_csv(&cfg, &commands::scan(&cfg)?);
            match &cfg.out {
                Some(_) => write_out(&cfg.out, &csv),
                None => emit(&csv),
            }
        }
        Command::Optimize(common) => {
            let cfg = common.load()?;
            let d = single_distance(&cfg)?;
            let result = commands::optimize_at(&cfg, d)?;
            emit(&(commands::optimum_json(&cfg, d, &result)? + "\n"))?;
            write_out(&cfg.out, &commands::optimizer_log_csv(&result)?)
        }
        Command::ValidateModel {
            common,
            corrupt_dark_count,
        } => {
            let cfg = common.load()?;
            let checks = commands::model_checks(&cfg, corrupt_dark_count)?;
            let csv = commands::model_checks_csv(&cfg, &checks);
            emit(&csv)?;
            write_out(&cfg.out, &csv)?;
            match commands::mismatch(&checks, cfg.mc_sigma) {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdiqkd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
