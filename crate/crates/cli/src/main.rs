use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chgrow_cli::config::{parse_sweep, read_json};
use chgrow_cli::{
    cmd_check_estimates, cmd_mms, cmd_plot, cmd_run, cmd_sweep, cmd_validate_coeff, parse_config, CliError, Overrides,
    StudyConfig,
};
use chgrow_core::RunStatus;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chgrow", version, about = "Generalized Cahn-Hilliard solver with proliferation")]
struct Cli {
    /// JSON config document
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (defaults to $CHGROW_OUT/<config name>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep points
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// RNG seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run even when the coefficient fails the hypotheses
    #[arg(long, global = true)]
    override_hypotheses: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: snapshots, diagnostics, estimate report
    Run,
    /// Manufactured-solution convergence study
    Mms,
    /// Parameter sweep over independent runs
    Sweep,
    /// Recompute estimate checks of run directories
    CheckEstimates { dirs: Vec<PathBuf> },
    /// SVG plots of run directories
    Plot { dirs: Vec<PathBuf> },
    /// Check the coefficient hypotheses
    ValidateCoeff {
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn config_path(cli: &Cli) -> Result<&Path, CliError> {
    cli.config.as_deref().ok_or_else(|| CliError::Config("--config PATH is required".into()))
}

/// `--out`, then the document's own setting, then `$CHGROW_OUT/<name>`,
/// then `./chgrow-out/<name>`.
fn output_dir(cli: &Cli, from_doc: Option<&Path>, name: &str) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    if let Some(d) = from_doc {
        return d.to_path_buf();
    }
    let root = std::env::var_os("CHGROW_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("chgrow-out"));
    root.join(name)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string()
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let overrides = Overrides { override_hypotheses: cli.override_hypotheses, seed: cli.seed };
    match &cli.command {
        Command::Run => {
            let path = config_path(cli)?;
            let cfg = parse_config(path, &overrides)?;
            let out = output_dir(cli, cfg.output_dir.as_deref(), &stem(path));
            let outcome = cmd_run(&cfg, &out)?;
            println!("wrote {}", out.display());
            if let RunStatus::Failed { step, t, error } = &outcome.status {
                eprintln!("numerical failure at step {step} (t = {t}): {error}; partial trajectory kept");
                return Ok(3);
            }
            Ok(0)
        }
        Command::Mms => {
            let path = config_path(cli)?;
            let study: StudyConfig = read_json(path)?;
            let out = output_dir(cli, None, &stem(path));
            let report = cmd_mms(&study, &out)?;
            for (r, e) in report.resolutions.iter().zip(&report.errors) {
                println!("n = {:5}  dt = {:.3e}  error = {:.6e}", r.n, r.dt, e);
            }
            if let Some(p) = report.fitted_spatial_order {
                println!("spatial order {p:.4}");
            }
            if let Some(p) = report.fitted_temporal_order {
                println!("temporal order {p:.4}");
            }
            Ok(0)
        }
        Command::Sweep => {
            let path = config_path(cli)?;
            let sweep = parse_sweep(path, &overrides)?;
            let out = output_dir(cli, sweep.base.output_dir.as_deref(), &stem(path));
            let outcome = cmd_sweep(&sweep, &out, cli.workers)?;
            for p in &outcome.points {
                println!("{} value={} {}{}", p.dir, p.value, p.status, p.message.as_ref().map(|m| format!(": {m}")).unwrap_or_default());
            }
            Ok(outcome.exit_code())
        }
        Command::CheckEstimates { dirs } => {
            if dirs.is_empty() {
                return Err(CliError::Config("check-estimates needs at least one run directory".into()));
            }
            let out = cli.out.clone().unwrap_or_else(|| dirs[0].join("check"));
            let summary = cmd_check_estimates(dirs, &out)?;
            for line in summary.lines() {
                println!("{line}");
            }
            Ok(0)
        }
        Command::Plot { dirs } => {
            if dirs.is_empty() {
                return Err(CliError::Config("plot needs at least one run directory".into()));
            }
            let out = cli.out.clone().unwrap_or_else(|| dirs[0].join("plots"));
            for f in cmd_plot(dirs, &out)? {
                println!("wrote {}", out.join(f).display());
            }
            Ok(0)
        }
        Command::ValidateCoeff { range, samples } => {
            let path = config_path(cli)?;
            let range = range.as_ref().map(|r| [r[0], r[1]]);
            let report = cmd_validate_coeff(path, range, *samples)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            if report.passed || cli.override_hypotheses {
                Ok(0)
            } else {
                Err(CliError::Hypothesis(report.violation_messages()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
