use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subsidy_cli::commands::{self, DiagnoseArgs, EstimateArgs};
use subsidy_cli::diagnose::{self, DiagnoseOptions, Diagnostic};
use subsidy_cli::estimate::{EstimateOptions, Method};
use subsidy_cli::{CliError, Result};
use subsidy_core::diagnostics::HumpOptions;
use subsidy_core::panel::Outcome;

/// Environment variable that fixes the worker thread count.
const THREADS_ENV: &str = "SUBSIDY_THREADS";

#[derive(Parser)]
#[command(name = "subsidy", version, about = "Simulate, estimate and diagnose subsidy-program panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from a config and write it with its ground truth.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an estimator to a panel CSV.
    Estimate(EstimateCli),
    /// Run robustness diagnostics on a panel or consortium CSV.
    Diagnose(DiagnoseCli),
    /// Run a named end-to-end scenario.
    Replicate {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EstimateCli {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// pols, twfe-cont, twfe-bin or dml.
    #[arg(long, default_value = "twfe-cont")]
    method: String,
    /// Outcome column; repeat or comma-separate. Default: all three.
    #[arg(long, value_delimiter = ',')]
    outcome: Vec<String>,
    #[arg(long)]
    k_folds: Option<usize>,
    /// Seed for DML fold assignment and forests.
    #[arg(long)]
    seed: Option<u64>,
    /// Trees per DML nuisance forest.
    #[arg(long)]
    trees: Option<usize>,
    /// TWFE numeric controls, comma-separated; empty for none.
    #[arg(long)]
    covariates: Option<String>,
    /// TWFE categorical dummy sets, comma-separated; empty for none.
    #[arg(long)]
    fixed_effects: Option<String>,
}

#[derive(Args)]
struct DiagnoseCli {
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Consortium-year CSV for the hump diagnostic.
    #[arg(long)]
    consortia: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Diagnostics to run, comma-separated: manski, oster, cooks, support, forms, hump.
    #[arg(long, value_delimiter = ',')]
    battery: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    outcome: Vec<String>,
    /// `start:stop:step` or a comma list.
    #[arg(long)]
    g_grid: Option<String>,
    #[arg(long)]
    r2_max: Option<f64>,
    /// `beta_tilde,beta_hat,r2_tilde,r2_hat[,r2_max]`.
    #[arg(long, allow_hyphen_values = true)]
    oster_inputs: Option<String>,
    /// Common-support range `lo,hi` in Mbps.
    #[arg(long, allow_hyphen_values = true)]
    support_range: Option<String>,
    #[arg(long)]
    loess_span: Option<f64>,
}

fn parse_outcome(s: &str) -> Result<Outcome> {
    let t = s.trim();
    Outcome::ALL
        .into_iter()
        .find(|o| o.column() == t || o.column().trim_start_matches("ln_") == t)
        .ok_or_else(|| CliError::Usage(format!("unknown outcome {t:?}; expected ln_price, ln_subsidy or ln_netcost")))
}

fn parse_outcomes(v: &[String]) -> Result<Vec<Outcome>> {
    if v.is_empty() {
        Ok(Outcome::ALL.to_vec())
    } else {
        v.iter().map(|s| parse_outcome(s)).collect()
    }
}

fn comma_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn estimate_options(a: &EstimateCli) -> Result<EstimateOptions> {
    let d = EstimateOptions::default();
    Ok(EstimateOptions {
        method: a.method.parse::<Method>()?,
        outcomes: parse_outcomes(&a.outcome)?,
        k_folds: a.k_folds.unwrap_or(d.k_folds),
        seed: a.seed.unwrap_or(d.seed),
        trees: a.trees.unwrap_or(d.trees),
        covariates: a.covariates.as_deref().map(comma_list),
        fixed_effects: a.fixed_effects.as_deref().map(comma_list),
    })
}

fn diagnose_options(a: &DiagnoseCli) -> Result<DiagnoseOptions> {
    let d = DiagnoseOptions::default();
    let battery = if !a.battery.is_empty() {
        a.battery.iter().map(|s| s.trim().parse::<Diagnostic>()).collect::<Result<Vec<_>>>()?
    } else if a.oster_inputs.is_some() && a.panel.is_none() {
        vec![Diagnostic::Oster]
    } else if a.panel.is_none() && a.consortia.is_some() {
        vec![Diagnostic::Hump]
    } else {
        d.battery
    };
    let support_range = match a.support_range.as_deref() {
        None => None,
        Some(s) => {
            let v: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("--support-range: {e}")))?;
            match v[..] {
                [lo, hi] => Some((lo, hi)),
                _ => return Err(CliError::Usage("--support-range needs two numbers lo,hi".into())),
            }
        }
    };
    let mut hump = HumpOptions::default();
    if let Some(span) = a.loess_span {
        hump.span = span;
    }
    Ok(DiagnoseOptions {
        battery,
        outcomes: parse_outcomes(&a.outcome)?,
        g_grid: a.g_grid.as_deref().map(diagnose::parse_g_grid).transpose()?.unwrap_or(d.g_grid),
        r2_max: a.r2_max,
        oster_inputs: a.oster_inputs.as_deref().map(diagnose::parse_oster_inputs).transpose()?,
        support_range,
        hump,
    })
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            let m = commands::cmd_simulate(&cfg, &out)?;
            println!("wrote {} files to {}", m.outputs.len(), out.display());
        }
        Command::Estimate(a) => {
            let args = EstimateArgs { panel: a.panel.clone(), out: a.out.clone(), options: estimate_options(&a)? };
            let (_, table) = commands::cmd_estimate(&args)?;
            print!("{table}");
        }
        Command::Diagnose(a) => {
            let args = DiagnoseArgs {
                panel: a.panel.clone(),
                consortia: a.consortia.clone(),
                out: a.out.clone(),
                options: diagnose_options(&a)?,
            };
            let (_, text) = commands::cmd_diagnose(&args)?;
            print!("{text}");
        }
        Command::Replicate { scenario, config, seed, out } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            let (_, summary) = commands::cmd_replicate(&scenario, &cfg, &out)?;
            print!("{}", summary.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { subsidy_cli::EXIT_USAGE } else { subsidy_cli::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
