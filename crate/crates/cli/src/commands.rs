//! The four subcommands, independent of argument parsing.

use std::path::{Path, PathBuf};

use subsidy_core::diagnostics::OsterInputs;
use subsidy_core::panel::PanelRow;
use subsidy_core::sim::{simulate_consortium_rows, simulate_panel, SimulatedPanel};

use crate::config::RunConfig;
use crate::diagnose::{self, DiagnoseOptions};
use crate::error::{CliError, Result};
use crate::estimate::{self, EstimateOptions};
use crate::manifest::{OutputDir, RunManifest};
use crate::panel_csv::{panel_to_bytes, read_panel_file};
use crate::scenarios::{self, ScenarioSummary};

/// Loads `--config` if given, otherwise the defaults; `--seed` overrides
/// the file. Without either there is no seed and the run is refused.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    match (path, seed) {
        (Some(p), s) => {
            let mut cfg = RunConfig::from_path(p)?;
            if let Some(s) = s {
                cfg.reseed(s);
            }
            Ok(cfg)
        }
        (None, Some(s)) => Ok(RunConfig::with_seed(s)),
        (None, None) => Err(CliError::Usage("a seed is required: pass --seed or a --config with `seed`".into())),
    }
}

fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Serialize(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
}

/// Simulates the panel and writes it with its ground truth, the switching
/// records, consortium rows when configured, and the config snapshot.
pub fn write_simulation(config: &RunConfig, out: &mut OutputDir) -> Result<SimulatedPanel> {
    let sim = simulate_panel(&config.scenario)?;
    out.write("panel.csv", &panel_to_bytes(&sim.panel)?)?;
    out.write_json("ground_truth.json", &sim.truth)?;
    out.write("switching.csv", &csv_bytes(&sim.switching)?)?;
    if let Some(h) = config.hump {
        let rows = simulate_consortium_rows(&h.to_config(config.seed, config.scenario.replication))?;
        out.write("consortia.csv", &diagnose::consortia_to_bytes(&rows)?)?;
    }
    out.write_text("config.toml", &config.to_toml()?)?;
    Ok(sim)
}

fn config_json(config: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(config)?)
}

pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let mut out = OutputDir::create(out_dir)?;
    write_simulation(config, &mut out)?;
    out.finish("simulate", Some(config.seed), config_json(config)?)
}

pub struct EstimateArgs {
    pub panel: PathBuf,
    pub out: PathBuf,
    pub options: EstimateOptions,
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<(RunManifest, String)> {
    let panel = read_panel_file(&args.panel)?;
    let records = estimate::estimate(&panel, &args.options)?;
    let mut out = OutputDir::create(&args.out)?;
    out.write_text("estimates.tsv", &estimate::to_tsv(&records))?;
    out.write_json("estimates.json", &records)?;
    let config = serde_json::json!({
        "panel": args.panel.display().to_string(),
        "method": args.options.method.name(),
        "outcomes": args.options.outcomes.iter().map(|o| o.column()).collect::<Vec<_>>(),
        "k_folds": args.options.k_folds,
        "trees": args.options.trees,
        "covariates": args.options.covariates,
        "fixed_effects": args.options.fixed_effects,
    });
    let manifest = out.finish("estimate", Some(args.options.seed), config)?;
    Ok((manifest, estimate::to_table(&records)))
}

pub struct DiagnoseArgs {
    pub panel: Option<PathBuf>,
    pub consortia: Option<PathBuf>,
    pub out: PathBuf,
    pub options: DiagnoseOptions,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(RunManifest, String)> {
    let panel: Option<Vec<PanelRow>> = args.panel.as_deref().map(read_panel_file).transpose()?;
    let consortia = args.consortia.as_deref().map(diagnose::read_consortia).transpose()?;
    let report = diagnose::diagnose(panel.as_deref(), consortia.as_deref(), &args.options)?;
    let mut out = OutputDir::create(&args.out)?;
    diagnose::write_report(&report, &mut out)?;
    let o = &args.options;
    let config = serde_json::json!({
        "panel": args.panel.as_ref().map(|p| p.display().to_string()),
        "consortia": args.consortia.as_ref().map(|p| p.display().to_string()),
        "battery": o.battery.iter().map(|d| d.name()).collect::<Vec<_>>(),
        "outcomes": o.outcomes.iter().map(|x| x.column()).collect::<Vec<_>>(),
        "g_grid": o.g_grid,
        "r2_max": o.r2_max,
        "oster_inputs": o.oster_inputs.map(|i: OsterInputs| serde_json::to_value(i).unwrap_or_default()),
        "support_range": o.support_range,
        "hump": o.hump,
    });
    let manifest = out.finish("diagnose", None, config)?;
    Ok((manifest, diagnose::summary(&report)))
}

pub fn cmd_replicate(name: &str, config: &RunConfig, out_dir: &Path) -> Result<(RunManifest, ScenarioSummary)> {
    if !scenarios::SCENARIOS.contains(&name) {
        return Err(CliError::UnknownScenario { name: name.to_string(), known: scenarios::SCENARIOS.to_vec() });
    }
    let mut out = OutputDir::create(out_dir)?;
    let summary = scenarios::replicate(name, config, &mut out)?;
    let mut cfg = config_json(config)?;
    cfg["scenario_name"] = serde_json::Value::String(name.to_string());
    let manifest = out.finish("replicate", Some(config.seed), cfg)?;
    Ok((manifest, summary))
}
