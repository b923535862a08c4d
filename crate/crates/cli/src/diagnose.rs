use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use subsidy_core::diagnostics::{
    common_support, cooks_trim, functional_form_comparison, fwl_hump, manski_sensitivity, oster_bounds,
    oster_from_inputs, CooksReport, FormFit, HumpOptions, HumpReport, OsterInputs, OsterReport, SensitivityCurve,
    SupportReport,
};
use subsidy_core::estimators::{TwfeSpec, TAU_12, TAU_12C};
use subsidy_core::panel::{Outcome, PanelRow, Program};
use subsidy_core::sim::ConsortiumRow;
use subsidy_core::stats::{boxcox_profile, BoxCoxReport};

use crate::error::{CliError, Result};
use crate::manifest::OutputDir;
use crate::panel_csv::fmt_float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnostic {
    Manski,
    Oster,
    Cooks,
    Support,
    Forms,
    Hump,
}

impl Diagnostic {
    pub const ALL: [Diagnostic; 6] = [
        Diagnostic::Manski,
        Diagnostic::Oster,
        Diagnostic::Cooks,
        Diagnostic::Support,
        Diagnostic::Forms,
        Diagnostic::Hump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Diagnostic::Manski => "manski",
            Diagnostic::Oster => "oster",
            Diagnostic::Cooks => "cooks",
            Diagnostic::Support => "support",
            Diagnostic::Forms => "forms",
            Diagnostic::Hump => "hump",
        }
    }

    /// Everything that runs on a panel alone.
    pub const PANEL_BATTERY: [Diagnostic; 5] =
        [Diagnostic::Manski, Diagnostic::Oster, Diagnostic::Cooks, Diagnostic::Support, Diagnostic::Forms];
}

impl FromStr for Diagnostic {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Diagnostic::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| {
            CliError::Usage(format!("unknown diagnostic {s:?}; expected manski, oster, cooks, support, forms or hump"))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    pub battery: Vec<Diagnostic>,
    pub outcomes: Vec<Outcome>,
    pub g_grid: Vec<f64>,
    pub r2_max: Option<f64>,
    /// Runs the Oster calculation on these numbers instead of a panel.
    pub oster_inputs: Option<OsterInputs>,
    pub support_range: Option<(f64, f64)>,
    pub hump: HumpOptions,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            battery: Diagnostic::PANEL_BATTERY.to_vec(),
            outcomes: Outcome::ALL.to_vec(),
            g_grid: default_g_grid(),
            r2_max: None,
            oster_inputs: None,
            support_range: None,
            hump: HumpOptions::default(),
        }
    }
}

/// `0, 0.1, ..., 2`.
pub fn default_g_grid() -> Vec<f64> {
    parse_g_grid("0:2:0.1").unwrap_or_default()
}

/// `start:stop:step` or a comma-separated list. Range points are snapped to
/// 1e-12 so that `1` is hit exactly.
pub fn parse_g_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("invalid g grid {text:?}; use start:stop:step or a comma list"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, c] => {
            let (start, stop, step) = (num(a).ok_or_else(bad)?, num(b).ok_or_else(bad)?, num(c).ok_or_else(bad)?);
            if step <= 0.0 || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
        }
        [list] => list.split(',').map(|s| num(s).ok_or_else(bad)).collect::<Result<Vec<f64>>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

/// `beta_tilde,beta_hat,r2_tilde,r2_hat[,r2_max]`.
pub fn parse_oster_inputs(text: &str) -> Result<OsterInputs> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("invalid Oster inputs {text:?}")))?;
    match v.as_slice() {
        [bt, bh, r2t, r2h] => {
            Ok(OsterInputs { beta_tilde: *bt, beta_hat: *bh, r2_tilde: *r2t, r2_hat: *r2h, r2_max: None })
        }
        [bt, bh, r2t, r2h, r2m] => {
            Ok(OsterInputs { beta_tilde: *bt, beta_hat: *bh, r2_tilde: *r2t, r2_hat: *r2h, r2_max: Some(*r2m) })
        }
        _ => Err(CliError::Usage("Oster inputs need beta_tilde,beta_hat,r2_tilde,r2_hat[,r2_max]".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsterEntry {
    pub outcome: Option<Outcome>,
    pub coefficient: String,
    pub report: OsterReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormsReport {
    pub fits: Vec<FormFit>,
    pub boxcox: BoxCoxReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub manski: Vec<SensitivityCurve>,
    pub oster: Vec<OsterEntry>,
    pub cooks: Option<CooksReport>,
    pub support: Vec<SupportReport>,
    pub forms: Option<FormsReport>,
    pub hump: Option<HumpReport>,
}

pub fn diagnose(
    panel: Option<&[PanelRow]>,
    consortia: Option<&[ConsortiumRow]>,
    opts: &DiagnoseOptions,
) -> Result<DiagnoseReport> {
    let mut report = DiagnoseReport::default();
    let need_panel =
        |d: Diagnostic| panel.ok_or_else(|| CliError::Usage(format!("diagnostic {} needs --panel", d.name())));
    let spec = TwfeSpec::default();
    for &d in &opts.battery {
        match d {
            Diagnostic::Manski => {
                let p = need_panel(d)?;
                for &outcome in &opts.outcomes {
                    for margin in [Program::P2, Program::P2c] {
                        report.manski.push(manski_sensitivity(p, margin, outcome, &opts.g_grid)?);
                    }
                }
            }
            Diagnostic::Oster => {
                if let Some(inputs) = opts.oster_inputs {
                    report.oster.push(OsterEntry {
                        outcome: None,
                        coefficient: "direct".into(),
                        report: oster_from_inputs(inputs)?,
                    });
                    continue;
                }
                let p = need_panel(d)?;
                let short = TwfeSpec { covariates: vec![], fixed_effects: vec![], ..spec.clone() };
                for &outcome in &opts.outcomes {
                    for coef in [TAU_12, TAU_12C] {
                        let r = oster_bounds(
                            p,
                            &short.clone().with_outcome(outcome),
                            &spec.clone().with_outcome(outcome),
                            coef,
                            opts.r2_max,
                        )?;
                        report.oster.push(OsterEntry { outcome: Some(outcome), coefficient: coef.into(), report: r });
                    }
                }
            }
            Diagnostic::Cooks => report.cooks = Some(cooks_trim(need_panel(d)?, &spec)?),
            Diagnostic::Support => {
                let p = need_panel(d)?;
                for anchor in [Program::P2, Program::P2c] {
                    report.support.push(common_support(p, anchor, &spec, opts.support_range)?);
                }
            }
            Diagnostic::Forms => {
                let p = need_panel(d)?;
                let price: Vec<f64> = p.iter().map(|r| r.ln_price.exp()).collect();
                let speed: Vec<f64> = p.iter().map(|r| r.speed_mbps).collect();
                report.forms = Some(FormsReport {
                    fits: functional_form_comparison(&price, &speed)?,
                    boxcox: boxcox_profile(&price, &speed)
                        .map_err(subsidy_core::diagnostics::DiagnosticsError::from)?,
                });
            }
            Diagnostic::Hump => {
                let rows = consortia.ok_or_else(|| CliError::Usage("diagnostic hump needs --consortia".into()))?;
                report.hump = Some(fwl_hump(rows, opts.hump)?);
            }
        }
    }
    Ok(report)
}

fn margin_name(p: Program) -> &'static str {
    match p {
        Program::P1 => "P1",
        Program::P2 => "P2",
        Program::P2c => "P2c",
    }
}

/// Plot data: `x fit lo hi`, tab-separated.
pub fn plot_tsv(points: impl Iterator<Item = (f64, f64, f64, f64)>) -> String {
    let mut s = String::from("x\tfit\tlo\thi\n");
    for (x, fit, lo, hi) in points {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", fmt_float(x), fmt_float(fit), fmt_float(lo), fmt_float(hi));
    }
    s
}

/// Writes one JSON report per diagnostic plus plot-data files.
pub fn write_report(report: &DiagnoseReport, out: &mut OutputDir) -> Result<()> {
    for c in &report.manski {
        let stem = format!("manski_{}_{}", margin_name(c.margin), c.outcome);
        out.write_json(&format!("{stem}.json"), c)?;
        out.write_text(
            &format!("{stem}.tsv"),
            &plot_tsv(c.points.iter().map(|p| (p.g, p.beta, p.ci_lower, p.ci_upper))),
        )?;
    }
    if !report.oster.is_empty() {
        out.write_json("oster.json", &report.oster)?;
    }
    if let Some(c) = &report.cooks {
        out.write_json("cooks.json", c)?;
    }
    if !report.support.is_empty() {
        out.write_json("support.json", &report.support)?;
    }
    if let Some(f) = &report.forms {
        out.write_json("forms.json", f)?;
        let mut s = String::from("rank\tform\tadj_r_squared\tr_squared\trmse\n");
        for (i, fit) in f.fits.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                i + 1,
                fit.form.name(),
                fmt_float(fit.adj_r_squared),
                fmt_float(fit.r_squared),
                fmt_float(fit.rmse)
            );
        }
        out.write_text("forms.tsv", &s)?;
    }
    if let Some(h) = &report.hump {
        out.write_json("hump.json", h)?;
        out.write_text("hump_curve.tsv", &plot_tsv(h.curve.iter().map(|p| (p.x, p.fit, p.lo, p.hi))))?;
    }
    Ok(())
}

/// Short human-readable digest of a report.
pub fn summary(report: &DiagnoseReport) -> String {
    let mut s = String::new();
    for c in &report.manski {
        let cross = c.zero_crossing.map(|g| format!("{g:.3}")).unwrap_or_else(|| "none".into());
        let _ = writeln!(
            s,
            "manski {} {}: DiD {:.4}, trend {:.4}, zero crossing at g = {cross}",
            margin_name(c.margin),
            c.outcome,
            c.beta_did,
            c.beta0
        );
    }
    for e in &report.oster {
        let label = e.outcome.map(|o| format!("{o} {}", e.coefficient)).unwrap_or_else(|| e.coefficient.clone());
        let _ = writeln!(
            s,
            "oster {label}: delta {:.4}, beta* {:.4}, {:?}",
            e.report.delta, e.report.beta_star, e.report.verdict
        );
    }
    if let Some(c) = &report.cooks {
        let _ = writeln!(s, "cooks: threshold {:.6}, {} HCPs dropped", c.threshold, c.dropped_hcps.len());
    }
    for r in &report.support {
        let _ = writeln!(
            s,
            "support {}: range [{:.3}, {:.3}] Mbps, {} HCPs dropped",
            margin_name(r.anchor),
            r.range.0,
            r.range.1,
            r.dropped_hcps.len()
        );
    }
    if let Some(f) = &report.forms {
        if let Some(best) = f.fits.first() {
            let _ = writeln!(
                s,
                "forms: best {} (adj R2 {:.4}); Box-Cox lambda {:.3}",
                best.form.name(),
                best.adj_r_squared,
                f.boxcox.lambda_hat
            );
        }
    }
    if let Some(h) = &report.hump {
        let _ = writeln!(s, "hump: {:?}, argmax {:.3}, FWL gap {:.2e}", h.verdict, h.argmax_fraction, h.fwl_gap());
    }
    s
}

pub fn read_consortia(path: &Path) -> Result<Vec<ConsortiumRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::schema(None, None, format!("{other:?}")),
    })?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::schema(Some(i + 1), None, e.to_string())))
        .collect()
}

pub fn consortia_to_bytes(rows: &[ConsortiumRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Serialize(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
}
