//! `farm factors`: factor-count selection and principal-component factors.

use farm_core::factors::panel_eigenvalues;
use farm_core::panel::Orientation;
use farm_core::regression::Covariates;
use farm_core::{first_stage_filter, pca_factors, select_factors, FactorRule};
use serde_json::json;

use super::common::load_panel;
use super::Context;
use crate::config::{CliError, CliResult};
use crate::output::json;

#[derive(clap::Args, Debug, Clone)]
pub struct FactorsArgs {
    /// Panel CSV
    pub panel: Option<String>,
    /// rows-are-series (default) or rows-are-time
    #[arg(long)]
    pub orientation: Option<String>,
    /// er, ic1..ic4 or fixed:<r>
    #[arg(long)]
    pub rule: Option<String>,
    /// Largest factor count considered
    #[arg(long)]
    pub kmax: Option<String>,
    /// Remove series means before extracting factors
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub demean: Option<bool>,
}

pub fn run(args: FactorsArgs, ctx: &mut Context) -> CliResult<()> {
    let r = &mut ctx.resolver;
    let path = r.raw("panel", args.panel.clone(), "");
    if path.is_empty() {
        return Err(CliError::config("no panel given"));
    }
    let orientation: Orientation = r.get("orientation", args.orientation.clone(), "rows-are-series")?;
    let rule: FactorRule = r.get("rule", args.rule.clone(), "ic1")?;
    let kmax: Option<usize> = r.optional("kmax", args.kmax.clone())?;
    let demean = r.flag_bool("demean", args.demean, true)?;
    r.finish()?;

    let panel = load_panel(&path, orientation)?;
    let resid = if demean {
        first_stage_filter(&panel, &Covariates::None, true)?.0
    } else {
        panel.values().clone()
    };
    let selection = select_factors(&resid, rule, kmax).map_err(|e| CliError::config(e.to_string()))?;
    let eigenvalues = panel_eigenvalues(&resid)?;
    let mut csv = String::from("time");
    for k in 1..=selection.chosen_r {
        csv.push_str(&format!(",f{k}"));
    }
    csv.push('\n');
    let factors = if selection.chosen_r > 0 {
        Some(pca_factors(&resid, selection.chosen_r)?)
    } else {
        None
    };
    for (s, time) in panel.time_ids().iter().enumerate() {
        csv.push_str(time);
        if let Some(est) = &factors {
            for k in 0..est.r {
                csv.push_str(&format!(",{}", est.factors[(s, k)]));
            }
        }
        csv.push('\n');
    }
    let shown = eigenvalues.len().min(selection.kmax + 1);
    let doc = json!({
        "rule": selection.method.to_string(),
        "kmax": selection.kmax,
        "chosen_r": selection.chosen_r,
        "criterion_values": selection.criterion_values,
        "eigenvalues": &eigenvalues[..shown],
        "n": panel.n(),
        "t": panel.t(),
    });
    ctx.out.write("factors.csv", &csv)?;
    let text = json(&doc)?;
    ctx.out.write("factors.json", &text)?;
    crate::output::emit(&text);
    Ok(())
}
