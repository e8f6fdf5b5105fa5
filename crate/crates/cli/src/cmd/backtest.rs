//! `farm backtest`: rolling-window forecast comparison.

use std::collections::BTreeMap;

use farm_core::backtest::{rolling_backtest, BacktestConfig, Method};
use farm_core::panel::Orientation;
use farm_core::FactorRule;

use super::common::{load_panel, parse_penalty, read_input};
use super::Context;
use crate::config::{CliError, CliResult};
use crate::output::json;

#[derive(clap::Args, Debug, Clone)]
pub struct BacktestArgs {
    /// Panel CSV
    pub panel: Option<String>,
    /// rows-are-series (default) or rows-are-time
    #[arg(long)]
    pub orientation: Option<String>,
    /// Estimation window length
    #[arg(long)]
    pub window: Option<String>,
    /// AR order and LASSO lag count
    #[arg(long)]
    pub p: Option<String>,
    /// Factor-count rule: er, ic1..ic4 or fixed:<r>
    #[arg(long)]
    pub factors: Option<String>,
    /// Largest factor count considered
    #[arg(long)]
    pub kmax: Option<String>,
    /// Comma list of ar, sr, pcr, farmpredict
    #[arg(long)]
    pub methods: Option<String>,
    /// CSV of series,group lines
    #[arg(long)]
    pub groups: Option<String>,
    /// Regress next-period residuals on current factors
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub pcr_lead: Option<bool>,
    /// Select LASSO penalties once, at the first origin
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_penalty: Option<bool>,
    /// LASSO penalty: bic, fixed:<xi> or inf
    #[arg(long)]
    pub penalty: Option<String>,
    /// Standardise LASSO columns
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Re-run every origin with the target period perturbed and fail on any change
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub audit: Option<bool>,
}

pub fn run(args: BacktestArgs, ctx: &mut Context) -> CliResult<()> {
    let r = &mut ctx.resolver;
    let path = r.raw("panel", args.panel.clone(), "");
    if path.is_empty() {
        return Err(CliError::config("no panel given"));
    }
    let orientation: Orientation = r.get("orientation", args.orientation.clone(), "rows-are-series")?;
    let window: usize = r.get("window", args.window.clone(), "480")?;
    let p: usize = r.get("p", args.p.clone(), "4")?;
    let factor_rule: FactorRule = r.get("factors", args.factors.clone(), "er")?;
    let kmax: Option<usize> = r.optional("kmax", args.kmax.clone())?;
    let methods: Vec<Method> = r.list("methods", args.methods.clone(), "ar,sr,pcr,farmpredict")?;
    let groups_path = r.raw("groups", args.groups.clone(), "none");
    let pcr_lead = r.flag_bool("pcr-lead", args.pcr_lead, false)?;
    let freeze_penalty = r.flag_bool("freeze-penalty", args.freeze_penalty, false)?;
    let penalty = parse_penalty(&r.raw("penalty", args.penalty.clone(), "bic"))?;
    let standardize = r.flag_bool("standardize", args.standardize, false)?;
    let audit = r.flag_bool("audit", args.audit, false)?;
    r.finish()?;

    let panel = load_panel(&path, orientation)?;
    if window + p >= panel.t() {
        return Err(CliError::config(format!(
            "window {window} + p {p} must be below the sample length {}",
            panel.t()
        )));
    }
    let mut groups = BTreeMap::new();
    if groups_path != "none" {
        for (no, line) in read_input(&groups_path, "groups file")?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (s, g) = line
                .split_once(',')
                .ok_or_else(|| CliError::config(format!("{groups_path} line {}: expected series,group", no + 1)))?;
            if panel.series_index(s.trim()).is_none() {
                return Err(CliError::config(format!(
                    "{groups_path} line {}: unknown series {:?}",
                    no + 1,
                    s.trim()
                )));
            }
            groups.insert(s.trim().to_string(), g.trim().to_string());
        }
    }
    let cfg = BacktestConfig {
        window,
        p,
        factor_rule,
        kmax,
        methods,
        groups,
        pcr_lead,
        freeze_penalty,
        penalty,
        standardize,
        audit,
    };
    let report = rolling_backtest(&panel, &cfg).map_err(|e| match e {
        farm_core::FarmError::InvalidInput(m) => CliError::config(m),
        other => other.into(),
    })?;
    let csv = report.rank_frequency.to_csv();
    ctx.out.write("backtest_ranks.csv", &csv)?;
    ctx.out.write("backtest.json", &json(&report)?)?;
    crate::output::emit(&csv);
    Ok(())
}
