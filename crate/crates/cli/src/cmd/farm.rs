//! `farm farm fit` and `farm farm predict`.

use farm_core::panel::Orientation;
use farm_core::pipeline::{DiagnosticKind, FactorGate, Stage3Factors};
use farm_core::regression::Covariates;
use farm_core::{farm_fit, farm_predict, stagewise_report, FactorRule, FarmConfig, FarmModel};
use serde::Deserialize;
use serde_json::json;

use super::common::{load_panel, parse_penalty, read_input, series_index, test_config, TestFlags};
use super::Context;
use crate::config::{error_chain, CliError, CliResult};
use crate::output::{json, write_file};

#[derive(clap::Subcommand, Debug, Clone)]
pub enum FarmCommand {
    /// Fit the three-stage model and write it as JSON
    Fit(FitArgs),
    /// Evaluate the prediction equation of a saved model
    Predict(PredictArgs),
}

#[derive(clap::Args, Debug, Clone)]
pub struct FitArgs {
    /// Panel CSV
    pub panel: Option<String>,
    /// rows-are-series (default) or rows-are-time
    #[arg(long)]
    pub orientation: Option<String>,
    /// Observed covariates CSV shared by all series, one row per period
    #[arg(long)]
    pub covariates: Option<String>,
    /// Factor-count rule: er, ic1..ic4 or fixed:<r>
    #[arg(long)]
    pub factors: Option<String>,
    /// Largest factor count considered
    #[arg(long)]
    pub kmax: Option<String>,
    /// Comma list of target series (ids or 1-based indices), or all
    #[arg(long)]
    pub targets: Option<String>,
    /// Stage-1 intercept
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub intercept: Option<bool>,
    /// auto, always or never
    #[arg(long)]
    pub gate: Option<String>,
    /// Run the stage-1 and stage-2 structure tests
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub diagnostics: Option<bool>,
    /// cov or pcov
    #[arg(long)]
    pub diagnostic: Option<String>,
    /// leave-target-out or full-panel
    #[arg(long)]
    pub stage3: Option<String>,
    /// Stage-3 LASSO penalty: bic, fixed:<xi> or inf
    #[arg(long)]
    pub penalty: Option<String>,
    /// Output model path (default <out>/model.json)
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub test: TestFlags,
}

#[derive(clap::Args, Debug, Clone)]
pub struct PredictArgs {
    /// Saved model JSON
    #[arg(long)]
    pub model: Option<String>,
    /// Target series (id or 1-based index)
    #[arg(long)]
    pub target: Option<String>,
    /// In-sample period (1-based) whose fitted inputs are used
    #[arg(long)]
    pub at_row: Option<String>,
    /// Covariates CSV used at fit time (needed with --at-row when the model has covariates)
    #[arg(long)]
    pub covariates: Option<String>,
    /// JSON file {"x": [...], "f": [...], "u": [...]} with new inputs
    #[arg(long)]
    pub inputs: Option<String>,
}

pub fn run(cmd: FarmCommand, ctx: &mut Context) -> CliResult<()> {
    match cmd {
        FarmCommand::Fit(a) => fit(a, ctx),
        FarmCommand::Predict(a) => predict(a, ctx),
    }
}

/// Covariates file: rows are periods, columns are covariates.
fn load_covariates(path: &str) -> CliResult<nalgebra::DMatrix<f64>> {
    Ok(load_panel(path, Orientation::RowsAreTime)?.values().transpose())
}

fn fit(args: FitArgs, ctx: &mut Context) -> CliResult<()> {
    let r = &mut ctx.resolver;
    let path = r.raw("panel", args.panel.clone(), "");
    if path.is_empty() {
        return Err(CliError::config("no panel given"));
    }
    let orientation: Orientation = r.get("orientation", args.orientation.clone(), "rows-are-series")?;
    let cov_path = r.raw("covariates", args.covariates.clone(), "none");
    let factor_rule: FactorRule = r.get("factors", args.factors.clone(), "ic1")?;
    let kmax: Option<usize> = r.optional("kmax", args.kmax.clone())?;
    let targets_spec = r.raw("targets", args.targets.clone(), "all");
    let add_intercept = r.flag_bool("intercept", args.intercept, true)?;
    let gate = match r.raw("gate", args.gate.clone(), "auto").as_str() {
        "auto" => FactorGate::Auto,
        "always" => FactorGate::Always,
        "never" => FactorGate::Never,
        other => return Err(CliError::config(format!("unknown gate {other:?}"))),
    };
    let run_diagnostics = r.flag_bool("diagnostics", args.diagnostics, false)?;
    let diagnostic_kind = match r.raw("diagnostic", args.diagnostic.clone(), "cov").as_str() {
        "cov" => DiagnosticKind::Covariance,
        "pcov" => DiagnosticKind::PartialCovariance,
        other => return Err(CliError::config(format!("unknown diagnostic {other:?}"))),
    };
    let stage3_factors = match r.raw("stage3", args.stage3.clone(), "leave-target-out").as_str() {
        "leave-target-out" => Stage3Factors::LeaveTargetOut,
        "full-panel" => Stage3Factors::FullPanel,
        other => return Err(CliError::config(format!("unknown stage3 mode {other:?}"))),
    };
    let penalty = parse_penalty(&r.raw("penalty", args.penalty.clone(), "bic"))?;
    let test = test_config(r, &args.test, "1000")?;
    let model_path = r.raw("model", args.model.clone(), "");
    r.finish()?;

    let panel = load_panel(&path, orientation)?;
    let covariates = if cov_path == "none" {
        Covariates::None
    } else {
        let x = load_covariates(&cov_path)?;
        if x.nrows() != panel.t() {
            return Err(CliError::config(format!(
                "covariates have {} rows, panel has T = {}",
                x.nrows(),
                panel.t()
            )));
        }
        Covariates::Shared(x)
    };
    let targets: Vec<usize> = if targets_spec == "all" {
        (0..panel.n()).collect()
    } else {
        targets_spec
            .split(',')
            .map(|s| series_index(panel.series_ids(), s))
            .collect::<CliResult<_>>()?
    };
    let cfg = FarmConfig {
        add_intercept,
        factor_rule,
        kmax,
        gate,
        run_diagnostics,
        diagnostic_kind,
        test,
        penalty,
        stage3_factors,
        ..Default::default()
    };
    let model = farm_fit(&panel, &covariates, &targets, &cfg)?;
    let model_text = model.to_json()?;
    if model_path.is_empty() {
        ctx.out.write("model.json", &model_text)?;
    } else {
        write_file(std::path::Path::new(&model_path), &model_text)?;
    }
    let report = json(&stagewise_report(&model))?;
    ctx.out.write("stagewise.json", &report)?;
    crate::output::emit(&report);
    Ok(())
}

#[derive(Deserialize)]
struct NewInputs {
    #[serde(default)]
    x: Vec<f64>,
    #[serde(default)]
    f: Vec<f64>,
    u: Vec<f64>,
}

fn predict(args: PredictArgs, ctx: &mut Context) -> CliResult<()> {
    let r = &mut ctx.resolver;
    let model_path = r.raw("model", args.model.clone(), "");
    if model_path.is_empty() {
        return Err(CliError::config("no model given"));
    }
    let target_spec = r.raw("target", args.target.clone(), "");
    let at_row: Option<usize> = r.optional("at-row", args.at_row.clone())?;
    let cov_path = r.raw("covariates", args.covariates.clone(), "none");
    let inputs_path = r.raw("inputs", args.inputs.clone(), "none");
    r.finish()?;

    let model = FarmModel::load(&model_path)
        .map_err(|e| CliError::config(format!("model {model_path}: {}", error_chain(&e))))?;
    let i = series_index(&model.series_ids, &target_spec)?;
    model.target(i).map_err(|e| CliError::config(e.to_string()))?;
    let k = model.first_stage[i].slopes().len();

    let doc = match (at_row, inputs_path.as_str()) {
        (Some(row), "none") => {
            if row == 0 || row > model.t {
                return Err(CliError::config(format!("at-row {row} outside 1..={}", model.t)));
            }
            let t = row - 1;
            let x: Vec<f64> = if k == 0 {
                Vec::new()
            } else if cov_path == "none" {
                return Err(CliError::config("the model has covariates; pass --covariates"));
            } else {
                let m = load_covariates(&cov_path)?;
                if m.nrows() != model.t || m.ncols() != k {
                    return Err(CliError::config(format!("covariates must be {} x {k}", model.t)));
                }
                m.row(t).iter().copied().collect()
            };
            let f = model.factors_at(i, t)?;
            let u = model.idiosyncratic_others(i, t)?;
            let prediction = farm_predict(&model, i, &x, &f, &u)?;
            let fs = &model.first_stage[i];
            let observed = fs.fitted[t] + fs.residuals[t];
            let residual = model.target(i)?.residuals[t];
            json!({
                "target": model.series_ids[i],
                "row": row,
                "prediction": prediction,
                "observed": observed,
                "stage3_residual": residual,
                "identity_gap": observed - residual - prediction,
            })
        }
        (None, path) if path != "none" => {
            let inputs: NewInputs = serde_json::from_str(&read_input(path, "inputs")?)
                .map_err(|e| CliError::config(format!("inputs {path}: {e}")))?;
            let prediction = farm_predict(&model, i, &inputs.x, &inputs.f, &inputs.u)
                .map_err(|e| CliError::config(format!("inputs {path}: {e}")))?;
            json!({ "target": model.series_ids[i], "prediction": prediction })
        }
        _ => return Err(CliError::config("give exactly one of --at-row or --inputs")),
    };
    let text = json(&doc)?;
    ctx.out.write("predict.json", &text)?;
    crate::output::emit(&text);
    Ok(())
}
