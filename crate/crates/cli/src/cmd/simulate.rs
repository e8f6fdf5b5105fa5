//! `farm simulate`: Monte Carlo experiments on the factor-plus-link design.

use farm_core::factors::FactorRule;
use farm_core::panel::{panel_to_csv, Orientation};
use farm_core::rng::derive_seed;
use farm_core::simulation::{
    factor_selection_csv, info_gains_csv, run_factor_selection, run_info_gains, run_size_power, simulate_dgp,
    size_power_csv, GainMethod, Scenario, SimulationConfig, POWER_THETA,
};
use farm_core::PanelData;
use serde_json::json;

use super::common::{parse_penalty, test_config, TestFlags};
use super::Context;
use crate::config::{CliError, CliResult};
use crate::output::{content_hash, json};

#[derive(clap::Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Named experiment (table1-panel-a..d, table2-panel-a|b, table3-known|er|ic1, factor-count; append -full for the full grid)
    #[arg(long)]
    pub preset: Option<String>,
    /// size, power, gains, factors or panel
    #[arg(long)]
    pub experiment: Option<String>,
    /// Comma list of scenarios: known-factors, known-r, er, ic1..ic4
    #[arg(long)]
    pub scenario: Option<String>,
    /// Comma list of sample lengths T
    #[arg(long)]
    pub t: Option<String>,
    /// Comma list of cross-section sizes n (overrides n-mult)
    #[arg(long)]
    pub n: Option<String>,
    /// Comma list of n/T ratios
    #[arg(long)]
    pub n_mult: Option<String>,
    /// Replications per grid point
    #[arg(long)]
    pub reps: Option<String>,
    /// Idiosyncratic AR coefficient
    #[arg(long)]
    pub phi: Option<String>,
    /// Burn-in periods for the AR recursions
    #[arg(long)]
    pub burn_in: Option<String>,
    /// Factor-count rule(s) for gains and factors experiments (comma list)
    #[arg(long)]
    pub rule: Option<String>,
    /// Largest factor count considered by data-driven rules
    #[arg(long)]
    pub kmax: Option<String>,
    /// Cross-validation folds (gains)
    #[arg(long)]
    pub folds: Option<String>,
    /// Comma list of sr, pcr, farmpredict (gains)
    #[arg(long)]
    pub methods: Option<String>,
    /// LASSO penalty: bic, fixed:<xi> or inf (gains)
    #[arg(long)]
    pub penalty: Option<String>,
    /// size or power link coefficients (panel experiment)
    #[arg(long)]
    pub design: Option<String>,
    /// Replication index to export (panel experiment)
    #[arg(long)]
    pub rep: Option<String>,
    #[command(flatten)]
    pub test: TestFlags,
}

fn preset_values(name: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let (base, full) = match name.strip_suffix("-full") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let mut v: Vec<(&str, &str)> = match base {
        "table1-panel-a" => vec![("experiment", "size"), ("scenario", "known-factors")],
        "table1-panel-b" => vec![("experiment", "size"), ("scenario", "known-r")],
        "table1-panel-c" => vec![("experiment", "size"), ("scenario", "ic1")],
        "table1-panel-d" => vec![("experiment", "size"), ("scenario", "er")],
        "table1-appendix" => vec![("experiment", "size"), ("scenario", "ic2,ic3,ic4")],
        "table2-panel-a" => vec![("experiment", "power"), ("scenario", "known-factors")],
        "table2-panel-b" => vec![("experiment", "power"), ("scenario", "known-r")],
        "table3-known" => vec![("experiment", "gains"), ("rule", "fixed:3")],
        "table3-er" => vec![("experiment", "gains"), ("rule", "er")],
        "table3-ic1" => vec![("experiment", "gains"), ("rule", "ic1")],
        "factor-count" => vec![("experiment", "factors"), ("rule", "er,ic1")],
        _ => return None,
    };
    if full {
        v.extend([("t", "100,500,700"), ("n-mult", "0.5,1,2,3"), ("reps", "1000")]);
    }
    Some(v)
}

pub fn run(args: SimulateArgs, ctx: &mut Context) -> CliResult<()> {
    let r = &mut ctx.resolver;
    let preset = r.raw("preset", args.preset.clone(), "none");
    if preset != "none" {
        let values = preset_values(&preset).ok_or_else(|| CliError::config(format!("unknown preset {preset:?}")))?;
        r.set_preset(&values);
    }
    let experiment = r.raw("experiment", args.experiment.clone(), "size");
    let ts: Vec<usize> = r.list("t", args.t.clone(), "100,500")?;
    let n_explicit = r.is_set("n", &args.n);
    let ns: Vec<usize> = r.list("n", args.n.clone(), "50")?;
    let mults: Vec<f64> = r.list("n-mult", args.n_mult.clone(), "0.5,1")?;
    let reps: usize = r.get("reps", args.reps.clone(), "500")?;
    let phi: f64 = r.get("phi", args.phi.clone(), "0")?;
    let burn_in: usize = r.get("burn-in", args.burn_in.clone(), "500")?;
    let seed: u64 = r.get("seed", args.test.seed.clone(), "0")?;

    let grid: Vec<(usize, usize)> = ts
        .iter()
        .flat_map(|&t| {
            if n_explicit {
                ns.iter().map(|&n| (t, n)).collect::<Vec<_>>()
            } else {
                mults.iter().map(|&m| (t, (m * t as f64).round() as usize)).collect()
            }
        })
        .collect();
    let base = |t: usize, n: usize, theta: [f64; 4]| {
        let cfg = SimulationConfig {
            t,
            n,
            phi,
            theta,
            replications: reps,
            seed,
            burn_in,
            ..Default::default()
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok::<_, CliError>(cfg)
    };

    let (csv_name, csv, detail) = match experiment.as_str() {
        "size" | "power" => {
            let scenarios: Vec<Scenario> = r.list("scenario", args.scenario.clone(), "known-factors")?;
            let mut test = test_config(r, &args.test, "500")?;
            test.seed = derive_seed(seed, 1);
            let theta = if experiment == "power" { POWER_THETA } else { [0.0; 4] };
            let configs = grid
                .iter()
                .map(|&(t, n)| base(t, n, theta))
                .collect::<CliResult<Vec<_>>>()?;
            r.finish()?;
            let mut runs = Vec::new();
            for &s in &scenarios {
                for cfg in &configs {
                    runs.push(run_size_power(cfg, s, &test)?);
                }
            }
            ("simulate.csv", size_power_csv(&runs), json!(runs))
        }
        "gains" => {
            let rules: Vec<FactorRule> = r.list("rule", args.rule.clone(), "fixed:3")?;
            let folds: usize = r.get("folds", args.folds.clone(), "5")?;
            let methods: Vec<GainMethod> = r.list("methods", args.methods.clone(), "sr,pcr,farmpredict")?;
            let penalty = parse_penalty(&r.raw("penalty", args.penalty.clone(), "bic"))?;
            let configs = grid
                .iter()
                .map(|&(t, n)| base(t, n, POWER_THETA))
                .collect::<CliResult<Vec<_>>>()?;
            r.finish()?;
            let mut runs = Vec::new();
            for &rule in &rules {
                for cfg in &configs {
                    runs.push(run_info_gains(cfg, folds, &methods, rule, &penalty)?);
                }
            }
            ("simulate.csv", info_gains_csv(&runs), json!(runs))
        }
        "factors" => {
            let rules: Vec<FactorRule> = r.list("rule", args.rule.clone(), "er,ic1")?;
            let kmax: Option<usize> = r.optional("kmax", args.kmax.clone())?;
            let configs = grid
                .iter()
                .map(|&(t, n)| base(t, n, [0.0; 4]))
                .collect::<CliResult<Vec<_>>>()?;
            r.finish()?;
            let mut runs = Vec::new();
            for &rule in &rules {
                for cfg in &configs {
                    runs.push(run_factor_selection(cfg, rule, kmax)?);
                }
            }
            ("simulate.csv", factor_selection_csv(&runs), json!(runs))
        }
        "panel" => {
            let design = r.raw("design", args.design.clone(), "size");
            let theta = match design.as_str() {
                "size" => [0.0; 4],
                "power" => POWER_THETA,
                other => {
                    return Err(CliError::config(format!(
                        "unknown design {other:?} (expected size or power)"
                    )))
                }
            };
            let rep: usize = r.get("rep", args.rep.clone(), "0")?;
            let &(t, n) = grid.first().ok_or_else(|| CliError::config("empty grid"))?;
            let cfg = SimulationConfig {
                replications: 1,
                ..base(t, n, theta)?
            };
            r.finish()?;
            let sim = simulate_dgp(&cfg, rep)?;
            let truth = PanelData::new(
                sim.true_u.clone(),
                sim.panel.series_ids().to_vec(),
                sim.panel.time_ids().to_vec(),
            )?;
            let u_csv = panel_to_csv(&truth, Orientation::RowsAreSeries);
            ctx.out.write("idiosyncratic.csv", &u_csv)?;
            (
                "panel.csv",
                panel_to_csv(&sim.panel, Orientation::RowsAreSeries),
                json!({ "t": t, "n": n, "rep": rep }),
            )
        }
        other => return Err(CliError::config(format!("unknown experiment {other:?}"))),
    };

    ctx.out.write(csv_name, &csv)?;
    let provenance = ctx.resolver.provenance();
    let sidecar = json!({
        "command": "simulate",
        "experiment": experiment,
        "config": provenance,
        "seed": seed,
        "input_hash": content_hash(json(&provenance)?.as_bytes()),
        "output_hash": content_hash(csv.as_bytes()),
        "results": detail,
    });
    ctx.out.write("simulate.json", &json(&sidecar)?)?;
    if experiment != "panel" {
        crate::output::emit(&csv);
    }
    Ok(())
}
