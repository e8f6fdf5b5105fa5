//! `farm test-cov` and `farm test-pcov`.

use farm_core::panel::Orientation;
use farm_core::{cov_structure_test, pcov_structure_test, StructureTestResult};

use super::common::{load_panel, parse_null, parse_pairs, parse_penalty, test_config, TestFlags};
use super::Context;
use crate::config::{CliError, CliResult};
use crate::output::json;

#[derive(clap::Args, Debug, Clone)]
pub struct TestArgs {
    /// Residual panel CSV
    pub panel: Option<String>,
    /// rows-are-series (default) or rows-are-time
    #[arg(long)]
    pub orientation: Option<String>,
    /// offdiag, row:<series>, blocks:<file> or pairs:<file>
    #[arg(long)]
    pub pairs: Option<String>,
    /// zero, const:<x> or file:<path>
    #[arg(long)]
    pub null: Option<String>,
    #[command(flatten)]
    pub test: TestFlags,
}

#[derive(clap::Args, Debug, Clone)]
pub struct PcovArgs {
    #[command(flatten)]
    pub base: TestArgs,
    /// Nodewise LASSO penalty: bic, fixed:<xi> or inf
    #[arg(long)]
    pub penalty: Option<String>,
}

/// Exit status signalling rejection at the 5% level.
pub const REJECT_EXIT: i32 = 3;

pub fn run_cov(args: TestArgs, ctx: &mut Context) -> CliResult<i32> {
    run(args, None, ctx)
}

pub fn run_pcov(args: PcovArgs, ctx: &mut Context) -> CliResult<i32> {
    let penalty = args.penalty.clone();
    run(args.base, Some(penalty), ctx)
}

fn run(args: TestArgs, penalty_flag: Option<Option<String>>, ctx: &mut Context) -> CliResult<i32> {
    let r = &mut ctx.resolver;
    let path = r.raw("panel", args.panel.clone(), "");
    if path.is_empty() {
        return Err(CliError::config("no panel given"));
    }
    let orientation: Orientation = r.get("orientation", args.orientation.clone(), "rows-are-series")?;
    let pairs_spec = r.raw("pairs", args.pairs.clone(), "offdiag");
    let null_spec = r.raw("null", args.null.clone(), "zero");
    let test = test_config(r, &args.test, "1000")?;
    let penalty = match penalty_flag {
        Some(flag) => Some(parse_penalty(&r.raw("penalty", flag, "bic"))?),
        None => None,
    };
    r.finish()?;

    let panel = load_panel(&path, orientation)?;
    let set = parse_pairs(&pairs_spec, panel.series_ids())?;
    let null = parse_null(&null_spec, set.d())?;
    let (name, result): (&str, StructureTestResult) = match penalty {
        None => ("test-cov.json", cov_structure_test(panel.values(), &set, &null, &test)?),
        Some(p) => (
            "test-pcov.json",
            pcov_structure_test(panel.values(), &set, &null, &p, &test)?,
        ),
    };
    let text = json(&result.to_flat_json())?;
    ctx.out.write(name, &text)?;
    crate::output::emit(&text);
    Ok(if result.rejects(0.05)? { REJECT_EXIT } else { 0 })
}
