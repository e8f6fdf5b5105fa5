mod cmd;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmd::Context;
use config::{CliError, CliResult, Resolver};
use output::OutDir;

/// Factor-augmented sparse regression and covariance structure tests.
#[derive(Parser, Debug)]
#[command(name = "farm", version)]
struct Cli {
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, env = "FARM_THREADS")]
    threads: Option<String>,
    /// Config file of `key = value` lines; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo experiment or draw a simulated panel
    Simulate(cmd::simulate::SimulateArgs),
    /// Test for structure in the covariance of a residual panel
    TestCov(cmd::structure::TestArgs),
    /// Test for structure in the partial covariance of a residual panel
    TestPcov(cmd::structure::PcovArgs),
    /// Estimate principal-component factors and select their number
    Factors(cmd::factors::FactorsArgs),
    /// Fit or apply the three-stage model
    #[command(subcommand)]
    Farm(cmd::farm::FarmCommand),
    /// Rolling-window forecast comparison
    Backtest(cmd::backtest::BacktestArgs),
}

fn run(cli: Cli) -> CliResult<i32> {
    let mut resolver = Resolver::load(cli.config.as_deref())?;
    let threads: usize = resolver.get("threads", cli.threads.clone(), "0")?;
    let out = resolver.raw("out", cli.out.clone(), ".");
    // A second build in the same process (tests) is harmless to ignore.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let mut ctx = Context {
        resolver,
        out: OutDir::create(&out)?,
    };
    let code = match cli.command {
        Command::Simulate(a) => cmd::simulate::run(a, &mut ctx).map(|_| 0),
        Command::TestCov(a) => cmd::structure::run_cov(a, &mut ctx),
        Command::TestPcov(a) => cmd::structure::run_pcov(a, &mut ctx),
        Command::Factors(a) => cmd::factors::run(a, &mut ctx).map(|_| 0),
        Command::Farm(c) => cmd::farm::run(c, &mut ctx).map(|_| 0),
        Command::Backtest(a) => cmd::backtest::run(a, &mut ctx).map(|_| 0),
    }?;
    ctx.out.write("resolved.cfg", &ctx.resolver.echo())?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
