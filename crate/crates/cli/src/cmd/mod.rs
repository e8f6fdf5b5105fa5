pub mod backtest;
pub mod common;
pub mod factors;
pub mod farm;
pub mod simulate;
pub mod structure;

use crate::config::Resolver;
use crate::output::OutDir;

/// State shared by every subcommand: resolved settings and the output directory.
pub struct Context {
    pub resolver: Resolver,
    pub out: OutDir,
}
