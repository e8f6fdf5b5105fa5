//! Parsers shared by several subcommands.

use std::path::Path;

use farm_core::covtest::IndexSet;
use farm_core::panel::Orientation;
use farm_core::sparse::{LassoConfig, PenaltyChoice};
use farm_core::{load_panel_csv, KernelKind, PanelData, TestConfig};

use crate::config::{error_chain, CliError, CliResult, Resolver};

/// `bic`, `fixed:<xi>` or `inf`.
pub fn parse_penalty(text: &str) -> CliResult<PenaltyChoice> {
    let t = text.trim().to_ascii_lowercase();
    match t.as_str() {
        "bic" => Ok(PenaltyChoice::default()),
        "inf" | "infinite" => Ok(PenaltyChoice::Infinite),
        other => match other.strip_prefix("fixed:").map(str::parse::<f64>) {
            Some(Ok(xi)) if xi >= 0.0 && xi.is_finite() => Ok(PenaltyChoice::Fixed {
                xi,
                lasso: LassoConfig::default(),
            }),
            _ => Err(CliError::config(format!(
                "invalid penalty {text:?} (expected bic, fixed:<xi> or inf)"
            ))),
        },
    }
}

pub fn load_panel(path: &str, orientation: Orientation) -> CliResult<PanelData> {
    load_panel_csv(path, orientation).map_err(|e| CliError::config(format!("panel {path}: {}", error_chain(&e))))
}

pub fn read_input(path: &str, what: &str) -> CliResult<String> {
    std::fs::read_to_string(Path::new(path)).map_err(|e| CliError::config(format!("cannot read {what} {path}: {e}")))
}

/// Resolve a series reference: an id from the panel or a 1-based index.
pub fn series_index(ids: &[String], key: &str) -> CliResult<usize> {
    let key = key.trim();
    if let Some(i) = ids.iter().position(|s| s == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(k) if k >= 1 && k <= ids.len() => Ok(k - 1),
        _ => Err(CliError::config(format!("unknown series {key:?}"))),
    }
}

/// Pair spec: `offdiag`, `row:<series>`, `blocks:<file>` or `pairs:<file>`.
///
/// A blocks file lists `series,label` per line; a pairs file lists
/// `series,series` per line. Series are ids or 1-based indices.
pub fn parse_pairs(spec: &str, ids: &[String]) -> CliResult<IndexSet> {
    let n = ids.len();
    let config = |e: farm_core::FarmError| CliError::config(format!("pairs {spec:?}: {}", error_chain(&e)));
    let spec = spec.trim();
    if spec == "offdiag" {
        return IndexSet::offdiag(n).map_err(config);
    }
    if let Some(s) = spec.strip_prefix("row:") {
        return IndexSet::row(n, series_index(ids, s)?).map_err(config);
    }
    if let Some(path) = spec.strip_prefix("blocks:") {
        if path.is_empty() {
            return Err(CliError::config("blocks: needs a file"));
        }
        let text = read_input(path, "blocks file")?;
        let mut labels: Vec<Option<String>> = vec![None; n];
        for (no, line) in data_lines(&text) {
            let (s, label) = line
                .split_once(',')
                .ok_or_else(|| CliError::config(format!("{path} line {no}: expected series,label")))?;
            labels[series_index(ids, s)?] = Some(label.trim().to_string());
        }
        let mut names: Vec<String> = labels.iter().flatten().cloned().collect();
        names.sort();
        names.dedup();
        let coded = labels
            .iter()
            .enumerate()
            .map(|(i, l)| match l {
                Some(l) => Ok(names.binary_search(l).unwrap_or(0)),
                None => Err(CliError::config(format!(
                    "{path}: series {} has no block label",
                    ids[i]
                ))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        return IndexSet::blocks(&coded).map_err(config);
    }
    if let Some(path) = spec.strip_prefix("pairs:") {
        let text = read_input(path, "pairs file")?;
        let mut pairs = Vec::new();
        for (no, line) in data_lines(&text) {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| CliError::config(format!("{path} line {no}: expected series,series")))?;
            pairs.push((series_index(ids, a)?, series_index(ids, b)?));
        }
        return IndexSet::from_pairs(n, pairs).map_err(config);
    }
    Err(CliError::config(format!(
        "malformed pairs spec {spec:?} (expected offdiag, row:<i>, blocks:<file> or pairs:<file>)"
    )))
}

/// Null values: `zero`, `const:<x>` or `file:<path>` (one value per line, `d` lines).
pub fn parse_null(spec: &str, d: usize) -> CliResult<Vec<f64>> {
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(vec![0.0; d]);
    }
    if let Some(v) = spec.strip_prefix("const:") {
        let x: f64 = v
            .parse()
            .map_err(|_| CliError::config(format!("invalid null value {v:?}")))?;
        return Ok(vec![x; d]);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let text = read_input(path, "null file")?;
        let values = data_lines(&text)
            .map(|(no, l)| {
                l.parse::<f64>()
                    .map_err(|_| CliError::config(format!("{path} line {no}: not a number")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if values.len() != d {
            return Err(CliError::config(format!(
                "{path}: {} null values for {d} pairs",
                values.len()
            )));
        }
        return Ok(values);
    }
    Err(CliError::config(format!(
        "malformed null spec {spec:?} (expected zero, const:<x> or file:<path>)"
    )))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Flags of the structure tests.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct TestFlags {
    /// Kernel: bartlett, parzen or qs
    #[arg(long)]
    pub kernel: Option<String>,
    /// Kernel bandwidth (auto = floor(T/3))
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Bootstrap draws B
    #[arg(long)]
    pub draws: Option<String>,
    /// Bootstrap seed
    #[arg(long)]
    pub seed: Option<String>,
}

pub fn test_config(r: &mut Resolver, flags: &TestFlags, default_draws: &str) -> CliResult<TestConfig> {
    let kernel: KernelKind = r.get("kernel", flags.kernel.clone(), "bartlett")?;
    let bandwidth: Option<f64> = r.optional("bandwidth", flags.bandwidth.clone())?;
    let draws: usize = r.get("draws", flags.draws.clone(), default_draws)?;
    let seed: u64 = r.get("seed", flags.seed.clone(), "0")?;
    if draws < 100 {
        return Err(CliError::config(format!("draws must be at least 100, got {draws}")));
    }
    if let Some(h) = bandwidth {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::config(format!("bandwidth must be positive, got {h}")));
        }
    }
    Ok(TestConfig {
        kernel,
        bandwidth,
        draws,
        seed,
        levels: vec![0.10, 0.05, 0.01],
    })
}
