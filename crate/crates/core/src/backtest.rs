//! Rolling-window one-step forecasting comparison.
//!
//! At every origin `t0` each method is refitted on the trailing window ending
//! at `t0` and forecasts `t0 + 1`:
//!
//! * `AR`: an AR(p) with intercept per series.
//! * `SR`: AR plus a LASSO forecast of the AR residual from `p` lags of the
//!   whole AR-residual panel.
//! * `PCR`: AR plus `lambda_i' F_t0`, factors taken from the AR-residual panel.
//! * `FarmPredict`: PCR plus a LASSO forecast of the PCR residual from `p`
//!   lags of the whole PCR-residual panel.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::factors::{pca_factors, select_factors, FactorRule};
use crate::panel::{lag_matrix, lag_row, PanelData};
use crate::regression::{ar_fit, ar_forecast, OlsSolver};
use crate::sparse::{fit_many_with_penalty, LassoFit, PenaltyChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ar,
    Sr,
    Pcr,
    FarmPredict,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ar, Method::Sr, Method::Pcr, Method::FarmPredict];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ar => "ar",
            Method::Sr => "sr",
            Method::Pcr => "pcr",
            Method::FarmPredict => "farmpredict",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = FarmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ar" => Ok(Method::Ar),
            "sr" => Ok(Method::Sr),
            "pcr" => Ok(Method::Pcr),
            "farmpredict" | "farm" => Ok(Method::FarmPredict),
            _ => Err(FarmError::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub window: usize,
    /// AR order and number of lags in the LASSO designs.
    pub p: usize,
    pub factor_rule: FactorRule,
    pub kmax: Option<usize>,
    pub methods: Vec<Method>,
    /// Series id to group label. Empty means a single `all` group.
    pub groups: BTreeMap<String, String>,
    /// Regress `R_i,t+1` on `F_t` instead of `R_i,t` on `F_t`.
    pub pcr_lead: bool,
    /// Select LASSO penalties at the first origin only and reuse them.
    pub freeze_penalty: bool,
    pub penalty: PenaltyChoice,
    pub standardize: bool,
    /// Recompute every forecast with the target period perturbed and fail on any change.
    pub audit: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: 480,
            p: 4,
            factor_rule: FactorRule::Er,
            kmax: None,
            methods: Method::ALL.to_vec(),
            groups: BTreeMap::new(),
            pcr_lead: false,
            freeze_penalty: false,
            penalty: PenaltyChoice::default(),
            standardize: false,
            audit: false,
        }
    }
}

impl BacktestConfig {
    fn validate(&self, t: usize) -> Result<()> {
        if self.methods.is_empty() {
            return Err(FarmError::InvalidInput("no forecasting methods selected".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(FarmError::InvalidInput("duplicate forecasting method".into()));
        }
        if self.p == 0 {
            return Err(FarmError::InvalidInput("lag order p must be positive".into()));
        }
        // AR fit, then p lags of a residual panel that loses one more period.
        let needed = 3 * self.p + 3;
        if self.window < needed {
            return Err(FarmError::InvalidInput(format!(
                "window {} too short for p = {} (need >= {needed})",
                self.window, self.p
            )));
        }
        if self.window + self.p >= t {
            return Err(FarmError::InsufficientData {
                needed: self.window + self.p,
                got: t,
            });
        }
        Ok(())
    }

    fn lasso_penalty(&self) -> PenaltyChoice {
        match self.penalty.with_intercept(true) {
            PenaltyChoice::Bic(mut c) => {
                c.lasso.standardize = self.standardize;
                PenaltyChoice::Bic(c)
            }
            PenaltyChoice::Fixed { xi, mut lasso } => {
                lasso.standardize = self.standardize;
                PenaltyChoice::Fixed { xi, lasso }
            }
            PenaltyChoice::Infinite => PenaltyChoice::Infinite,
        }
    }
}

/// Per-group rank frequencies. `frequency[m][k]` is the share of the group's
/// series on which `methods[m]` is ranked `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRanks {
    pub group: String,
    pub series: usize,
    pub frequency: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<Method>,
    /// Named groups in label order, then `all`.
    pub groups: Vec<GroupRanks>,
}

impl RankTable {
    /// Rank frequencies from per-series MSEs (`mse[series][method]`). Within a
    /// series equal MSEs are ordered by position in `methods`.
    pub fn from_mse(
        series_ids: &[String],
        methods: &[Method],
        mse: &[Vec<f64>],
        groups: &BTreeMap<String, String>,
    ) -> Result<Self> {
        if mse.len() != series_ids.len() || mse.iter().any(|row| row.len() != methods.len()) {
            return Err(FarmError::Dimension(
                "MSE table does not match series and methods".into(),
            ));
        }
        if let Some(unknown) = groups.keys().find(|id| !series_ids.contains(id)) {
            return Err(FarmError::InvalidInput(format!(
                "group map names unknown series {unknown:?}"
            )));
        }
        let k = methods.len();
        let orders: Vec<Vec<usize>> = mse.iter().map(|row| strict_order(row)).collect();
        let tally = |members: &[usize], label: String| {
            let mut frequency = vec![vec![0.0; k]; k];
            for &s in members {
                for (pos, &m) in orders[s].iter().enumerate() {
                    frequency[m][pos] += 1.0;
                }
            }
            let count = members.len().max(1) as f64;
            frequency.iter_mut().flatten().for_each(|v| *v /= count);
            GroupRanks {
                group: label,
                series: members.len(),
                frequency,
            }
        };
        let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (s, id) in series_ids.iter().enumerate() {
            if let Some(g) = groups.get(id) {
                by_group.entry(g.as_str()).or_default().push(s);
            }
        }
        let mut rows: Vec<GroupRanks> = by_group
            .into_iter()
            .map(|(g, members)| tally(&members, g.to_string()))
            .collect();
        let everyone: Vec<usize> = (0..series_ids.len()).collect();
        rows.push(tally(&everyone, "all".into()));
        Ok(RankTable {
            methods: methods.to_vec(),
            groups: rows,
        })
    }

    /// `group,series,method,rank1,...,rankK`.
    pub fn to_csv(&self) -> String {
        let k = self.methods.len();
        let mut out = String::from("group,series,method");
        for r in 1..=k {
            out.push_str(&format!(",rank{r}"));
        }
        out.push('\n');
        for g in &self.groups {
            for (m, method) in self.methods.iter().enumerate() {
                out.push_str(&format!("{},{},{}", g.group, g.series, method));
                for v in &g.frequency[m] {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Method indices sorted by MSE, ties broken by method position.
fn strict_order(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx
}

/// Competition ranks: equal MSEs share the best rank.
fn shared_ranks(row: &[f64]) -> Vec<usize> {
    row.iter()
        .map(|v| 1 + row.iter().filter(|w| w.total_cmp(v).is_lt()).count())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub series_ids: Vec<String>,
    pub methods: Vec<Method>,
    /// Last in-window period of each forecast origin (0-based column index).
    pub origins: Vec<usize>,
    /// Time label of each forecast target.
    pub target_times: Vec<String>,
    /// `actuals[origin][series]`.
    pub actuals: Vec<Vec<f64>>,
    /// `forecasts[origin][series][method]`.
    pub forecasts: Vec<Vec<Vec<f64>>>,
    /// Factor count used at each origin (0 when no factor method runs).
    pub selected_r: Vec<usize>,
    /// `mse[series][method]`.
    pub mse: Vec<Vec<f64>>,
    /// `ranks[series][method]`, 1 = best, ties share the best rank.
    pub ranks: Vec<Vec<usize>>,
    pub rank_frequency: RankTable,
    pub n_forecasts: usize,
    pub config: BacktestConfig,
}

impl BacktestReport {
    pub fn forecast(&self, origin: usize, series: usize, method: Method) -> Option<f64> {
        let m = self.methods.iter().position(|&x| x == method)?;
        Some(self.forecasts.get(origin)?.get(series)?[m])
    }

    pub fn mse_of(&self, series: usize, method: Method) -> Option<f64> {
        let m = self.methods.iter().position(|&x| x == method)?;
        Some(self.mse.get(series)?[m])
    }
}

pub fn rank_table(report: &BacktestReport, groups: &BTreeMap<String, String>) -> Result<RankTable> {
    RankTable::from_mse(&report.series_ids, &report.methods, &report.mse, groups)
}

/// Penalties picked by BIC at the first origin, per series: `(sr, farmpredict)`.
type FrozenPenalties = Vec<(Option<f64>, Option<f64>)>;

struct OriginOutput {
    /// `[series][method]`
    forecasts: Vec<Vec<f64>>,
    r: usize,
    penalties: FrozenPenalties,
}

pub fn rolling_backtest(panel: &PanelData, cfg: &BacktestConfig) -> Result<BacktestReport> {
    let (n, t) = (panel.n(), panel.t());
    cfg.validate(t)?;
    if n < 2 {
        return Err(FarmError::InsufficientData { needed: 2, got: n });
    }
    RankTable::from_mse(
        panel.series_ids(),
        &cfg.methods,
        &vec![vec![0.0; cfg.methods.len()]; n],
        &cfg.groups,
    )?;
    let values = panel.values();
    let ids = panel.series_ids();
    let origins: Vec<usize> = (cfg.window - 1..t - 1).collect();

    let base = cfg.lasso_penalty();
    let frozen = if cfg.freeze_penalty && matches!(base, PenaltyChoice::Bic(_)) {
        Some(forecast_origin(values, ids, origins[0], cfg, &base, None)?.penalties)
    } else {
        None
    };

    let outputs: Vec<OriginOutput> = origins
        .par_iter()
        .map(|&t0| {
            let out = forecast_origin(values, ids, t0, cfg, &base, frozen.as_ref())?;
            if cfg.audit {
                let mut perturbed = values.clone();
                for i in 0..n {
                    perturbed[(i, t0 + 1)] += 1e3 * (1.0 + values[(i, t0 + 1)].abs());
                }
                let again = forecast_origin(&perturbed, ids, t0, cfg, &base, frozen.as_ref())?;
                if again.forecasts != out.forecasts {
                    return Err(FarmError::Leakage(t0));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let k = cfg.methods.len();
    let actuals: Vec<Vec<f64>> = origins
        .iter()
        .map(|&t0| (0..n).map(|i| values[(i, t0 + 1)]).collect())
        .collect();
    let mut mse = vec![vec![0.0; k]; n];
    for (out, actual) in outputs.iter().zip(&actuals) {
        for i in 0..n {
            for m in 0..k {
                mse[i][m] += (actual[i] - out.forecasts[i][m]).powi(2);
            }
        }
    }
    let count = origins.len() as f64;
    mse.iter_mut().flatten().for_each(|v| *v /= count);
    let ranks = mse.iter().map(|row| shared_ranks(row)).collect();
    let rank_frequency = RankTable::from_mse(ids, &cfg.methods, &mse, &cfg.groups)?;
    Ok(BacktestReport {
        series_ids: ids.to_vec(),
        methods: cfg.methods.clone(),
        target_times: origins.iter().map(|&t0| panel.time_ids()[t0 + 1].clone()).collect(),
        origins,
        actuals,
        selected_r: outputs.iter().map(|o| o.r).collect(),
        forecasts: outputs.into_iter().map(|o| o.forecasts).collect(),
        mse,
        ranks,
        rank_frequency,
        n_forecasts: count as usize,
        config: cfg.clone(),
    })
}

fn tag(origin: usize, series: &str) -> impl FnOnce(FarmError) -> FarmError + '_ {
    move |e| FarmError::Origin {
        origin,
        series: series.to_string(),
        source: Box::new(e),
    }
}

fn with_frozen(base: &PenaltyChoice, xi: Option<f64>) -> PenaltyChoice {
    match (base, xi) {
        (PenaltyChoice::Bic(c), Some(xi)) => PenaltyChoice::Fixed { xi, lasso: c.lasso },
        _ => *base,
    }
}

/// LASSO of every row of `resid` on `p` lags of the whole `resid` panel;
/// returns the fits and the forecast for the period after the last column.
fn lagged_lasso(
    resid: &DMatrix<f64>,
    p: usize,
    base: &PenaltyChoice,
    frozen: Option<Vec<Option<f64>>>,
) -> Result<(Vec<LassoFit>, Vec<f64>)> {
    let n = resid.nrows();
    let design = lag_matrix(resid, p)?;
    let targets: Vec<Vec<f64>> = (0..n).map(|i| design.targets(resid, i)).collect();
    let fits = match frozen {
        None => fit_many_with_penalty(&targets, &design.regressors, base)?,
        Some(xis) => targets
            .iter()
            .zip(xis)
            .map(|(y, xi)| {
                Ok(
                    fit_many_with_penalty(std::slice::from_ref(y), &design.regressors, &with_frozen(base, xi))?
                        .remove(0),
                )
            })
            .collect::<Result<_>>()?,
    };
    let row = lag_row(resid, resid.ncols() - 1, p);
    let preds = fits.iter().map(|f| f.predict(&row)).collect();
    Ok((fits, preds))
}

fn forecast_origin(
    values: &DMatrix<f64>,
    ids: &[String],
    t0: usize,
    cfg: &BacktestConfig,
    base: &PenaltyChoice,
    frozen: Option<&FrozenPenalties>,
) -> Result<OriginOutput> {
    let n = values.nrows();
    let (w, p) = (cfg.window, cfg.p);
    let start = t0 + 1 - w;
    let all = "panel";

    // AR stage.
    let mut ar_pred = vec![0.0; n];
    let k_len = w - p;
    let mut resid = DMatrix::zeros(n, k_len);
    for i in 0..n {
        let series: Vec<f64> = (start..=t0).map(|s| values[(i, s)]).collect();
        let fit = ar_fit(&series, p).map_err(tag(t0, &ids[i]))?;
        let recent: Vec<f64> = (0..p).map(|l| series[w - 1 - l]).collect();
        ar_pred[i] = ar_forecast(&fit, &recent).map_err(tag(t0, &ids[i]))?;
        for k in 0..k_len {
            resid[(i, k)] = series[p + k] - fit.fitted[k];
        }
    }

    let wants = |m: Method| cfg.methods.contains(&m);
    let frozen_col =
        |pick: fn(&(Option<f64>, Option<f64>)) -> Option<f64>| frozen.map(|f| f.iter().map(pick).collect());
    let mut penalties = vec![(None, None); n];

    let mut sr_pred = ar_pred.clone();
    if wants(Method::Sr) {
        let (fits, preds) = lagged_lasso(&resid, p, base, frozen_col(|x| x.0)).map_err(tag(t0, all))?;
        for i in 0..n {
            sr_pred[i] += preds[i];
            penalties[i].0 = Some(fits[i].xi).filter(|x| x.is_finite());
        }
    }

    let mut pcr_pred = ar_pred.clone();
    let mut farm_pred = ar_pred.clone();
    let mut r = 0;
    if wants(Method::Pcr) || wants(Method::FarmPredict) {
        let sel = select_factors(&resid, cfg.factor_rule, cfg.kmax).map_err(tag(t0, all))?;
        r = sel.chosen_r;
        // loadings[i] applied to F_(k-1) predicts R_i,k.
        let (factors, loadings) = if r == 0 {
            (DMatrix::zeros(k_len, 0), DMatrix::zeros(n, 0))
        } else {
            let est = pca_factors(&resid, r).map_err(tag(t0, all))?;
            let loadings = if cfg.pcr_lead {
                let lead_design = est.factors.rows(0, k_len - 1).into_owned();
                let solver = OlsSolver::new(&lead_design, false).map_err(tag(t0, all))?;
                let mut l = DMatrix::zeros(n, r);
                for i in 0..n {
                    let y: Vec<f64> = (1..k_len).map(|k| resid[(i, k)]).collect();
                    let fit = solver.fit(&y).map_err(tag(t0, &ids[i]))?;
                    for j in 0..r {
                        l[(i, j)] = fit.coefficients[j];
                    }
                }
                l
            } else {
                // OLS of R_i on F without intercept; F'F / T = I makes it the PCA loading.
                est.loadings
            };
            (est.factors, loadings)
        };
        let common_next = &loadings * factors.row(k_len - 1).transpose();
        for i in 0..n {
            pcr_pred[i] += common_next[i];
        }
        farm_pred.clone_from(&pcr_pred);
        if wants(Method::FarmPredict) {
            let fitted = &loadings * factors.rows(0, k_len - 1).transpose();
            let u_hat = DMatrix::from_fn(n, k_len - 1, |i, k| resid[(i, k + 1)] - fitted[(i, k)]);
            let (fits, preds) = lagged_lasso(&u_hat, p, base, frozen_col(|x| x.1)).map_err(tag(t0, all))?;
            for i in 0..n {
                farm_pred[i] += preds[i];
                penalties[i].1 = Some(fits[i].xi).filter(|x| x.is_finite());
            }
        }
    }

    let forecasts = (0..n)
        .map(|i| {
            cfg.methods
                .iter()
                .map(|m| match m {
                    Method::Ar => ar_pred[i],
                    Method::Sr => sr_pred[i],
                    Method::Pcr => pcr_pred[i],
                    Method::FarmPredict => farm_pred[i],
                })
                .collect()
        })
        .collect();
    Ok(OriginOutput {
        forecasts,
        r,
        penalties,
    })
}
