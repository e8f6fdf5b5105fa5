//! The three-stage fit and its prediction equation.
//!
//! Stage 1 filters observed covariates out of every series, stage 2 extracts
//! principal-component factors from the filtered panel, and stage 3 regresses
//! each target's idiosyncratic component on every other series' component by
//! LASSO. The prediction for target `i` is
//! `gamma_i'x + lambda_i'f + theta_i'u_{-i}`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covtest::{cov_structure_test, pcov_structure_test, IndexSet, Quantile, StructureTestResult, TestConfig};
use crate::error::{FarmError, Result};
use crate::factors::{pca_factors, select_factors, FactorEstimate, FactorRule, FactorSelection, InfoCriterion};
use crate::linalg::variance;
use crate::panel::PanelData;
use crate::regression::{first_stage_filter, Covariates, OlsFit};
use crate::sparse::{fit_with_penalty, LassoFit, PenaltyChoice};

/// Which structure test the stage diagnostics run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Covariance,
    PartialCovariance,
}

/// Which factors the stage-3 regression for a target works with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage3Factors {
    /// Factors re-estimated from every series except the target, with the
    /// target's loading fitted by least squares on them.
    LeaveTargetOut,
    /// The stage-2 factors of the whole panel. Its residual rows satisfy an
    /// exact linear relation, so a target's component is a combination of the
    /// others' whenever `n <= T`.
    FullPanel,
}

/// Whether stage 2 runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorGate {
    /// Skip factors when diagnostics are on and the stage-1 test does not reject.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmConfig {
    /// Stage-1 intercept.
    pub add_intercept: bool,
    pub factor_rule: FactorRule,
    pub kmax: Option<usize>,
    pub gate: FactorGate,
    /// Level of the stage-1 test that decides whether factors are needed.
    pub gate_level: f64,
    pub run_diagnostics: bool,
    pub diagnostic_kind: DiagnosticKind,
    /// Largest number of off-diagonal pairs a diagnostic test uses.
    pub diagnostic_pair_cap: usize,
    pub test: TestConfig,
    pub penalty: PenaltyChoice,
    pub stage3_factors: Stage3Factors,
}

impl Default for FarmConfig {
    fn default() -> Self {
        FarmConfig {
            add_intercept: true,
            factor_rule: FactorRule::Ic(InfoCriterion::Ic1),
            kmax: None,
            gate: FactorGate::Auto,
            gate_level: 0.05,
            run_diagnostics: false,
            diagnostic_kind: DiagnosticKind::Covariance,
            diagnostic_pair_cap: 2000,
            test: TestConfig::default(),
            penalty: PenaltyChoice::default(),
            stage3_factors: Stage3Factors::LeaveTargetOut,
        }
    }
}

/// Compact record of a structure test, in the flat result layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub statistic: f64,
    pub p_value: f64,
    pub quantiles: Vec<Quantile>,
    pub d: usize,
    #[serde(rename = "B")]
    pub draws: usize,
    pub seed: u64,
    pub kernel: String,
    pub bandwidth: f64,
    pub max_active_set: Option<usize>,
}

impl From<&StructureTestResult> for TestSummary {
    fn from(r: &StructureTestResult) -> Self {
        TestSummary {
            statistic: r.statistic,
            p_value: r.p_value,
            quantiles: r.quantiles.clone(),
            d: r.d,
            draws: r.draws,
            seed: r.seed,
            kernel: r.hac.kernel.kind.to_string(),
            bandwidth: r.hac.kernel.bandwidth,
            max_active_set: r.max_active_set,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage1: Option<TestSummary>,
    pub stage2: Option<TestSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub target: usize,
    /// The target's factor loading.
    pub loading: Vec<f64>,
    /// Leave-target-out factors (`T x r`) and the other series' loadings on
    /// them (`(n-1) x r`); `None` means the stage-2 estimate is used.
    pub own_factors: Option<OwnFactors>,
    /// Coefficients over the other series in index order, `target` left out.
    pub fit: LassoFit,
    /// The target's idiosyncratic component, the stage-3 response.
    pub component: Vec<f64>,
    /// Stage-3 residual series.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnFactors {
    #[serde(with = "crate::linalg::matrix_serde")]
    pub factors: DMatrix<f64>,
    #[serde(with = "crate::linalg::matrix_serde")]
    pub other_loadings: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmModel {
    pub series_ids: Vec<String>,
    pub n: usize,
    pub t: usize,
    pub first_stage: Vec<OlsFit>,
    pub factor_estimate: FactorEstimate,
    /// Absent when stage 2 was skipped by the gate.
    pub selection: Option<FactorSelection>,
    pub factors_skipped: bool,
    pub third_stage: Vec<TargetFit>,
    pub diagnostics: Diagnostics,
    pub config: FarmConfig,
}

impl FarmModel {
    pub fn r(&self) -> usize {
        self.factor_estimate.r
    }

    pub fn target(&self, i: usize) -> Result<&TargetFit> {
        self.third_stage
            .iter()
            .find(|f| f.target == i)
            .ok_or_else(|| FarmError::InvalidInput(format!("series {} is not a fitted target", i + 1)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|source| FarmError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| FarmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Stage-1 residual of series `k` at time `t`.
    fn filtered(&self, k: usize, t: usize) -> f64 {
        self.first_stage[k].residuals[t]
    }

    /// Stage-3 predictors for target `i` at time `t`: the other series'
    /// idiosyncratic components, in index order.
    pub fn idiosyncratic_others(&self, i: usize, t: usize) -> Result<Vec<f64>> {
        let target = self.target(i)?;
        let others = (0..self.n).filter(|&k| k != i);
        Ok(match &target.own_factors {
            None => others.map(|k| self.factor_estimate.residuals[(k, t)]).collect(),
            Some(own) => others
                .enumerate()
                .map(|(a, k)| {
                    let common: f64 = own
                        .other_loadings
                        .row(a)
                        .iter()
                        .zip(own.factors.row(t).iter())
                        .map(|(l, f)| l * f)
                        .sum();
                    self.filtered(k, t) - common
                })
                .collect(),
        })
    }

    /// Factor values at time `t` that pair with target `i`'s loading.
    pub fn factors_at(&self, i: usize, t: usize) -> Result<Vec<f64>> {
        let target = self.target(i)?;
        let f = match &target.own_factors {
            None => &self.factor_estimate.factors,
            Some(own) => &own.factors,
        };
        Ok(f.row(t).iter().copied().collect())
    }
}

fn diagnostic(u: &DMatrix<f64>, cfg: &FarmConfig, stage: u64) -> Result<TestSummary> {
    let n = u.nrows();
    let set = IndexSet::offdiag(n)?.capped(cfg.diagnostic_pair_cap, cfg.test.seed ^ stage);
    let mut test = cfg.test.clone();
    if !test.levels.iter().any(|a| (a - cfg.gate_level).abs() < 1e-12) {
        test.levels.push(cfg.gate_level);
    }
    let null = vec![0.0; set.d()];
    let result = match cfg.diagnostic_kind {
        DiagnosticKind::Covariance => cov_structure_test(u, &set, &null, &test)?,
        DiagnosticKind::PartialCovariance => pcov_structure_test(u, &set, &null, &cfg.penalty, &test)?,
    };
    Ok(TestSummary::from(&result))
}

fn rejects(summary: &TestSummary, level: f64) -> bool {
    summary
        .quantiles
        .iter()
        .find(|q| (q.tau - (1.0 - level)).abs() < 1e-12)
        .is_some_and(|q| summary.statistic > q.value)
}

/// Fit the three stages. `targets` are 0-based series indices that get a
/// stage-3 regression.
pub fn farm_fit(panel: &PanelData, covariates: &Covariates, targets: &[usize], cfg: &FarmConfig) -> Result<FarmModel> {
    let (n, t) = (panel.n(), panel.t());
    if targets.is_empty() {
        return Err(FarmError::InvalidInput("no target series".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&i| i >= n) {
        return Err(FarmError::InvalidInput(format!("target {} outside 1..={n}", bad + 1)));
    }
    if n < 2 {
        return Err(FarmError::InsufficientData { needed: 2, got: n });
    }

    let (resid1, first_stage) =
        first_stage_filter(panel, covariates, cfg.add_intercept).map_err(|e| e.in_stage("first stage"))?;

    let mut diagnostics = Diagnostics::default();
    if cfg.run_diagnostics {
        diagnostics.stage1 = Some(diagnostic(&resid1, cfg, 1).map_err(|e| e.in_stage("stage-1 diagnostic"))?);
    }
    let skip = cfg.factor_rule == FactorRule::Fixed(0)
        || match cfg.gate {
            FactorGate::Never => true,
            FactorGate::Always => false,
            FactorGate::Auto => diagnostics.stage1.as_ref().is_some_and(|s| !rejects(s, cfg.gate_level)),
        };

    let (selection, factor_estimate) = if skip {
        (None, FactorEstimate::none(&resid1))
    } else {
        let sel = select_factors(&resid1, cfg.factor_rule, cfg.kmax).map_err(|e| e.in_stage("factor selection"))?;
        let est = if sel.chosen_r == 0 {
            FactorEstimate::none(&resid1)
        } else {
            pca_factors(&resid1, sel.chosen_r).map_err(|e| e.in_stage("factors"))?
        };
        (Some(sel), est)
    };
    if cfg.run_diagnostics && factor_estimate.r > 0 {
        diagnostics.stage2 =
            Some(diagnostic(&factor_estimate.residuals, cfg, 2).map_err(|e| e.in_stage("stage-2 diagnostic"))?);
    }

    let r = factor_estimate.r;
    let third_stage = targets
        .par_iter()
        .map(|&i| {
            stage3_fit(&resid1, &factor_estimate, i, cfg)
                .map_err(|e| e.in_series(&panel.series_ids()[i]).in_stage("third stage"))
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(third_stage.iter().all(|f| f.loading.len() == r));

    Ok(FarmModel {
        series_ids: panel.series_ids().to_vec(),
        n,
        t,
        first_stage,
        factor_estimate,
        selection,
        factors_skipped: skip,
        third_stage,
        diagnostics,
        config: cfg.clone(),
    })
}

fn stage3_fit(resid1: &DMatrix<f64>, stage2: &FactorEstimate, i: usize, cfg: &FarmConfig) -> Result<TargetFit> {
    let (n, t) = resid1.shape();
    let r = stage2.r;
    let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
    let (y, x, loading, own_factors) = if r == 0 || cfg.stage3_factors == Stage3Factors::FullPanel {
        let u = &stage2.residuals;
        let y: Vec<f64> = u.row(i).iter().copied().collect();
        let x = DMatrix::from_fn(t, others.len(), |s, a| u[(others[a], s)]);
        (y, x, stage2.loadings.row(i).iter().copied().collect::<Vec<f64>>(), None)
    } else {
        let pool = resid1.select_rows(&others);
        let est = pca_factors(&pool, r)?;
        // F'F / T = I, so the least-squares loading is R_i F / T
        let target_row = resid1.row(i).transpose();
        let loading: Vec<f64> = (est.factors.transpose() * &target_row / t as f64)
            .iter()
            .copied()
            .collect();
        let y: Vec<f64> = (0..t)
            .map(|s| resid1[(i, s)] - (0..r).map(|k| loading[k] * est.factors[(s, k)]).sum::<f64>())
            .collect();
        let x = est.residuals.transpose();
        (
            y,
            x,
            loading,
            Some(OwnFactors {
                factors: est.factors,
                other_loadings: est.loadings,
            }),
        )
    };
    let fit = fit_with_penalty(&y, &x, &cfg.penalty.with_intercept(false))?;
    let residuals = fit.residuals(&y, &x);
    Ok(TargetFit {
        target: i,
        loading,
        own_factors,
        fit,
        component: y,
        residuals,
    })
}

/// `gamma_i'x + lambda_i'f + theta_i'u_{-i}` (the stage-1 intercept included).
pub fn farm_predict(model: &FarmModel, i: usize, x_new: &[f64], f_new: &[f64], u_minus_new: &[f64]) -> Result<f64> {
    let target = model.target(i)?;
    if f_new.len() != model.r() {
        return Err(FarmError::Dimension(format!(
            "{} factor values for r = {}",
            f_new.len(),
            model.r()
        )));
    }
    if u_minus_new.len() != model.n - 1 {
        return Err(FarmError::Dimension(format!(
            "{} idiosyncratic values, expected {}",
            u_minus_new.len(),
            model.n - 1
        )));
    }
    let stage1 = model.first_stage[i].predict(x_new)?;
    let common: f64 = target.loading.iter().zip(f_new).map(|(a, b)| a * b).sum();
    Ok(stage1 + common + target.fit.predict(u_minus_new))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesVariances {
    pub series: String,
    pub observed: f64,
    pub stage1: f64,
    pub stage2: f64,
    /// Only for stage-3 targets.
    pub stage3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagewiseReport {
    pub n: usize,
    pub t: usize,
    pub chosen_r: usize,
    pub factors_skipped: bool,
    pub factor_rule: Option<FactorRule>,
    pub criterion_values: Vec<f64>,
    pub variances: Vec<SeriesVariances>,
    pub stage1_p_value: Option<f64>,
    pub stage2_p_value: Option<f64>,
    /// `(target, active-set size)`.
    pub active_set_sizes: Vec<(usize, usize)>,
}

pub fn stagewise_report(model: &FarmModel) -> StagewiseReport {
    let u = &model.factor_estimate.residuals;
    let variances = (0..model.n)
        .map(|i| {
            let fs = &model.first_stage[i];
            let y: Vec<f64> = fs.fitted.iter().zip(&fs.residuals).map(|(a, b)| a + b).collect();
            let target = model.third_stage.iter().find(|f| f.target == i);
            let u_i: Vec<f64> = match target {
                Some(f) => f.component.clone(),
                None => u.row(i).iter().copied().collect(),
            };
            SeriesVariances {
                series: model.series_ids[i].clone(),
                observed: variance(&y),
                stage1: variance(&fs.residuals),
                stage2: variance(&u_i),
                stage3: target.map(|f| variance(&f.residuals)),
            }
        })
        .collect();
    StagewiseReport {
        n: model.n,
        t: model.t,
        chosen_r: model.r(),
        factors_skipped: model.factors_skipped,
        factor_rule: model.selection.as_ref().map(|s| s.method),
        criterion_values: model
            .selection
            .as_ref()
            .map(|s| s.criterion_values.clone())
            .unwrap_or_default(),
        variances,
        stage1_p_value: model.diagnostics.stage1.as_ref().map(|s| s.p_value),
        stage2_p_value: model.diagnostics.stage2.as_ref().map(|s| s.p_value),
        active_set_sizes: model
            .third_stage
            .iter()
            .map(|f| (f.target, f.fit.active_set.len()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 13);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// One factor plus iid noise, with a constant offset per series.
    fn one_factor_panel(n: usize, t: usize, seed: u64) -> PanelData {
        let f = normal(1, t, seed);
        let l = normal(n, 1, seed + 1);
        let e = normal(n, t, seed + 2);
        let y = DMatrix::from_fn(n, t, |i, s| {
            1.0 + i as f64 + 2.0 * l[(i, 0)] * f[(0, s)] + 0.5 * e[(i, s)]
        });
        PanelData::from_matrix(y).unwrap()
    }

    #[test]
    fn null_links_leave_stage_three_empty() {
        let mut empty = 0;
        for rep in 0..50 {
            let panel = one_factor_panel(30, 200, 10 * rep + 7);
            let model = farm_fit(&panel, &Covariates::None, &[0], &FarmConfig::default()).unwrap();
            assert_eq!(model.r(), 1);
            empty += model.third_stage[0].fit.active_set.is_empty() as usize;
        }
        assert!(empty >= 45, "{empty}/50");
    }

    #[test]
    fn in_sample_prediction_telescopes() {
        let panel = one_factor_panel(12, 80, 3);
        let x = normal(80, 2, 99);
        for mode in [Stage3Factors::LeaveTargetOut, Stage3Factors::FullPanel] {
            let cfg = FarmConfig {
                factor_rule: FactorRule::Fixed(2),
                stage3_factors: mode,
                ..Default::default()
            };
            let model = farm_fit(&panel, &Covariates::Shared(x.clone()), &[0, 5], &cfg).unwrap();
            for &i in &[0usize, 5] {
                let v = &model.target(i).unwrap().residuals;
                for t in 0..80 {
                    let xt: Vec<f64> = x.row(t).iter().copied().collect();
                    let f = model.factors_at(i, t).unwrap();
                    let u = model.idiosyncratic_others(i, t).unwrap();
                    let pred = farm_predict(&model, i, &xt, &f, &u).unwrap();
                    let y = panel.values()[(i, t)];
                    assert!((pred - (y - v[t])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_inputs_and_nesting() {
        let panel = one_factor_panel(10, 60, 4);
        let model = farm_fit(&panel, &Covariates::None, &[2], &FarmConfig::default()).unwrap();
        let zero = farm_predict(&model, 2, &[], &vec![0.0; model.r()], &[0.0; 9]).unwrap();
        assert_eq!(zero, model.first_stage[2].intercept());

        // infinite penalty: FarmPredict equals the factor regression
        let cfg = FarmConfig {
            penalty: PenaltyChoice::Infinite,
            ..Default::default()
        };
        let pcr = farm_fit(&panel, &Covariates::None, &[2], &cfg).unwrap();
        let f = pcr.factors_at(2, 7).unwrap();
        let u = pcr.idiosyncratic_others(2, 7).unwrap();
        let direct = pcr.first_stage[2].intercept()
            + pcr.third_stage[0]
                .loading
                .iter()
                .zip(&f)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        assert_eq!(farm_predict(&pcr, 2, &[], &f, &u).unwrap(), direct);

        // and with the factors switched off too, the stage-1 model
        let cfg = FarmConfig {
            penalty: PenaltyChoice::Infinite,
            gate: FactorGate::Never,
            ..Default::default()
        };
        let bare = farm_fit(&panel, &Covariates::None, &[2], &cfg).unwrap();
        assert_eq!(bare.r(), 0);
        assert_eq!(
            farm_predict(&bare, 2, &[], &[], &u).unwrap(),
            bare.first_stage[2].intercept()
        );
        assert!(farm_predict(&bare, 3, &[], &[], &u).is_err());
    }

    #[test]
    fn variances_shrink_stage_by_stage() {
        let panel = one_factor_panel(15, 100, 5);
        let x = normal(100, 1, 6);
        let model = farm_fit(&panel, &Covariates::Shared(x), &[0, 1, 2], &FarmConfig::default()).unwrap();
        let report = stagewise_report(&model);
        for v in &report.variances {
            assert!(v.observed >= v.stage1 - 1e-12);
            assert!(v.stage1 >= v.stage2 - 1e-12);
            if let Some(s3) = v.stage3 {
                assert!(v.stage2 >= s3 - 1e-12);
            }
        }
        let json = serde_json::to_string(&report).unwrap();
        let back: StagewiseReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn skipped_factors_are_reported() {
        let panel = PanelData::from_matrix(normal(8, 120, 7)).unwrap();
        let cfg = FarmConfig {
            factor_rule: FactorRule::Fixed(0),
            ..Default::default()
        };
        let model = farm_fit(&panel, &Covariates::None, &[0], &cfg).unwrap();
        assert_eq!(model.r(), 0);
        assert!(model.factors_skipped);
        let cfg = FarmConfig {
            gate: FactorGate::Never,
            ..Default::default()
        };
        let report = stagewise_report(&farm_fit(&panel, &Covariates::None, &[0], &cfg).unwrap());
        assert!(report.factors_skipped);
        assert_eq!(report.chosen_r, 0);
        assert!(report.factor_rule.is_none());
    }

    #[test]
    fn diagnostics_gate_on_noise() {
        let mut quiet = 0;
        let reps = 30;
        for rep in 0..reps {
            let panel = PanelData::from_matrix(normal(6, 150, 100 + rep)).unwrap();
            let cfg = FarmConfig {
                run_diagnostics: true,
                // short window: the T/3 default over-rejects on samples this small
                test: TestConfig {
                    draws: 300,
                    seed: rep,
                    bandwidth: Some(5.0),
                    ..Default::default()
                },
                ..Default::default()
            };
            let model = farm_fit(&panel, &Covariates::None, &[0], &cfg).unwrap();
            let p = model.diagnostics.stage1.as_ref().unwrap().p_value;
            if p > 0.05 {
                quiet += 1;
                assert!(model.factors_skipped);
            }
        }
        assert!(quiet as f64 >= 0.85 * reps as f64, "{quiet}/{reps}");
    }

    #[test]
    fn model_round_trips_through_json() {
        let panel = one_factor_panel(6, 40, 8);
        let model = farm_fit(&panel, &Covariates::None, &[1], &FarmConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = FarmModel::load(&path).unwrap();
        assert_eq!(back, model);
        let value: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        let loadings = &value["factor_estimate"]["loadings"];
        assert_eq!(loadings["rows"], 6);
        assert_eq!(loadings["data"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn bad_targets() {
        let panel = one_factor_panel(5, 30, 9);
        assert!(farm_fit(&panel, &Covariates::None, &[], &FarmConfig::default()).is_err());
        assert!(farm_fit(&panel, &Covariates::None, &[5], &FarmConfig::default()).is_err());
    }
}
