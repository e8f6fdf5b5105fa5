//! Monte Carlo design and experiment drivers.
//!
//! The panel is `Y_it = L_i'F_t + W_it` with AR(1) factors, AR(1)
//! idiosyncratic terms `W_it = phi W_i,t-1 + U_it`, and a contemporaneous
//! link `U_1t = sum_k theta_k U_(k+1)t + V_1t` from the first series to
//! series 2..5. Replication `b` draws everything (loadings included) from the
//! stream `(seed, b)`, so results do not depend on scheduling.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covtest::{cov_structure_test, IndexSet, TestConfig};
use crate::error::{FarmError, Result};
use crate::factors::{pca_factors, select_factors, FactorEstimate, FactorRule, InfoCriterion};
use crate::panel::PanelData;
use crate::regression::{first_stage_filter, ols_fit, Covariates};
use crate::rng::{derive_seed, stream_rng};
use crate::sparse::{fit_with_penalty, PenaltyChoice};

/// Link coefficients of the alternative design.
pub const POWER_THETA: [f64; 4] = [0.8, 0.9, -0.7, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub t: usize,
    pub n: usize,
    pub r: usize,
    /// Idiosyncratic AR coefficient.
    pub phi: f64,
    /// Loadings of `U_1` on `U_2..U_5`.
    pub theta: [f64; 4],
    pub factor_ar: f64,
    /// Variance of the innovations `V`.
    pub v_variance: f64,
    pub replications: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            t: 100,
            n: 50,
            r: 3,
            phi: 0.0,
            theta: [0.0; 4],
            factor_ar: 0.8,
            v_variance: 0.25,
            replications: 500,
            seed: 0,
            burn_in: 500,
        }
    }
}

impl SimulationConfig {
    pub fn size_design(t: usize, n: usize) -> Self {
        SimulationConfig {
            t,
            n,
            ..Default::default()
        }
    }

    pub fn power_design(t: usize, n: usize) -> Self {
        SimulationConfig {
            t,
            n,
            theta: POWER_THETA,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FarmError::InvalidInput(msg));
        if self.t < 2 || self.n < 2 {
            return bad(format!("need T >= 2 and n >= 2, got T = {}, n = {}", self.t, self.n));
        }
        if self.r == 0 {
            return bad("factor count r must be positive".into());
        }
        if self.theta.iter().any(|&v| v != 0.0) && self.n < 5 {
            return bad(format!("a nonzero link needs n >= 5, got {}", self.n));
        }
        let reals = [self.phi, self.factor_ar, self.v_variance];
        if reals.iter().chain(&self.theta).any(|v| !v.is_finite()) {
            return bad("non-finite simulation parameter".into());
        }
        if self.phi.abs() >= 1.0 || self.factor_ar.abs() >= 1.0 {
            return bad(format!(
                "AR coefficients must be inside (-1, 1): phi = {}, factor_ar = {}",
                self.phi, self.factor_ar
            ));
        }
        if self.v_variance <= 0.0 {
            return bad(format!("v_variance must be positive, got {}", self.v_variance));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.burn_in < 100 {
            return bad(format!("burn_in must be at least 100, got {}", self.burn_in));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: PanelData,
    /// `T x r`.
    pub true_f: DMatrix<f64>,
    /// `n x r`.
    pub true_lambda: DMatrix<f64>,
    /// `n x T`.
    pub true_u: DMatrix<f64>,
    /// `n x T`.
    pub true_w: DMatrix<f64>,
}

pub fn simulate_dgp(cfg: &SimulationConfig, replication: usize) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let (n, t, r) = (cfg.n, cfg.t, cfg.r);
    let mut rng = stream_rng(cfg.seed, replication as u64);
    let mut z = move || -> f64 { rng.sample(StandardNormal) };

    let lambda = DMatrix::from_fn(n, r, |i, _| if i == 0 { -6.0 + 0.2 * z() } else { 2.0 + z() });

    let total = cfg.burn_in + t;
    let mut f = DMatrix::zeros(t, r);
    let mut f_prev = vec![0.0; r];
    for s in 0..total {
        for (k, prev) in f_prev.iter_mut().enumerate() {
            *prev = cfg.factor_ar * *prev + z();
            if s >= cfg.burn_in {
                f[(s - cfg.burn_in, k)] = *prev;
            }
        }
    }

    let sd = cfg.v_variance.sqrt();
    let mut u = DMatrix::zeros(n, t);
    let mut w = DMatrix::zeros(n, t);
    let mut u_now = vec![0.0; n];
    let mut w_prev = vec![0.0; n];
    for s in 0..total {
        for v in u_now.iter_mut() {
            *v = sd * z();
        }
        let link: f64 = cfg
            .theta
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(k, c)| c * u_now[k + 1])
            .sum();
        u_now[0] += link;
        for i in 0..n {
            w_prev[i] = cfg.phi * w_prev[i] + u_now[i];
        }
        if s >= cfg.burn_in {
            let col = s - cfg.burn_in;
            for i in 0..n {
                u[(i, col)] = u_now[i];
                w[(i, col)] = w_prev[i];
            }
        }
    }

    let y = &lambda * f.transpose() + &w;
    Ok(SimulatedPanel {
        panel: PanelData::from_matrix(y)?,
        true_f: f,
        true_lambda: lambda,
        true_u: u,
        true_w: w,
    })
}

/// How the residual panel handed to the test is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scenario {
    /// Regress every series on the true factors (with intercept).
    KnownFactors,
    /// PCA with the true factor count.
    KnownR,
    Er,
    Ic(InfoCriterion),
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::KnownFactors,
        Scenario::KnownR,
        Scenario::Er,
        Scenario::Ic(InfoCriterion::Ic1),
        Scenario::Ic(InfoCriterion::Ic2),
        Scenario::Ic(InfoCriterion::Ic3),
        Scenario::Ic(InfoCriterion::Ic4),
    ];

    /// The factor-count rule, `None` when the factors are observed.
    pub fn factor_rule(self, r: usize) -> Option<FactorRule> {
        match self {
            Scenario::KnownFactors => None,
            Scenario::KnownR => Some(FactorRule::Fixed(r)),
            Scenario::Er => Some(FactorRule::Er),
            Scenario::Ic(c) => Some(FactorRule::Ic(c)),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::KnownFactors => write!(f, "known-factors"),
            Scenario::KnownR => write!(f, "known-r"),
            Scenario::Er => write!(f, "er"),
            Scenario::Ic(c) => write!(f, "ic{}", *c as usize + 1),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = FarmError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "known-factors" | "known" => Ok(Scenario::KnownFactors),
            "known-r" => Ok(Scenario::KnownR),
            other => match other.parse::<FactorRule>() {
                Ok(FactorRule::Er) => Ok(Scenario::Er),
                Ok(FactorRule::Ic(c)) => Ok(Scenario::Ic(c)),
                _ => Err(FarmError::InvalidInput(format!("unknown scenario {s:?}"))),
            },
        }
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Scenario {
    type Error = FarmError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Idiosyncratic estimate for one replication and the factor count used.
pub fn scenario_residuals(sim: &SimulatedPanel, scenario: Scenario, r: usize) -> Result<(DMatrix<f64>, usize)> {
    match scenario.factor_rule(r) {
        None => {
            let (resid, _) = first_stage_filter(&sim.panel, &Covariates::Shared(sim.true_f.clone()), true)?;
            Ok((resid, sim.true_f.ncols()))
        }
        Some(rule) => {
            let (centred, _) = first_stage_filter(&sim.panel, &Covariates::None, true)?;
            let est = estimate_factors(&centred, rule, None)?;
            Ok((est.residuals, est.r))
        }
    }
}

fn estimate_factors(centred: &DMatrix<f64>, rule: FactorRule, kmax: Option<usize>) -> Result<FactorEstimate> {
    let chosen = select_factors(centred, rule, kmax)?.chosen_r;
    if chosen == 0 {
        Ok(FactorEstimate::none(centred))
    } else {
        pca_factors(centred, chosen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerRun {
    pub scenario: Scenario,
    pub t: usize,
    pub n: usize,
    pub replications: usize,
    pub levels: Vec<f64>,
    /// Rejection frequency per entry of `levels`.
    pub rejection: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Factor count used in each replication.
    pub selected_r: Vec<usize>,
}

/// Test `Cov(U_1, U_j) = 0, j = 2..n` in every replication and tabulate rejections.
///
/// Replication `b` uses bootstrap seed `derive_seed(test.seed, b)`.
pub fn run_size_power(cfg: &SimulationConfig, scenario: Scenario, test: &TestConfig) -> Result<SizePowerRun> {
    cfg.validate()?;
    let set = IndexSet::row(cfg.n, 0)?;
    let null = vec![0.0; set.d()];
    let per_rep: Vec<(Vec<bool>, f64, usize)> = (0..cfg.replications)
        .into_par_iter()
        .map(|b| {
            let sim = simulate_dgp(cfg, b)?;
            let (u_hat, r) = scenario_residuals(&sim, scenario, cfg.r)?;
            let tc = TestConfig {
                seed: derive_seed(test.seed, b as u64),
                ..test.clone()
            };
            let res = cov_structure_test(&u_hat, &set, &null, &tc)?;
            let flags = test
                .levels
                .iter()
                .map(|&a| res.rejects(a))
                .collect::<Result<Vec<_>>>()?;
            Ok((flags, res.p_value, r))
        })
        .collect::<Result<_>>()?;
    let reps = cfg.replications as f64;
    let rejection = (0..test.levels.len())
        .map(|k| per_rep.iter().filter(|x| x.0[k]).count() as f64 / reps)
        .collect();
    Ok(SizePowerRun {
        scenario,
        t: cfg.t,
        n: cfg.n,
        replications: cfg.replications,
        levels: test.levels.clone(),
        rejection,
        p_values: per_rep.iter().map(|x| x.1).collect(),
        selected_r: per_rep.iter().map(|x| x.2).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSelectionRun {
    pub rule: FactorRule,
    pub t: usize,
    pub n: usize,
    pub true_r: usize,
    pub selected_r: Vec<usize>,
}

impl FactorSelectionRun {
    pub fn frequency_correct(&self) -> f64 {
        self.frequency(|r| r == self.true_r)
    }

    pub fn frequency_under(&self) -> f64 {
        self.frequency(|r| r < self.true_r)
    }

    fn frequency(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.selected_r.iter().filter(|&&r| pred(r)).count() as f64 / self.selected_r.len().max(1) as f64
    }
}

/// Selected factor count per replication on the demeaned panel.
pub fn run_factor_selection(
    cfg: &SimulationConfig,
    rule: FactorRule,
    kmax: Option<usize>,
) -> Result<FactorSelectionRun> {
    cfg.validate()?;
    let selected_r = (0..cfg.replications)
        .into_par_iter()
        .map(|b| {
            let sim = simulate_dgp(cfg, b)?;
            let (centred, _) = first_stage_filter(&sim.panel, &Covariates::None, true)?;
            Ok(select_factors(&centred, rule, kmax)?.chosen_r)
        })
        .collect::<Result<_>>()?;
    Ok(FactorSelectionRun {
        rule,
        t: cfg.t,
        n: cfg.n,
        true_r: cfg.r,
        selected_r,
    })
}

/// Forecasting methods compared in the informational-gains experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMethod {
    /// LASSO of the first series on all others.
    Sr,
    /// OLS of the first series on factors estimated from the others.
    Pcr,
    /// PCR plus a LASSO of its residual on the others' idiosyncratic parts.
    FarmPredict,
}

impl GainMethod {
    pub const ALL: [GainMethod; 3] = [GainMethod::Sr, GainMethod::Pcr, GainMethod::FarmPredict];
}

impl fmt::Display for GainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainMethod::Sr => "sr",
            GainMethod::Pcr => "pcr",
            GainMethod::FarmPredict => "farmpredict",
        })
    }
}

impl std::str::FromStr for GainMethod {
    type Err = FarmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sr" => Ok(GainMethod::Sr),
            "pcr" => Ok(GainMethod::Pcr),
            "farmpredict" | "farm" => Ok(GainMethod::FarmPredict),
            _ => Err(FarmError::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoGainsRun {
    pub rule: FactorRule,
    pub t: usize,
    pub n: usize,
    pub folds: usize,
    pub methods: Vec<GainMethod>,
    /// `mse[b][k]`: fold-averaged held-out MSE of `methods[k]` in replication `b`.
    pub mse: Vec<Vec<f64>>,
}

impl InfoGainsRun {
    pub fn mean_mse(&self, method: GainMethod) -> Option<f64> {
        let k = self.methods.iter().position(|&m| m == method)?;
        Some(self.mse.iter().map(|row| row[k]).sum::<f64>() / self.mse.len().max(1) as f64)
    }

    /// Share of replications where `a` has strictly smaller MSE than `b`.
    pub fn win_rate(&self, a: GainMethod, b: GainMethod) -> Option<f64> {
        let ka = self.methods.iter().position(|&m| m == a)?;
        let kb = self.methods.iter().position(|&m| m == b)?;
        Some(self.mse.iter().filter(|row| row[ka] < row[kb]).count() as f64 / self.mse.len().max(1) as f64)
    }
}

/// Contiguous blocks `[start, end)` covering `0..t`.
pub fn fold_blocks(t: usize, folds: usize) -> Result<Vec<(usize, usize)>> {
    if folds < 2 || t < 2 * folds {
        return Err(FarmError::InvalidInput(format!(
            "cannot split T = {t} into {folds} folds of at least 2"
        )));
    }
    Ok((0..folds).map(|k| (k * t / folds, (k + 1) * t / folds)).collect())
}

/// Held-out MSE of predicting series 1 from the others, by contiguous-block CV.
pub fn run_info_gains(
    cfg: &SimulationConfig,
    folds: usize,
    methods: &[GainMethod],
    rule: FactorRule,
    penalty: &PenaltyChoice,
) -> Result<InfoGainsRun> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(FarmError::InvalidInput("no methods requested".into()));
    }
    let blocks = fold_blocks(cfg.t, folds)?;
    let penalty = penalty.with_intercept(true);
    let mse = (0..cfg.replications)
        .into_par_iter()
        .map(|b| {
            let sim = simulate_dgp(cfg, b)?;
            let mut sums = vec![0.0; methods.len()];
            for &(lo, hi) in &blocks {
                let fold = cv_fold(sim.panel.values(), lo, hi, methods, rule, &penalty)?;
                for (s, v) in sums.iter_mut().zip(fold) {
                    *s += v;
                }
            }
            Ok(sums.into_iter().map(|s| s / folds as f64).collect())
        })
        .collect::<Result<_>>()?;
    Ok(InfoGainsRun {
        rule,
        t: cfg.t,
        n: cfg.n,
        folds,
        methods: methods.to_vec(),
        mse,
    })
}

/// One fold: train on columns outside `[lo, hi)`, return the held-out MSE per method.
fn cv_fold(
    y: &DMatrix<f64>,
    lo: usize,
    hi: usize,
    methods: &[GainMethod],
    rule: FactorRule,
    penalty: &PenaltyChoice,
) -> Result<Vec<f64>> {
    let (n, t) = y.shape();
    let train: Vec<usize> = (0..lo).chain(hi..t).collect();
    let test: Vec<usize> = (lo..hi).collect();
    let (m, tr, te) = (n - 1, train.len(), test.len());
    let target_tr: Vec<f64> = train.iter().map(|&s| y[(0, s)]).collect();
    let target_te: Vec<f64> = test.iter().map(|&s| y[(0, s)]).collect();
    let others_tr = DMatrix::from_fn(m, tr, |i, k| y[(i + 1, train[k])]);
    let others_te = DMatrix::from_fn(m, te, |i, k| y[(i + 1, test[k])]);

    let needs_factors = methods.iter().any(|&x| x != GainMethod::Sr);
    let mut pcr_pred = vec![0.0; te];
    let mut farm_pred = vec![0.0; te];
    if needs_factors {
        let means: Vec<f64> = others_tr.row_iter().map(|row| row.mean()).collect();
        let centred_tr = DMatrix::from_fn(m, tr, |i, k| others_tr[(i, k)] - means[i]);
        let centred_te = DMatrix::from_fn(m, te, |i, k| others_te[(i, k)] - means[i]);
        let est = estimate_factors(&centred_tr, rule, None)?;
        let (f_te, u_te) = if est.r == 0 {
            (DMatrix::zeros(te, 0), centred_te.clone())
        } else {
            // Held-out factors by projection on the training loadings.
            let l = &est.loadings;
            let ltl = (l.transpose() * l)
                .try_inverse()
                .ok_or_else(|| FarmError::RankDeficient {
                    column: "loadings".into(),
                })?;
            let f_te = centred_te.transpose() * l * ltl;
            let u_te = &centred_te - l * f_te.transpose();
            (f_te, u_te)
        };
        let pcr = ols_fit(&target_tr, &est.factors, true)?;
        for k in 0..te {
            let f_row: Vec<f64> = f_te.row(k).iter().copied().collect();
            pcr_pred[k] = pcr.predict(&f_row)?;
        }
        if methods.contains(&GainMethod::FarmPredict) {
            let design = est.residuals.transpose();
            let lasso = fit_with_penalty(&pcr.residuals, &design, penalty)?;
            for k in 0..te {
                let u_row: Vec<f64> = u_te.column(k).iter().copied().collect();
                farm_pred[k] = pcr_pred[k] + lasso.predict(&u_row);
            }
        }
    }
    let mut sr_pred = vec![0.0; te];
    if methods.contains(&GainMethod::Sr) {
        let lasso = fit_with_penalty(&target_tr, &others_tr.transpose(), penalty)?;
        for k in 0..te {
            let x_row: Vec<f64> = others_te.column(k).iter().copied().collect();
            sr_pred[k] = lasso.predict(&x_row);
        }
    }
    let mse = |pred: &[f64]| pred.iter().zip(&target_te).map(|(p, a)| (a - p).powi(2)).sum::<f64>() / te as f64;
    Ok(methods
        .iter()
        .map(|m| match m {
            GainMethod::Sr => mse(&sr_pred),
            GainMethod::Pcr => mse(&pcr_pred),
            GainMethod::FarmPredict => mse(&farm_pred),
        })
        .collect())
}

/// Rows `scenario,T,n,level,rejection` for a set of runs.
pub fn size_power_csv(runs: &[SizePowerRun]) -> String {
    let mut out = String::from("scenario,T,n,level,rejection\n");
    for run in runs {
        for (a, p) in run.levels.iter().zip(&run.rejection) {
            out.push_str(&format!("{},{},{},{},{}\n", run.scenario, run.t, run.n, a, p));
        }
    }
    out
}

/// Rows `rule,T,n,method,mse`.
pub fn info_gains_csv(runs: &[InfoGainsRun]) -> String {
    let mut out = String::from("rule,T,n,method,mse\n");
    for run in runs {
        for &m in &run.methods {
            let v = run.mean_mse(m).unwrap_or(f64::NAN);
            out.push_str(&format!("{},{},{},{},{}\n", run.rule, run.t, run.n, m, v));
        }
    }
    out
}

/// Rows `rule,T,n,true_r,correct,under`.
pub fn factor_selection_csv(runs: &[FactorSelectionRun]) -> String {
    let mut out = String::from("rule,T,n,true_r,correct,under\n");
    for run in runs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            run.rule,
            run.t,
            run.n,
            run.true_r,
            run.frequency_correct(),
            run.frequency_under()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, mean, row_vec, variance};

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn replications_are_reproducible_and_distinct() {
        let cfg = SimulationConfig {
            seed: 11,
            ..SimulationConfig::power_design(60, 12)
        };
        let a = simulate_dgp(&cfg, 3).unwrap();
        let b = simulate_dgp(&cfg, 3).unwrap();
        let c = simulate_dgp(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.panel.values(), c.panel.values());
        assert_ne!(a.true_lambda, c.true_lambda);
    }

    #[test]
    fn panel_reconstructs_from_truth() {
        let cfg = SimulationConfig {
            phi: 0.5,
            ..SimulationConfig::power_design(80, 20)
        };
        let sim = simulate_dgp(&cfg, 0).unwrap();
        let rebuilt = &sim.true_lambda * sim.true_f.transpose() + &sim.true_w;
        assert!(max_abs(&(sim.panel.values() - rebuilt)) < 1e-12);
        assert_eq!(sim.true_f.shape(), (80, 3));
        assert_eq!(sim.true_lambda.shape(), (20, 3));
    }

    #[test]
    fn null_design_has_independent_idiosyncratics() {
        let cfg = SimulationConfig::size_design(400, 10);
        let sim = simulate_dgp(&cfg, 0).unwrap();
        let rows: Vec<Vec<f64>> = (0..10).map(|i| row_vec(&sim.true_u, i)).collect();
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..10 {
            for j in i + 1..10 {
                total += cov(&rows[i], &rows[j]).abs() / 0.25;
                count += 1.0;
            }
        }
        assert!(total / count <= 4.0 / 400f64.sqrt(), "mean |corr| {}", total / count);
        // With phi = 0, W is U.
        assert_eq!(sim.true_u, sim.true_w);
    }

    #[test]
    fn planted_moments_match_long_sample() {
        let cfg = SimulationConfig::power_design(100_000, 5);
        let sim = simulate_dgp(&cfg, 0).unwrap();
        let u1 = row_vec(&sim.true_u, 0);
        let u2 = row_vec(&sim.true_u, 1);
        assert!((cov(&u1, &u2) - 0.2).abs() < 0.01, "cov {}", cov(&u1, &u2));
        let target = 0.25 * (1.0 + 0.64 + 0.81 + 0.49 + 0.25);
        assert!((variance(&u1) / target - 1.0).abs() < 0.02, "var {}", variance(&u1));
    }

    #[test]
    fn idiosyncratic_autocorrelation_matches_phi() {
        let cfg = SimulationConfig {
            phi: 0.5,
            ..SimulationConfig::size_design(100_000, 2)
        };
        let sim = simulate_dgp(&cfg, 1).unwrap();
        let w = row_vec(&sim.true_w, 1);
        let rho = cov(&w[1..], &w[..w.len() - 1]) / variance(&w);
        assert!((rho - 0.5).abs() < 0.02, "rho {rho}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimulationConfig::size_design(50, 10);
        for bad in [
            SimulationConfig {
                replications: 0,
                ..base.clone()
            },
            SimulationConfig {
                burn_in: 50,
                ..base.clone()
            },
            SimulationConfig {
                phi: 1.0,
                ..base.clone()
            },
            SimulationConfig {
                v_variance: f64::NAN,
                ..base.clone()
            },
            SimulationConfig {
                n: 4,
                theta: POWER_THETA,
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(base.validate().is_ok());
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("ic9".parse::<Scenario>().is_err());
    }

    #[test]
    fn folds_partition_the_sample() {
        let blocks = fold_blocks(103, 5).unwrap();
        assert_eq!(blocks.first().unwrap().0, 0);
        assert_eq!(blocks.last().unwrap().1, 103);
        assert!(blocks.windows(2).all(|w| w[0].1 == w[1].0));
        assert!(fold_blocks(9, 5).is_err());
    }

    #[test]
    fn known_factors_power_always_rejects() {
        let cfg = SimulationConfig {
            replications: 10,
            seed: 3,
            ..SimulationConfig::power_design(300, 30)
        };
        let test = TestConfig {
            draws: 300,
            seed: 5,
            ..Default::default()
        };
        let run = run_size_power(&cfg, Scenario::KnownFactors, &test).unwrap();
        assert_eq!(run.rejection, vec![1.0, 1.0, 1.0]);
        assert!(run.selected_r.iter().all(|&r| r == 3));
    }

    #[test]
    fn size_power_is_seed_deterministic() {
        let cfg = SimulationConfig {
            replications: 4,
            seed: 9,
            ..SimulationConfig::size_design(60, 15)
        };
        let test = TestConfig {
            draws: 200,
            seed: 1,
            ..Default::default()
        };
        let a = run_size_power(&cfg, Scenario::KnownR, &test).unwrap();
        let b = run_size_power(&cfg, Scenario::KnownR, &test).unwrap();
        assert_eq!(a, b);
        assert_eq!(size_power_csv(&[a.clone()]), size_power_csv(&[b]));
        assert_eq!(size_power_csv(&[a]).lines().count(), 4);
    }

    #[test]
    fn farmpredict_beats_pcr_on_linked_design() {
        let cfg = SimulationConfig {
            replications: 2,
            seed: 2,
            ..SimulationConfig::power_design(200, 40)
        };
        let run = run_info_gains(
            &cfg,
            5,
            &GainMethod::ALL,
            FactorRule::Fixed(3),
            &PenaltyChoice::default(),
        )
        .unwrap();
        let farm = run.mean_mse(GainMethod::FarmPredict).unwrap();
        let pcr = run.mean_mse(GainMethod::Pcr).unwrap();
        assert!(farm < pcr, "farm {farm} pcr {pcr}");
        // Factor-only error is the variance of W_1 (0.7975); full information leaves V_1 (0.25).
        assert!(pcr > 0.6 && pcr < 1.1, "pcr {pcr}");
        assert!(farm < 0.55, "farm {farm}");
        assert_eq!(run.win_rate(GainMethod::FarmPredict, GainMethod::Pcr), Some(1.0));
    }

    #[test]
    fn selection_run_counts() {
        let cfg = SimulationConfig {
            replications: 5,
            ..SimulationConfig::size_design(200, 100)
        };
        let run = run_factor_selection(&cfg, FactorRule::Ic(InfoCriterion::Ic1), None).unwrap();
        assert_eq!(run.selected_r.len(), 5);
        assert!(run.frequency_correct() >= 0.8);
        assert!(factor_selection_csv(&[run]).starts_with("rule,T,n,true_r,correct,under\n"));
    }
}
