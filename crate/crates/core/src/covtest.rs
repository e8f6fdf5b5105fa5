//! Covariance and partial-covariance estimates of idiosyncratic residuals, and
//! max-type structure tests calibrated by a Gaussian bootstrap.
//!
//! Residual panels are `n x T` and taken as centred: nothing here subtracts
//! row means before forming products.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::hac::{default_bandwidth, hac_long_run_cov, HacEstimate, KernelKind, KernelSpec};
use crate::rng::stream_rng;
use crate::sparse::{fit_gram_with_penalty, PenaltyChoice, Problem};

/// Entries of an `n x n` matrix under test, as 0-based `(row, col)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl IndexSet {
    /// Validated explicit list. Duplicates and out-of-range indices are errors.
    pub fn from_pairs(n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(FarmError::InvalidInput("index set is empty".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            if i >= n || j >= n {
                return Err(FarmError::InvalidInput(format!(
                    "pair ({}, {}) outside 1..={n}",
                    i + 1,
                    j + 1
                )));
            }
            if !seen.insert((i, j)) {
                return Err(FarmError::InvalidInput(format!(
                    "pair ({}, {}) listed twice",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(IndexSet { n, pairs })
    }

    /// Every off-diagonal entry, each unordered pair once (`i < j`).
    pub fn offdiag(n: usize) -> Result<Self> {
        let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::from_pairs(n, pairs)
    }

    /// Covariances of series `i` with every other series.
    pub fn row(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(FarmError::InvalidInput(format!("row {} outside 1..={n}", i + 1)));
        }
        Self::from_pairs(n, (0..n).filter(|&j| j != i).map(|j| (i, j)).collect())
    }

    /// Entries linking different blocks, for a block-diagonal null.
    /// `labels[i]` is the block of series `i`.
    pub fn blocks(labels: &[usize]) -> Result<Self> {
        let n = labels.len();
        let pairs = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| labels[i] != labels[j])
            .collect();
        Self::from_pairs(n, pairs)
    }

    /// Keep at most `cap` pairs. Small panels (`n <= 64`) and sets within the
    /// cap are returned whole; otherwise a seeded subsample in original order.
    pub fn capped(self, cap: usize, seed: u64) -> Self {
        if self.n <= 64 || self.pairs.len() <= cap || cap == 0 {
            return self;
        }
        let mut rng = stream_rng(seed, 0x5041_4952);
        let mut keep: Vec<usize> = sample(&mut rng, self.pairs.len(), cap).into_vec();
        keep.sort_unstable();
        let pairs = keep.into_iter().map(|k| self.pairs[k]).collect();
        IndexSet { n: self.n, pairs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn check_panel(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(FarmError::Dimension(format!(
                "index set built for n = {}, panel has n = {n}",
                self.n
            )));
        }
        Ok(())
    }
}

/// `(1/T) U U'`, without mean subtraction.
pub fn sample_cov(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = u.ncols();
    if t < 2 {
        return Err(FarmError::InsufficientData { needed: 2, got: t });
    }
    Ok(u * u.transpose() / t as f64)
}

/// Moment rows `U_i,t U_j,t - sigma_ij`, one row per pair of `set`.
pub fn cov_moment_series(u: &DMatrix<f64>, set: &IndexSet, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, t) = u.shape();
    set.check_panel(n)?;
    if sigma.shape() != (n, n) {
        return Err(FarmError::Dimension(format!(
            "covariance is {:?}, expected ({n}, {n})",
            sigma.shape()
        )));
    }
    Ok(DMatrix::from_fn(set.d(), t, |k, s| {
        let (i, j) = set.pairs[k];
        u[(i, s)] * u[(j, s)] - sigma[(i, j)]
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kernel: KernelKind,
    /// Kernel bandwidth; `None` uses `floor(T / 3)`.
    pub bandwidth: Option<f64>,
    /// Bootstrap draws `B`.
    pub draws: usize,
    pub seed: u64,
    /// Significance levels whose critical values are reported.
    pub levels: Vec<f64>,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            kernel: KernelKind::Bartlett,
            bandwidth: None,
            draws: 1000,
            seed: 0,
            levels: vec![0.10, 0.05, 0.01],
        }
    }
}

impl TestConfig {
    pub fn kernel_spec(&self, t: usize) -> Result<KernelSpec> {
        let h = match self.bandwidth {
            Some(h) => h,
            None => default_bandwidth(t)? as f64,
        };
        KernelSpec::new(self.kernel, h)
    }

    fn validate(&self) -> Result<()> {
        if self.draws < 100 {
            return Err(FarmError::InvalidInput(format!(
                "bootstrap needs at least 100 draws, got {}",
                self.draws
            )));
        }
        if let Some(&bad) = self.levels.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(FarmError::InvalidInput(format!(
                "significance level {bad} outside (0, 1)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub tau: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureTestResult {
    pub statistic: f64,
    pub null_values: Vec<f64>,
    /// Critical values `c*(tau)`, ascending in `tau`.
    pub quantiles: Vec<Quantile>,
    pub p_value: f64,
    pub draws: usize,
    pub seed: u64,
    pub d: usize,
    pub hac: HacEstimate,
    /// Largest LASSO active set behind a partial-covariance test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_active_set: Option<usize>,
}

/// `tau` as it appears in quantile keys, e.g. `0.95`.
fn tau_key(tau: f64) -> String {
    let s = format!("{:.6}", tau);
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

impl StructureTestResult {
    pub fn critical_value(&self, tau: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|q| (q.tau - tau).abs() < 1e-12)
            .map(|q| q.value)
    }

    /// `S > c*(1 - level)`. Levels outside the configured set are an error.
    pub fn rejects(&self, level: f64) -> Result<bool> {
        let c = self
            .critical_value(1.0 - level)
            .ok_or_else(|| FarmError::InvalidInput(format!("no critical value stored for level {level}")))?;
        Ok(self.statistic > c)
    }

    /// The single-object summary
    /// `{statistic, p_value, quantiles{...}, d, B, seed, kernel, bandwidth}`.
    pub fn to_flat_json(&self) -> serde_json::Value {
        let quantiles: serde_json::Map<String, serde_json::Value> = self
            .quantiles
            .iter()
            .map(|q| (tau_key(q.tau), serde_json::json!(q.value)))
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("statistic".into(), serde_json::json!(self.statistic));
        obj.insert("p_value".into(), serde_json::json!(self.p_value));
        obj.insert("quantiles".into(), serde_json::Value::Object(quantiles));
        obj.insert("d".into(), serde_json::json!(self.d));
        obj.insert("B".into(), serde_json::json!(self.draws));
        obj.insert("seed".into(), serde_json::json!(self.seed));
        obj.insert("kernel".into(), serde_json::json!(self.hac.kernel.kind.to_string()));
        obj.insert("bandwidth".into(), serde_json::json!(self.hac.kernel.bandwidth));
        serde_json::Value::Object(obj)
    }
}

/// Sorted bootstrap maxima `||A g_b||_inf`, `b = 0..draws`, with `A` the PSD
/// square root of the long-run covariance and `g_b` drawn from stream `b`.
pub fn bootstrap_maxima(hac: &HacEstimate, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let d = hac.dim();
    let root = hac.sqrt_factor()?;
    let columns: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let g = DMatrix::from_fn(d, draws, |k, b| columns[b][k]);
    let z = root * g;
    let mut maxima: Vec<f64> = (0..draws).map(|b| z.column(b).amax()).collect();
    maxima.sort_by(f64::total_cmp);
    Ok(maxima)
}

/// Order statistic `ceil(tau B)` of sorted draws.
pub fn order_quantile(sorted: &[f64], tau: f64) -> f64 {
    let b = sorted.len();
    let k = ((tau * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(b) - 1]
}

/// Calibrate `statistic` against the Gaussian bootstrap built on `hac`.
pub fn bootstrap_test(
    statistic: f64,
    null_values: Vec<f64>,
    hac: HacEstimate,
    cfg: &TestConfig,
) -> Result<StructureTestResult> {
    cfg.validate()?;
    if (0..hac.dim()).all(|k| hac.upsilon[(k, k)] == 0.0) {
        return Err(FarmError::DegenerateTest);
    }
    let sorted = bootstrap_maxima(&hac, cfg.draws, cfg.seed)?;
    let mut taus: Vec<f64> = cfg.levels.iter().map(|a| 1.0 - a).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let quantiles = taus
        .iter()
        .map(|&tau| Quantile {
            tau,
            value: order_quantile(&sorted, tau),
        })
        .collect();
    let exceed = sorted.iter().filter(|&&s| s >= statistic).count();
    let p_value = (1 + exceed) as f64 / (cfg.draws + 1) as f64;
    Ok(StructureTestResult {
        statistic,
        d: null_values.len(),
        null_values,
        quantiles,
        p_value,
        draws: cfg.draws,
        seed: cfg.seed,
        hac,
        max_active_set: None,
    })
}

fn max_statistic(estimates: &[f64], null: &[f64], t: usize) -> f64 {
    let root_t = (t as f64).sqrt();
    estimates
        .iter()
        .zip(null)
        .map(|(e, z)| (root_t * (e - z)).abs())
        .fold(0.0, f64::max)
}

fn check_null(null: &[f64], d: usize) -> Result<()> {
    if null.len() != d {
        return Err(FarmError::Dimension(format!(
            "{} null values for {d} pairs",
            null.len()
        )));
    }
    if null.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::InvalidInput("null values must be finite".into()));
    }
    Ok(())
}

/// Test `Sigma_D = null` on a residual panel `u` (n x T).
pub fn cov_structure_test(
    u: &DMatrix<f64>,
    set: &IndexSet,
    null: &[f64],
    cfg: &TestConfig,
) -> Result<StructureTestResult> {
    check_null(null, set.d())?;
    let t = u.ncols();
    let sigma = sample_cov(u)?;
    let estimates: Vec<f64> = set.pairs.iter().map(|&(i, j)| sigma[(i, j)]).collect();
    let statistic = max_statistic(&estimates, null, t);
    let moments = cov_moment_series(u, set, &sigma)?;
    let hac = hac_long_run_cov(&moments, &cfg.kernel_spec(t)?)?;
    bootstrap_test(statistic, null.to_vec(), hac, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLassoMeta {
    pub xi_ij: f64,
    pub xi_ji: f64,
    pub active_ij: usize,
    pub active_ji: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCovEstimate {
    pub pairs: Vec<(usize, usize)>,
    pub pi_hat: Vec<f64>,
    /// `(V_ij, V_ji)` per pair.
    pub residual_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub lasso_meta: Vec<PairLassoMeta>,
}

impl PartialCovEstimate {
    pub fn max_active_set(&self) -> usize {
        self.lasso_meta
            .iter()
            .map(|m| m.active_ij.max(m.active_ji))
            .max()
            .unwrap_or(0)
    }

    /// Moment rows `V_ij,t V_ji,t - pi_ij`.
    pub fn moment_series(&self) -> DMatrix<f64> {
        let t = self.residual_pairs.first().map_or(0, |r| r.0.len());
        DMatrix::from_fn(self.pairs.len(), t, |k, s| {
            let (a, b) = &self.residual_pairs[k];
            a[s] * b[s] - self.pi_hat[k]
        })
    }
}

struct PairFit {
    v_lo: Vec<f64>,
    v_hi: Vec<f64>,
    xi_lo: f64,
    xi_hi: f64,
    active_lo: usize,
    active_hi: usize,
}

/// LASSO residual of `u_target` on the rows in `others`, from the panel Gram.
fn nodewise_residual(
    u: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    target: usize,
    others: &[usize],
    penalty: &PenaltyChoice,
) -> Result<(Vec<f64>, f64, usize)> {
    let t = u.ncols();
    let m = others.len();
    let sub = DMatrix::from_fn(m, m, |a, b| gram[(others[a], others[b])]);
    let xty = DVector::from_fn(m, |a, _| gram[(others[a], target)]);
    let problem = Problem::from_gram(t, sub, xty, gram[(target, target)]);
    let fit = fit_gram_with_penalty(&problem, penalty)?;
    let mut v: Vec<f64> = u.row(target).iter().copied().collect();
    for &a in &fit.active_set {
        let c = fit.theta[a];
        let row = others[a];
        for (s, vs) in v.iter_mut().enumerate() {
            *vs -= c * u[(row, s)];
        }
    }
    Ok((v, fit.xi, fit.active_set.len()))
}

/// Partial covariances `pi_ij = (1/T) sum_t V_ij,t V_ji,t`, where `V_ij` is the
/// LASSO residual of series `i` on every series except `i` and `j`.
/// Regressions are shared between `(i, j)` and `(j, i)`.
pub fn partial_cov_estimate(u: &DMatrix<f64>, set: &IndexSet, penalty: &PenaltyChoice) -> Result<PartialCovEstimate> {
    let (n, t) = u.shape();
    set.check_panel(n)?;
    if n < 3 {
        return Err(FarmError::InsufficientData { needed: 3, got: n });
    }
    if let Some(&(i, _)) = set.pairs.iter().find(|(i, j)| i == j) {
        return Err(FarmError::InvalidInput(format!(
            "partial covariance needs i != j, got ({0}, {0})",
            i + 1
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::InvalidInput("residual panel has non-finite entries".into()));
    }
    // residuals are centred: no intercepts
    let penalty = penalty.with_intercept(false);
    let gram = u * u.transpose();
    let mut keys: Vec<(usize, usize)> = set.pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    keys.sort_unstable();
    keys.dedup();
    let fitted: Vec<PairFit> = keys
        .par_iter()
        .map(|&(lo, hi)| {
            let others: Vec<usize> = (0..n).filter(|&k| k != lo && k != hi).collect();
            let (v_lo, xi_lo, active_lo) = nodewise_residual(u, &gram, lo, &others, &penalty)?;
            let (v_hi, xi_hi, active_hi) = nodewise_residual(u, &gram, hi, &others, &penalty)?;
            Ok(PairFit {
                v_lo,
                v_hi,
                xi_lo,
                xi_hi,
                active_lo,
                active_hi,
            })
        })
        .collect::<Result<_>>()?;
    let cache: HashMap<(usize, usize), &PairFit> = keys.iter().copied().zip(fitted.iter()).collect();

    let mut pi_hat = Vec::with_capacity(set.d());
    let mut residual_pairs = Vec::with_capacity(set.d());
    let mut lasso_meta = Vec::with_capacity(set.d());
    for &(i, j) in &set.pairs {
        let f = cache[&(i.min(j), i.max(j))];
        let (vij, vji, meta) = if i < j {
            (
                &f.v_lo,
                &f.v_hi,
                PairLassoMeta {
                    xi_ij: f.xi_lo,
                    xi_ji: f.xi_hi,
                    active_ij: f.active_lo,
                    active_ji: f.active_hi,
                },
            )
        } else {
            (
                &f.v_hi,
                &f.v_lo,
                PairLassoMeta {
                    xi_ij: f.xi_hi,
                    xi_ji: f.xi_lo,
                    active_ij: f.active_hi,
                    active_ji: f.active_lo,
                },
            )
        };
        pi_hat.push(vij.iter().zip(vji).map(|(a, b)| a * b).sum::<f64>() / t as f64);
        residual_pairs.push((vij.clone(), vji.clone()));
        lasso_meta.push(meta);
    }
    Ok(PartialCovEstimate {
        pairs: set.pairs.clone(),
        pi_hat,
        residual_pairs,
        lasso_meta,
    })
}

/// Test `Pi_D = null` on a residual panel `u` (n x T).
pub fn pcov_structure_test(
    u: &DMatrix<f64>,
    set: &IndexSet,
    null: &[f64],
    penalty: &PenaltyChoice,
    cfg: &TestConfig,
) -> Result<StructureTestResult> {
    check_null(null, set.d())?;
    let t = u.ncols();
    let est = partial_cov_estimate(u, set, penalty)?;
    let statistic = max_statistic(&est.pi_hat, null, t);
    let hac = hac_long_run_cov(&est.moment_series(), &cfg.kernel_spec(t)?)?;
    let mut result = bootstrap_test(statistic, null.to_vec(), hac, cfg)?;
    result.max_active_set = Some(est.max_active_set());
    Ok(result)
}

/// Rejection counts per level across repeated tests.
pub fn rejection_frequencies<'a>(
    results: impl IntoIterator<Item = &'a StructureTestResult>,
    levels: &[f64],
) -> Result<BTreeMap<String, f64>> {
    let mut counts = vec![0usize; levels.len()];
    let mut total = 0usize;
    for r in results {
        total += 1;
        for (k, &a) in levels.iter().enumerate() {
            if r.rejects(a)? {
                counts[k] += 1;
            }
        }
    }
    Ok(levels
        .iter()
        .zip(counts)
        .map(|(&a, c)| (tau_key(a), c as f64 / total.max(1) as f64))
        .collect())
}
