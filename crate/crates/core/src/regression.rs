//! Dense least squares: the first-stage covariate filter and autoregressions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::panel::PanelData;

/// Smallest retained singular value relative to the largest.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Intercept first when `intercept_included`, then one entry per design column.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub intercept_included: bool,
}

impl OlsFit {
    pub fn intercept(&self) -> f64 {
        if self.intercept_included {
            self.coefficients[0]
        } else {
            0.0
        }
    }

    /// Slopes on the user-supplied design columns.
    pub fn slopes(&self) -> &[f64] {
        if self.intercept_included {
            &self.coefficients[1..]
        } else {
            &self.coefficients
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let slopes = self.slopes();
        if x.len() != slopes.len() {
            return Err(FarmError::Dimension(format!(
                "{} covariates for {} slopes",
                x.len(),
                slopes.len()
            )));
        }
        Ok(self.intercept() + slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }
}

/// A QR factorisation of a design, reusable across many response vectors.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    design: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    intercept: bool,
}

impl OlsSolver {
    pub fn new(design: &DMatrix<f64>, add_intercept: bool) -> Result<Self> {
        let t = design.nrows();
        let full = if add_intercept {
            let mut m = DMatrix::from_element(t, design.ncols() + 1, 1.0);
            m.columns_mut(1, design.ncols()).copy_from(design);
            m
        } else {
            design.clone()
        };
        let k = full.ncols();
        if t <= k {
            return Err(FarmError::InsufficientData { needed: k, got: t });
        }
        if full.iter().any(|v| !v.is_finite()) {
            return Err(FarmError::InvalidInput("design has non-finite entries".into()));
        }
        if k == 0 {
            return Ok(OlsSolver {
                design: full,
                q: DMatrix::zeros(t, 0),
                r: DMatrix::zeros(0, 0),
                intercept: add_intercept,
            });
        }
        let sv = full.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        let qr = full.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        if !(smax > 0.0) || smin < RANK_TOL * smax {
            let diag: Vec<f64> = (0..k).map(|j| r[(j, j)].abs()).collect();
            let dmax = diag.iter().cloned().fold(0.0, f64::max);
            let bad = diag
                .iter()
                .position(|&d| d <= RANK_TOL * dmax || dmax == 0.0)
                .unwrap_or_else(|| (0..k).min_by(|&a, &b| diag[a].total_cmp(&diag[b])).unwrap_or(0));
            let column = match (add_intercept, bad) {
                (true, 0) => "intercept".to_string(),
                (true, j) => (j - 1).to_string(),
                (false, j) => j.to_string(),
            };
            return Err(FarmError::RankDeficient { column });
        }
        Ok(OlsSolver {
            design: full,
            q,
            r,
            intercept: add_intercept,
        })
    }

    pub fn fit(&self, targets: &[f64]) -> Result<OlsFit> {
        let t = self.design.nrows();
        if targets.len() != t {
            return Err(FarmError::Dimension(format!(
                "{} targets for {} design rows",
                targets.len(),
                t
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(FarmError::InvalidInput("targets have non-finite entries".into()));
        }
        let y = DVector::from_column_slice(targets);
        let coef = if self.r.ncols() == 0 {
            DVector::zeros(0)
        } else {
            let qty = self.q.transpose() * &y;
            self.r
                .solve_upper_triangular(&qty)
                .ok_or_else(|| FarmError::RankDeficient {
                    column: "unknown".into(),
                })?
        };
        let fitted = &self.design * &coef;
        let residuals = &y - &fitted;
        Ok(OlsFit {
            coefficients: coef.iter().copied().collect(),
            residuals: residuals.iter().copied().collect(),
            fitted: fitted.iter().copied().collect(),
            intercept_included: self.intercept,
        })
    }
}

/// Least squares of `targets` on `design` (plus an intercept column when asked).
pub fn ols_fit(targets: &[f64], design: &DMatrix<f64>, add_intercept: bool) -> Result<OlsFit> {
    OlsSolver::new(design, add_intercept)?.fit(targets)
}

/// Observed covariates for the first stage. Matrices are `T x k`.
#[derive(Debug, Clone, Default)]
pub enum Covariates {
    #[default]
    None,
    /// One design used for every series (time trends, observed factors, ...).
    Shared(DMatrix<f64>),
    /// A separate design for each series.
    PerSeries(Vec<DMatrix<f64>>),
}

impl Covariates {
    pub fn for_series(&self, i: usize, t: usize) -> DMatrix<f64> {
        match self {
            Covariates::None => DMatrix::zeros(t, 0),
            Covariates::Shared(m) => m.clone(),
            Covariates::PerSeries(v) => v[i].clone(),
        }
    }

    fn validate(&self, n: usize, t: usize) -> Result<()> {
        let check = |m: &DMatrix<f64>| {
            if m.nrows() == t {
                Ok(())
            } else {
                Err(FarmError::Dimension(format!(
                    "covariate matrix has {} rows, panel has T = {t}",
                    m.nrows()
                )))
            }
        };
        match self {
            Covariates::None => Ok(()),
            Covariates::Shared(m) => check(m),
            Covariates::PerSeries(v) if v.len() != n => Err(FarmError::Dimension(format!(
                "{} covariate matrices for {n} series",
                v.len()
            ))),
            Covariates::PerSeries(v) => v.iter().try_for_each(check),
        }
    }
}

/// Regress every series on its covariates and collect the residual panel.
///
/// Returns the `n x T` residual panel and one fit per series. Errors carry the
/// offending series label.
pub fn first_stage_filter(
    panel: &PanelData,
    covariates: &Covariates,
    add_intercept: bool,
) -> Result<(DMatrix<f64>, Vec<OlsFit>)> {
    let (n, t) = (panel.n(), panel.t());
    covariates.validate(n, t)?;
    let ids = panel.series_ids();
    let fits: Vec<OlsFit> = match covariates {
        Covariates::PerSeries(designs) => (0..n)
            .into_par_iter()
            .map(|i| ols_fit(&panel.series(i), &designs[i], add_intercept).map_err(|e| e.in_series(&ids[i])))
            .collect::<Result<_>>()?,
        shared => {
            let design = shared.for_series(0, t);
            let solver = OlsSolver::new(&design, add_intercept).map_err(|e| e.in_series(&ids[0]))?;
            (0..n)
                .into_par_iter()
                .map(|i| solver.fit(&panel.series(i)).map_err(|e| e.in_series(&ids[i])))
                .collect::<Result<_>>()?
        }
    };
    let resid = DMatrix::from_fn(n, t, |i, j| fits[i].residuals[j]);
    Ok((resid, fits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub order: usize,
    pub intercept: f64,
    /// Lag-1 coefficient first.
    pub phi: Vec<f64>,
    pub residual_variance: f64,
    /// In-sample one-step fitted values for times `p..T`.
    pub fitted: Vec<f64>,
}

/// OLS autoregression of order `p` with intercept.
pub fn ar_fit(series: &[f64], p: usize) -> Result<ArFit> {
    let t = series.len();
    if p == 0 {
        return Err(FarmError::InvalidInput("AR order must be positive".into()));
    }
    if t <= 2 * p + 2 {
        return Err(FarmError::InsufficientData {
            needed: 2 * p + 2,
            got: t,
        });
    }
    let design = DMatrix::from_fn(t - p, p, |k, l| series[k + p - l - 1]);
    let fit = ols_fit(&series[p..], &design, true)?;
    let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
    Ok(ArFit {
        order: p,
        intercept: fit.coefficients[0],
        phi: fit.coefficients[1..].to_vec(),
        residual_variance: rss / (t - p - p - 1) as f64,
        fitted: fit.fitted,
    })
}

/// One-step forecast from the `p` most recent values, most recent first.
pub fn ar_forecast(fit: &ArFit, recent: &[f64]) -> Result<f64> {
    if recent.len() != fit.order {
        return Err(FarmError::Dimension(format!(
            "{} recent values for AR({})",
            recent.len(),
            fit.order
        )));
    }
    Ok(fit.intercept + fit.phi.iter().zip(recent).map(|(a, b)| a * b).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, mean};
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 0);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn exact_linear_recovery() {
        let x = normal_matrix(10, 2, 1);
        let y: Vec<f64> = (0..10).map(|t| x[(t, 0)] - 2.0 * x[(t, 1)]).collect();
        let f = ols_fit(&y, &x, false).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((f.coefficients[1] + 2.0).abs() < 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn intercept_only_is_mean() {
        let f = ols_fit(&[5.0; 7], &DMatrix::zeros(7, 0), true).unwrap();
        assert!((f.coefficients[0] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let x = normal_matrix(50, 3, 2);
        let beta = [0.5, -1.5, 2.0];
        let mut rng = stream_rng(3, 0);
        let y: Vec<f64> = (0..50)
            .map(|t| (0..3).map(|j| x[(t, j)] * beta[j]).sum::<f64>() + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let f = ols_fit(&y, &x, false).unwrap();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let oracle = xtx_inv * x.transpose() * DVector::from_column_slice(&y);
        for j in 0..3 {
            assert!((f.coefficients[j] - oracle[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn collinear_column_named() {
        let mut x = normal_matrix(20, 3, 4);
        let c0 = x.column(0).clone_owned();
        x.column_mut(2).copy_from(&(c0 * 2.0));
        match ols_fit(&vec![1.0; 20], &x, false) {
            Err(FarmError::RankDeficient { column }) => assert_eq!(column, "2"),
            other => panic!("unexpected {other:?}"),
        }
        let ones = DMatrix::from_element(20, 1, 3.0);
        assert!(matches!(
            ols_fit(&vec![1.0; 20], &ones, true),
            Err(FarmError::RankDeficient { .. })
        ));
    }

    #[test]
    fn orthogonality_and_idempotence() {
        let x = normal_matrix(40, 4, 5);
        let y: Vec<f64> = normal_matrix(40, 1, 6).iter().map(|v| v * 3.0 + 1.0).collect();
        let f = ols_fit(&y, &x, true).unwrap();
        let e = DVector::from_column_slice(&f.residuals);
        let scale = max_abs(&x) * y.iter().fold(0.0_f64, |a, v| a.max(v.abs())) * 40.0;
        assert!((x.transpose() * &e).amax() <= 1e-8 * scale);
        assert!(e.sum().abs() <= 1e-8 * scale);
        let again = ols_fit(&f.residuals, &x, true).unwrap();
        for (a, b) in again.residuals.iter().zip(&f.residuals) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn filter_demeans_and_identity() {
        let m = normal_matrix(3, 30, 7).map(|v| v + 4.0);
        let panel = PanelData::from_matrix(m.clone()).unwrap();
        let (r, fits) = first_stage_filter(&panel, &Covariates::None, true).unwrap();
        for i in 0..3 {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            let mu = mean(&row);
            for t in 0..30 {
                assert!((r[(i, t)] - (m[(i, t)] - mu)).abs() < 1e-12);
            }
            assert!((fits[i].coefficients[0] - mu).abs() < 1e-12);
        }
        let (r0, _) = first_stage_filter(&panel, &Covariates::None, false).unwrap();
        assert_eq!(r0, m);
    }

    #[test]
    fn filter_on_true_factor_is_perfect() {
        let f = normal_matrix(25, 1, 8);
        let loads = [1.0, -2.0, 0.5];
        let m = DMatrix::from_fn(3, 25, |i, t| loads[i] * f[(t, 0)]);
        let panel = PanelData::from_matrix(m).unwrap();
        let (r, _) = first_stage_filter(&panel, &Covariates::Shared(f), true).unwrap();
        assert!(max_abs(&r) < 1e-12);
    }

    #[test]
    fn filter_errors_tag_series() {
        let panel = PanelData::from_matrix(normal_matrix(2, 5, 9)).unwrap();
        let designs = vec![normal_matrix(5, 1, 10), DMatrix::from_element(5, 1, 1.0)];
        let err = first_stage_filter(&panel, &Covariates::PerSeries(designs), true).unwrap_err();
        assert!(matches!(err, FarmError::Series { ref series, .. } if series == "s2"));
    }

    #[test]
    fn ar_white_noise() {
        let mut rng = stream_rng(11, 0);
        let y: Vec<f64> = (0..2000).map(|_| 2.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = ar_fit(&y, 2).unwrap();
        let se = 1.0 / (2000f64).sqrt();
        for phi in &fit.phi {
            assert!(phi.abs() < 3.0 * se, "phi {phi}");
        }
        // intercept - mean is driven by (sum phi) * mean, whose sd is about 2 * sqrt(2) * se.
        let ybar = mean(&y);
        assert!((fit.intercept - ybar).abs() < 3.0 * (ybar * 2f64.sqrt() * se + se));
    }

    #[test]
    fn ar_recovers_persistence() {
        let mut rng = stream_rng(12, 0);
        let mut y = vec![0.0; 5000];
        for t in 1..5000 {
            y[t] = 0.8 * y[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let fit = ar_fit(&y, 1).unwrap();
        assert!((0.75..=0.85).contains(&fit.phi[0]));
    }

    #[test]
    fn ar_degenerate_inputs() {
        assert!(matches!(ar_fit(&[3.0; 50], 1), Err(FarmError::RankDeficient { .. })));
        assert!(matches!(
            ar_fit(&[1.0, 2.0, 3.0, 4.0], 1),
            Err(FarmError::InsufficientData { .. })
        ));
    }

    #[test]
    fn ar_forecast_cases() {
        let fit = ArFit {
            order: 1,
            intercept: 2.0,
            phi: vec![0.0],
            residual_variance: 1.0,
            fitted: vec![],
        };
        assert_eq!(ar_forecast(&fit, &[9.0]).unwrap(), 2.0);
        let rw = ArFit {
            order: 1,
            intercept: 0.0,
            phi: vec![1.0],
            residual_variance: 1.0,
            fitted: vec![],
        };
        assert_eq!(ar_forecast(&rw, &[7.0]).unwrap(), 7.0);
        assert!(ar_forecast(&rw, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ar_forecast_reproduces_in_sample_fit() {
        let mut rng = stream_rng(13, 0);
        let y: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let fit = ar_fit(&y, 3).unwrap();
        let last = y.len() - 1;
        let recent = [y[last - 1], y[last - 2], y[last - 3]];
        let f = ar_forecast(&fit, &recent).unwrap();
        assert!((f - fit.fitted[fit.fitted.len() - 1]).abs() < 1e-12);
    }
}
