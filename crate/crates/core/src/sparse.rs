//! LASSO by cyclic coordinate descent, with BIC-selected penalty paths.
//!
//! The objective is `(1/T) ||y - b - X theta||^2 + xi ||theta||_1`, with the
//! intercept `b` optional and unpenalised. Columns are used as given unless
//! standardisation is requested, in which case the penalty applies to the
//! coefficients of unit-variance columns.
//!
//! The solver works on the Gram matrix `X'X`, keeping the gradient
//! `X'(y - X theta)` up to date after every coordinate move, so a sweep costs
//! `O(m)` plus `O(m)` per coefficient that actually changes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Stop when no coefficient moves by more than this in a full sweep.
    pub conv_tol: f64,
    /// Cap on coordinate sweeps.
    pub max_iter: usize,
    pub fit_intercept: bool,
    pub standardize: bool,
    /// Record the objective after every sweep.
    pub record_objective: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            conv_tol: 1e-8,
            max_iter: 10_000,
            fit_intercept: false,
            standardize: false,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub theta: Vec<f64>,
    /// Stored as `null` in JSON when infinite.
    #[serde(with = "penalty_serde")]
    pub xi: f64,
    pub intercept: Option<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Columns without variation; their coefficients are pinned at zero.
    pub zero_variance: Vec<usize>,
    /// Per-column penalty scale (column standard deviations) when standardised.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub penalty_scale: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_objectives: Vec<f64>,
}

impl LassoFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept.unwrap_or(0.0) + self.theta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Residuals `y - b - X theta`.
    pub fn residuals(&self, y: &[f64], x: &DMatrix<f64>) -> Vec<f64> {
        let b = self.intercept.unwrap_or(0.0);
        let mut r: Vec<f64> = y.iter().map(|v| v - b).collect();
        for &j in &self.active_set {
            let c = self.theta[j];
            for (t, rt) in r.iter_mut().enumerate() {
                *rt -= c * x[(t, j)];
            }
        }
        r
    }
}

mod penalty_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xi: &f64, s: S) -> Result<S::Ok, S::Error> {
        if xi.is_finite() {
            s.serialize_f64(*xi)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Soft-thresholding operator `sign(z) max(|z| - g, 0)`.
pub fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// A least-squares problem reduced to its Gram form.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    t: usize,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    /// Column scale applied before solving (1 when not standardising).
    scale: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
    intercept: bool,
    zero_var: Vec<bool>,
}

/// A centred (and optionally standardised) design with its Gram matrix,
/// reusable across many response vectors.
#[derive(Debug, Clone)]
pub(crate) struct SharedDesign {
    xc: DMatrix<f64>,
    gram: DMatrix<f64>,
    scale: Vec<f64>,
    x_mean: Vec<f64>,
    intercept: bool,
}

impl SharedDesign {
    pub(crate) fn new(x: &DMatrix<f64>, cfg: &LassoConfig) -> Result<Self> {
        let (t, m) = x.shape();
        if t == 0 {
            return Err(FarmError::InsufficientData { needed: 0, got: 0 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FarmError::InvalidInput("LASSO inputs must be finite".into()));
        }
        let tf = t as f64;
        let x_mean = if cfg.fit_intercept {
            (0..m).map(|j| x.column(j).sum() / tf).collect::<Vec<_>>()
        } else {
            vec![0.0; m]
        };
        let mut xc = x.clone();
        for j in 0..m {
            if x_mean[j] != 0.0 {
                xc.column_mut(j).add_scalar_mut(-x_mean[j]);
            }
        }
        let mut scale = vec![1.0; m];
        if cfg.standardize {
            for j in 0..m {
                let sd = (xc.column(j).norm_squared() / tf).sqrt();
                if sd > 0.0 {
                    scale[j] = sd;
                    xc.column_mut(j).scale_mut(1.0 / sd);
                }
            }
        }
        let gram = xc.transpose() * &xc;
        Ok(SharedDesign {
            xc,
            gram,
            scale,
            x_mean,
            intercept: cfg.fit_intercept,
        })
    }

    pub(crate) fn problem(&self, y: &[f64]) -> Result<Problem> {
        let t = self.xc.nrows();
        if y.len() != t {
            return Err(FarmError::Dimension(format!("{} targets for {t} design rows", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(FarmError::InvalidInput("LASSO inputs must be finite".into()));
        }
        let y_mean = if self.intercept {
            y.iter().sum::<f64>() / t as f64
        } else {
            0.0
        };
        let yc = DVector::from_iterator(t, y.iter().map(|v| v - y_mean));
        let xty = self.xc.transpose() * &yc;
        let yty = yc.norm_squared();
        Ok(Problem::assemble(
            t,
            self.gram.clone(),
            xty,
            yty,
            self.scale.clone(),
            self.x_mean.clone(),
            y_mean,
            self.intercept,
        ))
    }
}

struct Solved {
    theta: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

impl Problem {
    pub(crate) fn from_data(y: &[f64], x: &DMatrix<f64>, cfg: &LassoConfig) -> Result<Self> {
        SharedDesign::new(x, cfg)?.problem(y)
    }

    /// A no-intercept, unstandardised problem from precomputed cross products.
    pub(crate) fn from_gram(t: usize, gram: DMatrix<f64>, xty: DVector<f64>, yty: f64) -> Self {
        let m = gram.nrows();
        Self::assemble(t, gram, xty, yty, vec![1.0; m], vec![0.0; m], 0.0, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        t: usize,
        gram: DMatrix<f64>,
        xty: DVector<f64>,
        yty: f64,
        scale: Vec<f64>,
        x_mean: Vec<f64>,
        y_mean: f64,
        intercept: bool,
    ) -> Self {
        let m = gram.nrows();
        let gmax = (0..m).map(|j| gram[(j, j)]).fold(0.0, f64::max);
        let zero_var = (0..m)
            .map(|j| gram[(j, j)] <= 1e-12 * gmax || gram[(j, j)] <= 0.0)
            .collect();
        Problem {
            t,
            gram,
            xty,
            yty,
            scale,
            x_mean,
            y_mean,
            intercept,
            zero_var,
        }
    }

    pub(crate) fn m(&self) -> usize {
        self.gram.nrows()
    }

    /// Smallest penalty at which the zero vector is optimal.
    pub(crate) fn xi_max(&self) -> f64 {
        let tf = self.t as f64;
        let top = (0..self.m())
            .filter(|&j| !self.zero_var[j])
            .map(|j| self.xty[j].abs())
            .fold(0.0, f64::max);
        let mut xi = 2.0 / tf * top;
        // make sure the solver's threshold xi T / 2 really covers every |x_j'y|
        while xi * tf / 2.0 < top {
            xi = xi.next_up();
        }
        xi
    }

    /// `||y - X theta||^2` in solver coordinates, from the cross products.
    fn rss_gram(&self, theta: &[f64]) -> f64 {
        let th = DVector::from_column_slice(theta);
        let gth = &self.gram * &th;
        (self.yty - 2.0 * th.dot(&self.xty) + th.dot(&gth)).max(0.0)
    }

    fn objective_gram(&self, theta: &[f64], xi: f64) -> f64 {
        self.rss_gram(theta) / self.t as f64 + xi * theta.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn solve(&self, xi: f64, warm: Option<&[f64]>, cfg: &LassoConfig) -> Solved {
        let m = self.m();
        let tf = self.t as f64;
        let mut theta = match warm {
            Some(w) => w.to_vec(),
            None => vec![0.0; m],
        };
        for j in 0..m {
            if self.zero_var[j] {
                theta[j] = 0.0;
            }
        }
        if xi.is_infinite() {
            theta.iter_mut().for_each(|v| *v = 0.0);
        }
        let thresh = xi * tf / 2.0;
        let mut grad = self.xty.clone();
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let all: Vec<usize> = (0..m).filter(|&j| !self.zero_var[j]).collect();

        let refresh = |theta: &[f64], grad: &mut DVector<f64>| {
            grad.copy_from(&self.xty);
            for (k, &v) in theta.iter().enumerate() {
                if v != 0.0 {
                    grad.axpy(-v, &self.gram.column(k), 1.0);
                }
            }
        };
        let sweep = |coords: &[usize], theta: &mut [f64], grad: &mut DVector<f64>| -> f64 {
            let mut max_delta = 0.0_f64;
            for &j in coords {
                let gjj = self.gram[(j, j)];
                let z = grad[j] + gjj * theta[j];
                let new = soft_threshold(z, thresh) / gjj;
                let delta = new - theta[j];
                if delta != 0.0 {
                    theta[j] = new;
                    grad.axpy(-delta, &self.gram.column(j), 1.0);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            max_delta
        };

        if m == 0 || xi.is_infinite() {
            return Solved {
                theta,
                iterations: 0,
                converged: true,
                trace,
            };
        }
        refresh(&theta, &mut grad);
        'outer: while iterations < cfg.max_iter {
            let delta = sweep(&all, &mut theta, &mut grad);
            iterations += 1;
            if cfg.record_objective {
                trace.push(self.objective_gram(&theta, xi));
            }
            if delta < cfg.conv_tol {
                converged = true;
                break;
            }
            // Iterate on the active set until it settles, then re-check everything.
            loop {
                if iterations >= cfg.max_iter {
                    break 'outer;
                }
                let active: Vec<usize> = all.iter().copied().filter(|&j| theta[j] != 0.0).collect();
                let delta = sweep(&active, &mut theta, &mut grad);
                iterations += 1;
                if cfg.record_objective {
                    trace.push(self.objective_gram(&theta, xi));
                }
                if delta < cfg.conv_tol {
                    break;
                }
            }
            refresh(&theta, &mut grad);
        }
        Solved {
            theta,
            iterations,
            converged,
            trace,
        }
    }

    /// Map a solver-space solution back to a fit, computing the objective from
    /// the data when it is available.
    fn finish(&self, solved: Solved, xi: f64, data: Option<(&[f64], &DMatrix<f64>)>) -> LassoFit {
        let theta: Vec<f64> = solved.theta.iter().zip(&self.scale).map(|(v, s)| v / s).collect();
        let active_set: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] != 0.0).collect();
        let intercept = self
            .intercept
            .then(|| self.y_mean - self.x_mean.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>());
        let standardized = self.scale.iter().any(|&s| s != 1.0);
        let penalty: f64 = if xi == 0.0 {
            0.0
        } else {
            xi * theta.iter().zip(&self.scale).map(|(v, s)| (v * s).abs()).sum::<f64>()
        };
        let mut fit = LassoFit {
            theta,
            xi,
            intercept,
            active_set,
            objective: 0.0,
            iterations: solved.iterations,
            converged: solved.converged,
            zero_variance: (0..self.m()).filter(|&j| self.zero_var[j]).collect(),
            penalty_scale: if standardized { self.scale.clone() } else { Vec::new() },
            sweep_objectives: solved.trace,
        };
        let rss = match data {
            Some((y, x)) => fit.residuals(y, x).iter().map(|e| e * e).sum(),
            None => self.rss_gram(&solved.theta),
        };
        fit.objective = rss / self.t as f64 + penalty;
        fit
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi.is_nan() || xi < 0.0 {
        return Err(FarmError::InvalidInput(format!(
            "penalty must be nonnegative, got {xi}"
        )));
    }
    Ok(())
}

/// Minimise the LASSO objective at a fixed penalty. A run that hits
/// `max_iter` returns its last iterate with `converged = false`.
pub fn lasso_fit(
    y: &[f64],
    x: &DMatrix<f64>,
    xi: f64,
    warm_start: Option<&[f64]>,
    cfg: &LassoConfig,
) -> Result<LassoFit> {
    check_xi(xi)?;
    let problem = Problem::from_data(y, x, cfg)?;
    if let Some(w) = warm_start {
        if w.len() != problem.m() {
            return Err(FarmError::Dimension(format!(
                "warm start has {} entries for {} columns",
                w.len(),
                problem.m()
            )));
        }
    }
    let warm: Option<Vec<f64>> = warm_start.map(|w| w.iter().zip(&problem.scale).map(|(v, s)| v * s).collect());
    let solved = problem.solve(xi, warm.as_deref(), cfg);
    Ok(problem.finish(solved, xi, Some((y, x))))
}

/// Smallest penalty at which the LASSO solution is identically zero.
pub fn xi_max(y: &[f64], x: &DMatrix<f64>, cfg: &LassoConfig) -> Result<f64> {
    Ok(Problem::from_data(y, x, cfg)?.xi_max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub grid_size: usize,
    /// Smallest grid penalty as a fraction of the largest.
    pub xi_min_ratio: f64,
    pub lasso: LassoConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            grid_size: 100,
            xi_min_ratio: 1e-3,
            lasso: LassoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPath {
    pub grid: Vec<f64>,
    pub fits: Vec<LassoFit>,
    pub bic: Vec<f64>,
    pub chosen: usize,
}

impl PenaltyPath {
    pub fn chosen_fit(&self) -> &LassoFit {
        &self.fits[self.chosen]
    }

    pub fn into_chosen(mut self) -> LassoFit {
        self.fits.swap_remove(self.chosen)
    }
}

/// `T log(RSS / T) + df log T`.
pub fn bic(rss: f64, df: usize, t: usize) -> f64 {
    let tf = t as f64;
    tf * (rss / tf).ln() + df as f64 * tf.ln()
}

fn log_grid(xi_max: f64, size: usize, ratio: f64) -> Vec<f64> {
    (0..size)
        .map(|k| {
            if k == 0 {
                xi_max
            } else {
                xi_max * ratio.powf(k as f64 / (size - 1) as f64)
            }
        })
        .collect()
}

fn run_path(problem: &Problem, cfg: &PathConfig, data: Option<(&[f64], &DMatrix<f64>)>) -> Result<PenaltyPath> {
    if cfg.grid_size < 2 {
        return Err(FarmError::InvalidInput("penalty grid needs at least two points".into()));
    }
    if !(cfg.xi_min_ratio > 0.0 && cfg.xi_min_ratio < 1.0) {
        return Err(FarmError::InvalidInput(format!(
            "xi_min_ratio must lie in (0, 1), got {}",
            cfg.xi_min_ratio
        )));
    }
    let top = problem.xi_max();
    let grid = if top > 0.0 {
        log_grid(top, cfg.grid_size, cfg.xi_min_ratio)
    } else {
        vec![0.0]
    };
    let mut fits = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &xi in &grid {
        let solved = problem.solve(xi, warm.as_deref(), &cfg.lasso);
        warm = Some(solved.theta.clone());
        fits.push(problem.finish(solved, xi, data));
    }
    let t = problem.t;
    let bics: Vec<f64> = fits
        .iter()
        .map(|f| bic((f.objective - penalty_part(f)) * t as f64, f.active_set.len(), t))
        .collect();
    let mut chosen = 0;
    for (k, &b) in bics.iter().enumerate() {
        if b < bics[chosen] {
            chosen = k;
        }
    }
    Ok(PenaltyPath {
        grid,
        fits,
        bic: bics,
        chosen,
    })
}

fn penalty_part(f: &LassoFit) -> f64 {
    if f.xi == 0.0 {
        return 0.0;
    }
    let scale = |j: usize| {
        if f.penalty_scale.is_empty() {
            1.0
        } else {
            f.penalty_scale[j]
        }
    };
    f.xi * f
        .theta
        .iter()
        .enumerate()
        .map(|(j, v)| (v * scale(j)).abs())
        .sum::<f64>()
}

/// Warm-started path on a log grid from `xi_max` down to `xi_max * xi_min_ratio`;
/// the chosen fit minimises BIC, ties going to the larger penalty.
pub fn lasso_path_bic(y: &[f64], x: &DMatrix<f64>, cfg: &PathConfig) -> Result<PenaltyPath> {
    let problem = Problem::from_data(y, x, &cfg.lasso)?;
    run_path(&problem, cfg, Some((y, x)))
}

/// How a LASSO penalty is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PenaltyChoice {
    /// BIC along a penalty path.
    Bic(PathConfig),
    /// A fixed penalty (for instance a theory-driven rate).
    Fixed { xi: f64, lasso: LassoConfig },
    /// Every coefficient, intercept included, shrunk to zero.
    Infinite,
}

impl Default for PenaltyChoice {
    fn default() -> Self {
        PenaltyChoice::Bic(PathConfig::default())
    }
}

impl PenaltyChoice {
    pub fn with_intercept(self, on: bool) -> Self {
        match self {
            PenaltyChoice::Bic(mut p) => {
                p.lasso.fit_intercept = on;
                PenaltyChoice::Bic(p)
            }
            PenaltyChoice::Fixed { xi, mut lasso } => {
                lasso.fit_intercept = on;
                PenaltyChoice::Fixed { xi, lasso }
            }
            PenaltyChoice::Infinite => PenaltyChoice::Infinite,
        }
    }
}

fn zero_fit(m: usize, t: usize, y: &[f64]) -> LassoFit {
    let rss: f64 = y.iter().map(|v| v * v).sum();
    LassoFit {
        theta: vec![0.0; m],
        xi: f64::INFINITY,
        intercept: None,
        active_set: Vec::new(),
        objective: rss / t.max(1) as f64,
        iterations: 0,
        converged: true,
        zero_variance: Vec::new(),
        penalty_scale: Vec::new(),
        sweep_objectives: Vec::new(),
    }
}

/// Fit under a [`PenaltyChoice`].
pub fn fit_with_penalty(y: &[f64], x: &DMatrix<f64>, choice: &PenaltyChoice) -> Result<LassoFit> {
    match choice {
        PenaltyChoice::Bic(cfg) => Ok(lasso_path_bic(y, x, cfg)?.into_chosen()),
        PenaltyChoice::Fixed { xi, lasso } => lasso_fit(y, x, *xi, None, lasso),
        PenaltyChoice::Infinite => Ok(zero_fit(x.ncols(), y.len(), y)),
    }
}

/// [`fit_with_penalty`] for several responses sharing one design; the Gram
/// matrix is formed once.
pub fn fit_many_with_penalty(ys: &[Vec<f64>], x: &DMatrix<f64>, choice: &PenaltyChoice) -> Result<Vec<LassoFit>> {
    let lasso = match choice {
        PenaltyChoice::Infinite => return Ok(ys.iter().map(|y| zero_fit(x.ncols(), y.len(), y)).collect()),
        PenaltyChoice::Bic(cfg) => &cfg.lasso,
        PenaltyChoice::Fixed { lasso, .. } => lasso,
    };
    let design = SharedDesign::new(x, lasso)?;
    ys.iter()
        .map(|y| {
            let problem = design.problem(y)?;
            match choice {
                PenaltyChoice::Bic(cfg) => Ok(run_path(&problem, cfg, Some((y, x)))?.into_chosen()),
                PenaltyChoice::Fixed { xi, lasso } => {
                    check_xi(*xi)?;
                    let solved = problem.solve(*xi, None, lasso);
                    Ok(problem.finish(solved, *xi, Some((y, x))))
                }
                PenaltyChoice::Infinite => unreachable!(),
            }
        })
        .collect()
}

/// [`fit_with_penalty`] for a no-intercept problem given by its cross products.
/// `y` and `x` are used only to evaluate the final objective when supplied.
pub(crate) fn fit_gram_with_penalty(problem: &Problem, choice: &PenaltyChoice) -> Result<LassoFit> {
    match choice {
        PenaltyChoice::Bic(cfg) => Ok(run_path(problem, cfg, None)?.into_chosen()),
        PenaltyChoice::Fixed { xi, lasso } => {
            check_xi(*xi)?;
            let solved = problem.solve(*xi, None, lasso);
            Ok(problem.finish(solved, *xi, None))
        }
        PenaltyChoice::Infinite => {
            let mut f = zero_fit(problem.m(), problem.t, &[]);
            f.objective = problem.yty / problem.t as f64;
            Ok(f)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub pass: bool,
    pub worst_violation: f64,
}

/// Check the LASSO optimality conditions of `fit` on `(y, x)`.
///
/// With `g_j = (2/T) x_j'(y - b - X theta)`: active coordinates need
/// `|g_j - xi sign(theta_j)| <= tol`, inactive ones `|g_j| <= xi + tol`.
pub fn kkt_check(fit: &LassoFit, y: &[f64], x: &DMatrix<f64>, tol: f64) -> KktReport {
    let t = y.len();
    let resid = DVector::from_vec(fit.residuals(y, x));
    let grad = x.transpose() * resid * (2.0 / t as f64);
    let mut worst = 0.0_f64;
    for j in 0..fit.theta.len() {
        let w = if fit.penalty_scale.is_empty() {
            1.0
        } else {
            fit.penalty_scale[j]
        };
        let xi = fit.xi * w;
        let v = if fit.theta[j] != 0.0 {
            (grad[j] - xi * fit.theta[j].signum()).abs()
        } else {
            (grad[j].abs() - xi).max(0.0)
        };
        worst = worst.max(v);
    }
    KktReport {
        pass: worst <= tol,
        worst_violation: worst,
    }
}

/// Compatibility constant `kappa(M, S, zeta)` estimated by seeded random search.
///
/// Uses `kappa^2 = inf |S| x'Mx / ||x_S||_1^2` over the cone
/// `||x_{S^c}||_1 <= zeta ||x_S||_1`. Random search only gives an upper bound,
/// so this is a diagnostic for small problems.
pub fn compatibility_constant(m: &DMatrix<f64>, support: &[usize], zeta: f64, samples: usize, seed: u64) -> f64 {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let n = m.nrows();
    if support.is_empty() {
        return f64::INFINITY;
    }
    let in_s: Vec<bool> = (0..n).map(|j| support.contains(&j)).collect();
    let mut rng = crate::rng::stream_rng(seed, 0);
    let mut best = f64::INFINITY;
    for k in 0..samples {
        let mut x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l1_s: f64 = (0..n).filter(|&j| in_s[j]).map(|j| x[j].abs()).sum();
        let l1_c: f64 = (0..n).filter(|&j| !in_s[j]).map(|j| x[j].abs()).sum();
        // Put the off-support mass on a random point of the cone's radial range.
        let target = zeta * l1_s * if k % 2 == 0 { rng.random::<f64>() } else { 1.0 };
        if l1_c > 0.0 {
            for j in 0..n {
                if !in_s[j] {
                    x[j] *= target / l1_c;
                }
            }
        }
        let quad = x.dot(&(m * &x));
        let val = (support.len() as f64 * quad.max(0.0)).sqrt() / l1_s;
        best = best.min(val);
    }
    best
}
