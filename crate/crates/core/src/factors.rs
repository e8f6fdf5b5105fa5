//! Principal-component factor estimation and factor-count selection.
//!
//! For a residual panel `R` (`n x T`) the estimated factors are `sqrt(T)` times
//! the leading eigenvectors of `R'R`, normalised so that `F'F / T = I`, and the
//! loadings are `R F / T`. The decomposition runs on whichever Gram matrix
//! (`R'R` or `RR'`) is smaller.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::linalg::sym_eigen_desc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEstimate {
    /// `T x r`, columns satisfy `F'F / T = I`.
    #[serde(with = "crate::linalg::matrix_serde")]
    pub factors: DMatrix<f64>,
    /// `n x r`.
    #[serde(with = "crate::linalg::matrix_serde")]
    pub loadings: DMatrix<f64>,
    /// Leading eigenvalues of `R'R / T`, descending.
    pub eigenvalues: Vec<f64>,
    /// `n x T` idiosyncratic residuals `R - loadings * factors'`.
    #[serde(with = "crate::linalg::matrix_serde")]
    pub residuals: DMatrix<f64>,
    pub r: usize,
}

impl FactorEstimate {
    /// The zero-factor estimate: residuals equal the input panel.
    pub fn none(residual_panel: &DMatrix<f64>) -> Self {
        let (n, t) = residual_panel.shape();
        FactorEstimate {
            factors: DMatrix::zeros(t, 0),
            loadings: DMatrix::zeros(n, 0),
            eigenvalues: Vec::new(),
            residuals: residual_panel.clone(),
            r: 0,
        }
    }

    /// Common component `loadings * factors'` (`n x T`).
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.loadings * self.factors.transpose()
    }
}

/// All eigenvalues of `R'R / T` (equivalently `RR' / T`), descending, length `min(n, T)`.
pub fn panel_eigenvalues(residual_panel: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, t) = residual_panel.shape();
    let gram = if t <= n {
        residual_panel.transpose() * residual_panel
    } else {
        residual_panel * residual_panel.transpose()
    };
    let (vals, _) = sym_eigen_desc(gram / t as f64)?;
    Ok(vals)
}

pub fn pca_factors(residual_panel: &DMatrix<f64>, r: usize) -> Result<FactorEstimate> {
    let (n, t) = residual_panel.shape();
    if r == 0 || r > n.min(t) {
        return Err(FarmError::InvalidInput(format!(
            "factor count {r} outside 1..={}",
            n.min(t)
        )));
    }
    if residual_panel.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::InvalidInput("residual panel has non-finite entries".into()));
    }
    let tf = t as f64;
    let mut factors = None;
    if n < t {
        // Eigenvectors u of RR' map to unit eigenvectors R'u / sqrt(mu) of R'R.
        let (mu, u) = sym_eigen_desc(residual_panel * residual_panel.transpose())?;
        if mu[r - 1] > 1e-12 * mu[0].max(f64::MIN_POSITIVE) {
            let mut f = residual_panel.transpose() * u.columns(0, r);
            for j in 0..r {
                f.column_mut(j).scale_mut(tf.sqrt() / mu[j].sqrt());
            }
            factors = Some((f, mu[..r].iter().map(|m| m / tf).collect::<Vec<_>>()));
        }
    }
    let (mut f, eigenvalues) = match factors {
        Some(x) => x,
        None => {
            let (mu, v) = sym_eigen_desc(residual_panel.transpose() * residual_panel)?;
            let f = v.columns(0, r) * tf.sqrt();
            (f, mu[..r].iter().map(|m| m.max(0.0) / tf).collect())
        }
    };
    let mut loadings = residual_panel * &f / tf;
    for j in 0..r {
        let col = loadings.column(j);
        let pivot = if col.amax() > 0.0 {
            col.iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0)
        } else {
            f.column(j)
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0)
        };
        if pivot < 0.0 {
            loadings.column_mut(j).neg_mut();
            f.column_mut(j).neg_mut();
        }
    }
    let residuals = residual_panel - &loadings * f.transpose();
    Ok(FactorEstimate {
        factors: f,
        loadings,
        eigenvalues,
        residuals,
        r,
    })
}

/// Ratio of consecutive eigenvalues, maximised over `k = 1..=kmax`; ties go to the smaller `k`.
pub fn eigenvalue_ratio_select(eigenvalues: &[f64], kmax: usize) -> Result<usize> {
    Ok(eigenvalue_ratios(eigenvalues, kmax)?.1)
}

fn eigenvalue_ratios(eigenvalues: &[f64], kmax: usize) -> Result<(Vec<f64>, usize)> {
    if eigenvalues.is_empty() {
        return Err(FarmError::InvalidInput("no eigenvalues".into()));
    }
    if kmax == 0 || kmax + 1 > eigenvalues.len() {
        return Err(FarmError::InvalidInput(format!(
            "kmax = {kmax} needs 1 <= kmax < {} eigenvalues",
            eigenvalues.len()
        )));
    }
    if let Some(v) = eigenvalues[..=kmax].iter().find(|v| !(**v > 0.0)) {
        return Err(FarmError::InvalidInput(format!("nonpositive eigenvalue {v}")));
    }
    let ratios: Vec<f64> = (0..kmax).map(|k| eigenvalues[k] / eigenvalues[k + 1]).collect();
    let best = argbest(&ratios, |a, b| a > b);
    Ok((ratios, best + 1))
}

fn argbest(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfoCriterion {
    Ic1,
    Ic2,
    Ic3,
    Ic4,
}

impl InfoCriterion {
    /// Penalty for `r` factors on an `n x T` panel.
    pub fn penalty(self, r: usize, n: usize, t: usize) -> f64 {
        let (rf, nf, tf) = (r as f64, n as f64, t as f64);
        let nt = nf * tf;
        let c2 = nf.min(tf);
        match self {
            InfoCriterion::Ic1 => rf * (nf + tf) / nt * (nt / (nf + tf)).ln(),
            InfoCriterion::Ic2 => rf * (nf + tf) / nt * c2.ln(),
            InfoCriterion::Ic3 => rf * c2.ln() / c2,
            InfoCriterion::Ic4 => rf * (nf + tf - rf) * nt.ln() / nt,
        }
    }
}

/// How the number of factors is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FactorRule {
    Er,
    Ic(InfoCriterion),
    Fixed(usize),
}

impl std::str::FromStr for FactorRule {
    type Err = FarmError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "er" => FactorRule::Er,
            "ic1" => FactorRule::Ic(InfoCriterion::Ic1),
            "ic2" => FactorRule::Ic(InfoCriterion::Ic2),
            "ic3" => FactorRule::Ic(InfoCriterion::Ic3),
            "ic4" => FactorRule::Ic(InfoCriterion::Ic4),
            other => match other.strip_prefix("fixed:").map(str::parse::<usize>) {
                Some(Ok(r)) => FactorRule::Fixed(r),
                _ => return Err(FarmError::InvalidInput(format!("unknown factor rule {s:?}"))),
            },
        })
    }
}

impl From<FactorRule> for String {
    fn from(rule: FactorRule) -> String {
        rule.to_string()
    }
}

impl TryFrom<String> for FactorRule {
    type Error = FarmError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::fmt::Display for FactorRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorRule::Er => write!(f, "er"),
            FactorRule::Ic(c) => write!(f, "ic{}", *c as usize + 1),
            FactorRule::Fixed(r) => write!(f, "fixed:{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSelection {
    pub method: FactorRule,
    pub kmax: usize,
    /// Within `1..=kmax` for data-driven rules; a fixed rule may request 0.
    pub chosen_r: usize,
    /// IC values at `r = 1..=kmax`, eigenvalue ratios for ER, empty for fixed.
    pub criterion_values: Vec<f64>,
}

pub fn default_kmax(n: usize, t: usize) -> usize {
    20.min(n.min(t) / 2).max(1)
}

/// S(r) below this fraction of S(0) is treated as an exact zero, so that
/// rounding noise in a noiseless low-rank panel cannot outweigh the penalty.
const S_FLOOR: f64 = 1e-12;

pub fn ic_select(residual_panel: &DMatrix<f64>, kmax: usize, criterion: InfoCriterion) -> Result<FactorSelection> {
    let eig = panel_eigenvalues(residual_panel)?;
    ic_from_eigenvalues(residual_panel, &eig, kmax, criterion)
}

fn ic_from_eigenvalues(
    residual_panel: &DMatrix<f64>,
    eig: &[f64],
    kmax: usize,
    criterion: InfoCriterion,
) -> Result<FactorSelection> {
    let (n, t) = residual_panel.shape();
    if kmax == 0 || kmax > n.min(t) {
        return Err(FarmError::InvalidInput(format!(
            "kmax = {kmax} outside 1..={}",
            n.min(t)
        )));
    }
    let values = ic_values(residual_panel, eig, kmax, criterion);
    let best = argbest(&values, |a, b| a < b);
    Ok(FactorSelection {
        method: FactorRule::Ic(criterion),
        kmax,
        chosen_r: best + 1,
        criterion_values: values,
    })
}

/// `S(r) = ||R - L_r F_r'||_F^2 / (nT)` for `r = 0..=kmax`, from the spectrum.
pub fn reconstruction_errors(residual_panel: &DMatrix<f64>, eig: &[f64], kmax: usize) -> Vec<f64> {
    let (n, t) = residual_panel.shape();
    let nt = (n * t) as f64;
    let total = residual_panel.norm_squared();
    let floor = S_FLOOR * total / nt;
    let mut explained = 0.0;
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(total / nt);
    for &l in eig.iter().take(kmax) {
        explained += l * t as f64;
        out.push(((total - explained) / nt).max(floor));
    }
    out
}

fn ic_values(residual_panel: &DMatrix<f64>, eig: &[f64], kmax: usize, criterion: InfoCriterion) -> Vec<f64> {
    let (n, t) = residual_panel.shape();
    let s = reconstruction_errors(residual_panel, eig, kmax);
    (1..=kmax)
        .map(|r| {
            let sr = if s[r] > 0.0 { s[r] } else { f64::MIN_POSITIVE };
            sr.ln() + criterion.penalty(r, n, t)
        })
        .collect()
}

/// Apply `rule` to a residual panel. `kmax = None` uses [`default_kmax`].
pub fn select_factors(residual_panel: &DMatrix<f64>, rule: FactorRule, kmax: Option<usize>) -> Result<FactorSelection> {
    let (n, t) = residual_panel.shape();
    let kmax = kmax.unwrap_or_else(|| default_kmax(n, t));
    match rule {
        FactorRule::Fixed(r) => {
            if r > n.min(t) {
                return Err(FarmError::InvalidInput(format!(
                    "fixed factor count {r} exceeds min(n, T)"
                )));
            }
            Ok(FactorSelection {
                method: rule,
                kmax: kmax.max(r),
                chosen_r: r,
                criterion_values: Vec::new(),
            })
        }
        FactorRule::Er => {
            let eig = panel_eigenvalues(residual_panel)?;
            let (ratios, chosen) = eigenvalue_ratios(&eig, kmax)?;
            Ok(FactorSelection {
                method: rule,
                kmax,
                chosen_r: chosen,
                criterion_values: ratios,
            })
        }
        FactorRule::Ic(c) => ic_select(residual_panel, kmax, c),
    }
}

/// Rotation `H = T^-1 V^-1 F_hat' F L'L` relating estimated and true factors.
pub fn rotation_matrix(
    est_factors: &DMatrix<f64>,
    true_factors: &DMatrix<f64>,
    true_loadings: &DMatrix<f64>,
    eigenvalues: &[f64],
) -> Result<DMatrix<f64>> {
    let t = est_factors.nrows();
    let r = eigenvalues.len();
    if true_factors.nrows() != t || est_factors.ncols() != r || true_loadings.ncols() != true_factors.ncols() {
        return Err(FarmError::Dimension("rotation inputs have inconsistent shapes".into()));
    }
    if eigenvalues.iter().any(|v| !(v.abs() > 0.0)) {
        return Err(FarmError::InvalidInput("singular eigenvalue matrix".into()));
    }
    let mut h = est_factors.transpose() * true_factors * (true_loadings.transpose() * true_loadings);
    for i in 0..r {
        h.row_mut(i).scale_mut(1.0 / (t as f64 * eigenvalues[i]));
    }
    Ok(h)
}
