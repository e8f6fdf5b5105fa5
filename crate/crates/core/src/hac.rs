//! Kernel (Newey-West type) long-run covariance of a vector moment series.
//!
//! For moment rows `D` (d x T) the estimate is
//! `sum_{|l| < T} K(l / h) M_l` with `M_l = (1/T) sum_t D_t D_{t-l}'` and
//! `M_{-l} = M_l'`. Two evaluation routes give the same sum: a per-lag loop
//! over the kernel's support, and `D W D' / T` with `W` the Toeplitz matrix of
//! kernel weights. The cheaper one is picked from the shape.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::linalg::{psd_sqrt, sym_eigen_desc, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Bartlett,
    Parzen,
    QuadraticSpectral,
}

impl FromStr for KernelKind {
    type Err = FarmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bartlett" => Ok(KernelKind::Bartlett),
            "parzen" => Ok(KernelKind::Parzen),
            "qs" | "quadratic-spectral" | "quadraticspectral" => Ok(KernelKind::QuadraticSpectral),
            other => Err(FarmError::InvalidInput(format!(
                "unknown kernel {other:?} (bartlett, parzen, qs)"
            ))),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Bartlett => "bartlett",
            KernelKind::Parzen => "parzen",
            KernelKind::QuadraticSpectral => "quadratic-spectral",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(FarmError::InvalidInput(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec { kind, bandwidth })
    }

    /// Bartlett kernel with the default bandwidth for `t` observations.
    pub fn bartlett_default(t: usize) -> Result<Self> {
        Self::new(KernelKind::Bartlett, default_bandwidth(t)? as f64)
    }

    /// Weight applied to lag `l`.
    pub fn weight(&self, lag: usize) -> f64 {
        kernel_weight(self.kind, lag as f64 / self.bandwidth)
    }

    /// Largest lag with a nonzero weight among `0..t`.
    fn max_lag(&self, t: usize) -> usize {
        let last = t.saturating_sub(1);
        match self.kind {
            KernelKind::Bartlett | KernelKind::Parzen => {
                // weights vanish once l / h >= 1
                let l = self.bandwidth.ceil() as usize;
                l.saturating_sub(1).min(last)
            }
            KernelKind::QuadraticSpectral => last,
        }
    }
}

/// Kernel value at `u`. `K(0) = 1`, `K(-u) = K(u)`, `|K| <= 1`.
pub fn kernel_weight(kind: KernelKind, u: f64) -> f64 {
    let a = u.abs();
    match kind {
        KernelKind::Bartlett => (1.0 - a).max(0.0),
        KernelKind::Parzen => {
            if a <= 0.5 {
                1.0 - 6.0 * a * a + 6.0 * a * a * a
            } else if a <= 1.0 {
                2.0 * (1.0 - a).powi(3)
            } else {
                0.0
            }
        }
        KernelKind::QuadraticSpectral => {
            if a < 1e-8 {
                return 1.0;
            }
            let z = 6.0 * std::f64::consts::PI * a / 5.0;
            25.0 / (12.0 * std::f64::consts::PI.powi(2) * a * a) * (z.sin() / z - z.cos())
        }
    }
}

/// `floor(T / 3)`.
pub fn default_bandwidth(t: usize) -> Result<usize> {
    if t < 3 {
        return Err(FarmError::InsufficientData { needed: 3, got: t });
    }
    Ok(t / 3)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HacEstimate {
    #[serde(with = "crate::linalg::matrix_serde")]
    pub upsilon: DMatrix<f64>,
    pub psd_adjusted: bool,
    pub min_eigenvalue_before: f64,
    pub kernel: KernelSpec,
    /// Clipped descending spectrum and eigenvectors of `upsilon`.
    #[serde(skip)]
    spectrum: Option<(Vec<f64>, DMatrix<f64>)>,
}

impl PartialEq for HacEstimate {
    fn eq(&self, other: &Self) -> bool {
        self.upsilon == other.upsilon
            && self.psd_adjusted == other.psd_adjusted
            && self.min_eigenvalue_before.to_bits() == other.min_eigenvalue_before.to_bits()
            && self.kernel == other.kernel
    }
}

impl HacEstimate {
    /// Wrap a known covariance matrix, clipping it to PSD if needed.
    pub fn from_covariance(mut upsilon: DMatrix<f64>, kernel: KernelSpec) -> Result<Self> {
        if upsilon.nrows() != upsilon.ncols() || upsilon.nrows() == 0 {
            return Err(FarmError::Dimension(format!(
                "covariance is {}x{}",
                upsilon.nrows(),
                upsilon.ncols()
            )));
        }
        if upsilon.iter().any(|v| !v.is_finite()) {
            return Err(FarmError::InvalidInput("covariance has non-finite entries".into()));
        }
        symmetrize(&mut upsilon);
        let (mut values, vectors) = sym_eigen_desc(upsilon.clone())?;
        let min_before = *values.last().unwrap();
        let scale = values[0].abs().max(f64::MIN_POSITIVE);
        let psd_adjusted = min_before < -1e-12 * scale;
        values.iter_mut().for_each(|l| *l = l.max(0.0));
        if psd_adjusted {
            let mut scaled = vectors.clone();
            for (j, &l) in values.iter().enumerate() {
                scaled.column_mut(j).scale_mut(l);
            }
            upsilon = &scaled * vectors.transpose();
            symmetrize(&mut upsilon);
        }
        Ok(HacEstimate {
            upsilon,
            psd_adjusted,
            min_eigenvalue_before: min_before,
            kernel,
            spectrum: Some((values, vectors)),
        })
    }

    pub fn dim(&self) -> usize {
        self.upsilon.nrows()
    }

    /// Symmetric PSD square root `A` with `A A = upsilon`.
    pub fn sqrt_factor(&self) -> Result<DMatrix<f64>> {
        match &self.spectrum {
            Some((values, vectors)) => Ok(psd_sqrt(values, vectors)),
            None => {
                let (values, vectors) = sym_eigen_desc(self.upsilon.clone())?;
                let clipped: Vec<f64> = values.iter().map(|l| l.max(0.0)).collect();
                Ok(psd_sqrt(&clipped, &vectors))
            }
        }
    }
}

/// Entries above this many never take the dense Toeplitz route.
const TOEPLITZ_MAX_T: usize = 4000;

/// Long-run covariance of the rows of `moments` (d x T).
///
/// Rows are recentred before the lag sums; with centred input this changes
/// nothing beyond rounding.
pub fn hac_long_run_cov(moments: &DMatrix<f64>, spec: &KernelSpec) -> Result<HacEstimate> {
    let (d, t) = moments.shape();
    if d == 0 {
        return Err(FarmError::Dimension("moment series has no rows".into()));
    }
    if t < 2 {
        return Err(FarmError::InsufficientData { needed: 2, got: t });
    }
    if moments.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::InvalidInput("moment series has non-finite entries".into()));
    }
    KernelSpec::new(spec.kind, spec.bandwidth)?;
    let mut centred = moments.clone();
    for k in 0..d {
        let m = centred.row(k).sum() / t as f64;
        centred.row_mut(k).add_scalar_mut(-m);
    }
    let max_lag = spec.max_lag(t);
    let lag_cost = (d * d) as f64 * t as f64 * (max_lag + 1) as f64;
    let toeplitz_cost = (d * t) as f64 * t as f64 + (d * d * t) as f64;
    let upsilon = if t <= TOEPLITZ_MAX_T && toeplitz_cost < lag_cost {
        toeplitz_route(&centred, spec, max_lag)
    } else {
        lag_route(&centred, spec, max_lag)
    };
    HacEstimate::from_covariance(upsilon, *spec)
}

fn lag_route(d_mat: &DMatrix<f64>, spec: &KernelSpec, max_lag: usize) -> DMatrix<f64> {
    let (_, t) = d_mat.shape();
    let tf = t as f64;
    let mut out = d_mat * d_mat.transpose() / tf;
    for l in 1..=max_lag {
        let w = spec.weight(l);
        if w.abs() < 1e-12 {
            continue;
        }
        let lead = d_mat.columns(l, t - l);
        let lagged = d_mat.columns(0, t - l);
        let m_l = lead * lagged.transpose();
        out += (&m_l + m_l.transpose()) * (w / tf);
    }
    out
}

fn toeplitz_route(d_mat: &DMatrix<f64>, spec: &KernelSpec, max_lag: usize) -> DMatrix<f64> {
    let (_, t) = d_mat.shape();
    let weights: Vec<f64> = (0..t)
        .map(|l| if l <= max_lag { spec.weight(l) } else { 0.0 })
        .collect();
    let w = DMatrix::from_fn(t, t, |s, u| {
        let w = weights[s.abs_diff(u)];
        if w.abs() < 1e-12 {
            0.0
        } else {
            w
        }
    });
    let dw = d_mat * w;
    dw * d_mat.transpose() / t as f64
}
