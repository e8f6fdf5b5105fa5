//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FarmError, Result};

/// Symmetric eigen-decomposition with eigenvalues sorted descending.
///
/// Ties keep the solver's original order (stable sort). Columns of the returned
/// matrix are the matching unit eigenvectors.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(FarmError::Dimension(format!(
            "eigen: {}x{} is not square",
            n,
            m.ncols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1000 + 100 * n)
        .ok_or_else(|| FarmError::Eigen(format!("no convergence on a {n}x{n} matrix")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Largest absolute entry; zero for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Symmetric square root `V diag(sqrt(max(l, 0))) V'` from a descending spectrum.
pub fn psd_sqrt(values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    let mut out = &scaled * vectors.transpose();
    symmetrize(&mut out);
    debug_assert_eq!(out.nrows(), n);
    out
}

/// Replace `m` by `(m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population variance (divisor `len`).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }
}

pub fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Serde adapter storing a matrix as `{rows, cols, data}` with `data` nested row-major.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows || r.data.iter().any(|row| row.len() != r.cols) {
            return Err(D::Error::custom("matrix shape does not match its data"));
        }
        Ok(DMatrix::from_fn(r.rows, r.cols, |i, j| r.data[i][j]))
    }
}
