//! Panel container, CSV ingestion and lag matrices.
//!
//! Values are stored series-major: an `n x T` matrix whose row `i` is series `i`
//! over time. CSV files in the wild are usually time-major, so the orientation
//! of a file is always stated explicitly when reading or writing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Each CSV row is one period; the header lists series labels.
    RowsAreTime,
    /// Each CSV row is one series; the header lists time labels.
    RowsAreSeries,
}

impl std::str::FromStr for Orientation {
    type Err = FarmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows-are-time" | "time" => Ok(Orientation::RowsAreTime),
            "rows-are-series" | "series" => Ok(Orientation::RowsAreSeries),
            other => Err(FarmError::InvalidInput(format!("unknown orientation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    #[serde(with = "crate::linalg::matrix_serde")]
    values: DMatrix<f64>,
    series_ids: Vec<String>,
    time_ids: Vec<String>,
}

impl PanelData {
    /// Validates and wraps an `n x T` matrix.
    ///
    /// Requires `n >= 1`, `T >= 2`, finite values, unique series labels and
    /// strictly ordered time labels. Time labels that all parse as numbers must
    /// increase numerically; other labels only need to be distinct, and their
    /// order is the order given.
    pub fn new(values: DMatrix<f64>, series_ids: Vec<String>, time_ids: Vec<String>) -> Result<Self> {
        let (n, t) = values.shape();
        if n < 1 || t < 2 {
            return Err(FarmError::InvalidInput(format!(
                "panel needs n >= 1 and T >= 2, got {n}x{t}"
            )));
        }
        if series_ids.len() != n || time_ids.len() != t {
            return Err(FarmError::Dimension(format!(
                "{} series labels and {} time labels for a {n}x{t} panel",
                series_ids.len(),
                time_ids.len()
            )));
        }
        if let Some(((i, j), v)) = values
            .iter()
            .enumerate()
            .map(|(k, v)| ((k % n, k / n), v))
            .find(|(_, v)| !v.is_finite())
        {
            return Err(FarmError::BadCell {
                row: i,
                col: j,
                value: v.to_string(),
            });
        }
        check_unique(&series_ids)?;
        check_unique(&time_ids)?;
        let numeric: Option<Vec<f64>> = time_ids.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
        if let Some(ts) = numeric {
            if let Some(w) = ts.windows(2).position(|w| w[0] >= w[1]) {
                return Err(FarmError::InvalidInput(format!(
                    "time labels not increasing at {:?} -> {:?}",
                    time_ids[w],
                    time_ids[w + 1]
                )));
            }
        }
        Ok(PanelData {
            values,
            series_ids,
            time_ids,
        })
    }

    /// Panel with generated labels `s1..sn` and `1..T`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let (n, t) = values.shape();
        let series = (1..=n).map(|i| format!("s{i}")).collect();
        let times = (1..=t).map(|i| i.to_string()).collect();
        Self::new(values, series, times)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn series_ids(&self) -> &[String] {
        &self.series_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn series_index(&self, id: &str) -> Option<usize> {
        self.series_ids.iter().position(|s| s == id)
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(FarmError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

pub fn load_panel_csv(path: impl AsRef<Path>, orientation: Orientation) -> Result<PanelData> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| FarmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_panel_csv(&text, orientation)
}

/// Parses CSV text. Row/column numbers in errors are 1-based positions in the
/// file, counting the header row and index column.
pub fn parse_panel_csv(text: &str, orientation: Orientation) -> Result<PanelData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec.map_err(|e| FarmError::Csv(e.to_string()))?);
    }
    let header = records.first().ok_or_else(|| FarmError::Csv("empty file".into()))?;
    let width = header.len();
    if width < 2 {
        return Err(FarmError::Csv(
            "header needs an index column and at least one data column".into(),
        ));
    }
    let col_labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut row_labels = Vec::with_capacity(records.len() - 1);
    let mut cells = Vec::with_capacity((records.len() - 1) * (width - 1));
    for (r, rec) in records.iter().enumerate().skip(1) {
        if rec.len() != width {
            return Err(FarmError::RaggedRow {
                row: r + 1,
                found: rec.len(),
                expected: width,
            });
        }
        row_labels.push(rec[0].trim().to_string());
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| FarmError::BadCell {
                    row: r + 1,
                    col: c + 1,
                    value: field.to_string(),
                })?;
            cells.push(v);
        }
    }
    let rows = row_labels.len();
    let cols = col_labels.len();
    let m = DMatrix::from_row_slice(rows, cols, &cells);
    match orientation {
        Orientation::RowsAreSeries => PanelData::new(m, row_labels, col_labels),
        Orientation::RowsAreTime => PanelData::new(m.transpose(), col_labels, row_labels),
    }
}

/// Formats the panel as CSV. Values use the shortest decimal text that parses
/// back to the identical `f64`.
pub fn panel_to_csv(panel: &PanelData, orientation: Orientation) -> String {
    let (corner, cols, rows, m) = match orientation {
        Orientation::RowsAreSeries => ("series", &panel.time_ids, &panel.series_ids, panel.values.clone()),
        Orientation::RowsAreTime => ("time", &panel.series_ids, &panel.time_ids, panel.values.transpose()),
    };
    let mut out = String::new();
    out.push_str(corner);
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, label) in rows.iter().enumerate() {
        out.push_str(label);
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_panel_csv(panel: &PanelData, path: impl AsRef<Path>, orientation: Orientation) -> Result<()> {
    let path = path.as_ref();
    let io = |source| FarmError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(panel_to_csv(panel, orientation).as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

/// Regressors for one-step-ahead regressions on `p` lags of every series.
///
/// Row `k` belongs to target time `t = k + p` and column `c` with
/// `column_map[c] = (i, l)` holds series `i` at time `t - l`. Columns are
/// grouped by lag: all series at lag 1, then all series at lag 2, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub regressors: DMatrix<f64>,
    pub targets_offset: usize,
    pub column_map: Vec<(usize, usize)>,
}

impl LaggedDesign {
    /// Targets aligned with the regressor rows for series `i`.
    pub fn targets(&self, values: &DMatrix<f64>, i: usize) -> Vec<f64> {
        (self.targets_offset..values.ncols()).map(|t| values[(i, t)]).collect()
    }
}

pub fn build_lag_matrix(panel: &PanelData, p: usize) -> Result<LaggedDesign> {
    lag_matrix(panel.values(), p)
}

/// [`build_lag_matrix`] on a raw `n x T` matrix.
pub fn lag_matrix(values: &DMatrix<f64>, p: usize) -> Result<LaggedDesign> {
    let (n, t) = values.shape();
    if p == 0 {
        return Err(FarmError::InvalidInput("lag order must be positive".into()));
    }
    if p >= t {
        return Err(FarmError::InsufficientData { needed: p, got: t });
    }
    let column_map: Vec<(usize, usize)> = (1..=p).flat_map(|l| (0..n).map(move |i| (i, l))).collect();
    let regressors = DMatrix::from_fn(t - p, n * p, |k, c| {
        let (i, l) = column_map[c];
        values[(i, k + p - l)]
    });
    Ok(LaggedDesign {
        regressors,
        targets_offset: p,
        column_map,
    })
}

/// The regressor row for forecasting time `t_last + 1`: series values at
/// `t_last, t_last - 1, ..., t_last - p + 1`, in [`LaggedDesign`] column order.
pub fn lag_row(values: &DMatrix<f64>, t_last: usize, p: usize) -> Vec<f64> {
    let n = values.nrows();
    (1..=p)
        .flat_map(|l| (0..n).map(move |i| values[(i, t_last + 1 - l)]))
        .collect()
}
