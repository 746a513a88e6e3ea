//! Small dense least-squares solver shared by the trend fits and the
//! Savitzky-Golay kernels.
//!
//! All systems in this crate are tall and thin (hundreds of rows, at most a
//! handful of columns), so a Householder QR without pivoting is accurate and
//! cheap. Rank deficiency is detected from the diagonal of `R` and reported
//! so callers can fall back to a smaller basis.

use crate::{Error, Result};

/// Dense row-major matrix. Rows are observations, columns basis functions.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::InsufficientData("empty design matrix".into()));
        }
        let ncols = rows[0].len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension(format!(
                    "design row {i} has {} columns, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(DesignMatrix { rows: nrows, cols: ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Least-squares solution of `A x = y` via Householder QR.
///
/// Returns `Err(RankDeficient)` when a diagonal entry of `R` collapses
/// relative to the largest one, which is the signal used by the surface
/// fits to downgrade their basis.
pub fn lstsq(a: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != a.rows {
        return Err(Error::Dimension(format!(
            "rhs has {} entries, design has {} rows",
            y.len(),
            a.rows
        )));
    }
    if a.rows < a.cols {
        return Err(Error::InsufficientData(format!(
            "{} rows for {} unknowns",
            a.rows, a.cols
        )));
    }

    let m = a.rows;
    let n = a.cols;
    let mut r = a.data.clone();
    let mut rhs = y.to_vec();

    // Householder triangularization, applied to the rhs as we go.
    for k in 0..n {
        let mut norm = 0.0;
        for i in k..m {
            norm = f64::hypot(norm, r[i * n + k]);
        }
        if norm == 0.0 {
            continue; // zero column; caught by the rank check below
        }
        let alpha = if r[k * n + k] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - k];
        v[0] = r[k * n + k] - alpha;
        for i in (k + 1)..m {
            v[i - k] = r[i * n + k];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        r[k * n + k] = alpha;
        for i in (k + 1)..m {
            r[i * n + k] = 0.0;
        }
        for j in (k + 1)..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * r[i * n + j];
            }
            let scale = 2.0 * dot / vnorm2;
            for i in k..m {
                r[i * n + j] -= scale * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..m {
            dot += v[i - k] * rhs[i];
        }
        let scale = 2.0 * dot / vnorm2;
        for i in k..m {
            rhs[i] -= scale * v[i - k];
        }
    }

    let max_diag = (0..n).map(|k| r[k * n + k].abs()).fold(0.0, f64::max);
    let tol = max_diag * 1e-12;
    for k in 0..n {
        if r[k * n + k].abs() <= tol {
            return Err(Error::RankDeficient(format!(
                "column {k} is linearly dependent"
            )));
        }
    }

    // Back substitution.
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in (k + 1)..n {
            s -= r[k * n + j] * x[j];
        }
        x[k] = s / r[k * n + k];
    }
    Ok(x)
}

/// Residual vector `y - A x`.
pub fn residuals(a: &DesignMatrix, y: &[f64], x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let pred: f64 = (0..a.ncols()).map(|j| a.at(i, j) * x[j]).sum();
            y[i] - pred
        })
        .collect()
}

/// Root-mean-square of the residuals of a solved system.
pub fn rms_residual(a: &DesignMatrix, y: &[f64], x: &[f64]) -> f64 {
    let r = residuals(a, y, x);
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Linear interpolation of `(xs, ys)` at `x`, with linear extrapolation
/// beyond the end knots. `xs` must be sorted ascending with ≥ 2 entries.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert!(xs.len() >= 2 && xs.len() == ys.len());
    let n = xs.len();
    // Segment selection: clamp to the end segments for extrapolation.
    let mut hi = 1;
    while hi < n - 1 && x > xs[hi] {
        hi += 1;
    }
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}
