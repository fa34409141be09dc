//! Batch least-squares machinery: datasets, QR-based OLS fits, leverages and
//! a small SPD solver for normal-equation systems.

use nalgebra::{DMatrix, DVector, DVectorView};
use thiserror::Error;

/// Relative singular-value threshold below which a design is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("design matrix is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Design matrix, response and labels for a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    labels: Vec<String>,
    row_ids: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking shapes and that `x` has full column rank.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        labels: Vec<String>,
        row_ids: Vec<String>,
    ) -> Result<Self, LinalgError> {
        let (n, p) = x.shape();
        if p == 0 || n < p {
            return Err(LinalgError::DimensionMismatch(format!(
                "need n >= p >= 1, got n = {n}, p = {p}"
            )));
        }
        if y.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "y has {} entries but X has {n} rows",
                y.len()
            )));
        }
        if labels.len() != p {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} labels for {p} columns",
                labels.len()
            )));
        }
        if row_ids.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} row ids for {n} rows",
                row_ids.len()
            )));
        }
        check_rank(&x)?;
        Ok(Self {
            x,
            y,
            labels,
            row_ids,
        })
    }

    /// Builds a dataset with default labels (`x0`, `x1`, ...) and row ids `1..=n`.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self, LinalgError> {
        let labels = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        let row_ids = (1..=x.nrows()).map(|i| i.to_string()).collect();
        Self::new(x, y, labels, row_ids)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// True when some column of `x` is identically one.
    pub fn has_intercept(&self) -> bool {
        has_intercept_column(&self.x)
    }

    /// Row `i` (0-based) of the design matrix.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Position of the row with the given identifier.
    pub fn position_of(&self, row_id: &str) -> Option<usize> {
        self.row_ids.iter().position(|r| r == row_id)
    }

    /// Copy with the given 0-based rows removed. The result is rank checked.
    pub fn without_rows(&self, drop: &[usize]) -> Result<Self, LinalgError> {
        let keep: Vec<usize> = (0..self.n()).filter(|i| !drop.contains(i)).collect();
        self.select_rows(&keep)
    }

    /// Copy made of the given 0-based rows, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, LinalgError> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(LinalgError::DimensionMismatch(format!(
                "row index {bad} out of range for n = {}",
                self.n()
            )));
        }
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        let row_ids = rows.iter().map(|&r| self.row_ids[r].clone()).collect();
        Self::new(x, y, self.labels.clone(), row_ids)
    }

    /// Copy with a new response vector of the same length.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self, LinalgError> {
        Self::new(self.x.clone(), y, self.labels.clone(), self.row_ids.clone())
    }
}

pub(crate) fn has_intercept_column(x: &DMatrix<f64>) -> bool {
    x.column_iter().any(|c| c.iter().all(|&v| v == 1.0))
}

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta_hat: DVector<f64>,
    /// `‖residuals‖² / (n − p)`; `None` when `n = p`.
    pub sigma2_hat: Option<f64>,
    /// `1 − SSE/SST`, centered when an intercept column is present;
    /// `None` when SST is zero.
    pub r2: Option<f64>,
    pub residuals: DVector<f64>,
    pub hat_diag: DVector<f64>,
}

impl OlsFit {
    pub fn sse(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Thin QR least-squares solution of `x β ≈ y`.
#[derive(Debug, Clone)]
pub(crate) struct QrSolve {
    pub beta: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl QrSolve {
    /// `(xᵀx)⁻¹ = R⁻¹R⁻ᵀ`.
    pub fn info_inverse(&self) -> Result<DMatrix<f64>, LinalgError> {
        let p = self.r.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or(LinalgError::RankDeficient { ratio: 0.0 })?;
        Ok(&r_inv * r_inv.transpose())
    }
}

/// Ratio of smallest to largest singular value of a p×p (or taller) matrix.
pub(crate) fn singular_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if !(max > 0.0) || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

fn check_rank(x: &DMatrix<f64>) -> Result<(), LinalgError> {
    let r = x.clone().qr().r();
    let ratio = singular_ratio(&r);
    if ratio < RANK_TOLERANCE {
        Err(LinalgError::RankDeficient { ratio })
    } else {
        Ok(())
    }
}

/// Householder QR solve with the rank check applied to the triangular factor.
pub(crate) fn qr_solve(x: &DMatrix<f64>, y: DVectorView<f64>) -> Result<QrSolve, LinalgError> {
    let (n, p) = x.shape();
    if n < p || p == 0 {
        return Err(LinalgError::DimensionMismatch(format!(
            "need n >= p >= 1, got n = {n}, p = {p}"
        )));
    }
    if y.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "y has {} entries but X has {n} rows",
            y.len()
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let ratio = singular_ratio(&r);
    if ratio < RANK_TOLERANCE {
        return Err(LinalgError::RankDeficient { ratio });
    }
    let q = qr.q();
    let qty = q.tr_mul(&y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(LinalgError::RankDeficient { ratio: 0.0 })?;
    Ok(QrSolve { beta, q, r })
}

/// Total and residual sums of squares turned into R².
pub(crate) fn r_squared(y: DVectorView<f64>, sse: f64, centered: bool) -> Option<f64> {
    let sst = if centered {
        let mean = y.mean();
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    if sst > 0.0 {
        Some(1.0 - sse / sst)
    } else {
        None
    }
}

/// Ordinary least squares through a QR decomposition of the design.
pub fn fit_ols(data: &Dataset) -> Result<OlsFit, LinalgError> {
    let solve = qr_solve(&data.x, data.y.as_view())?;
    let residuals = &data.y - &data.x * &solve.beta;
    let hat_diag = DVector::from_iterator(
        data.n(),
        solve.q.row_iter().map(|row| row.norm_squared()),
    );
    let sse = residuals.norm_squared();
    let df = data.n() - data.p();
    let sigma2_hat = (df > 0).then(|| sse / df as f64);
    let r2 = r_squared(data.y.as_view(), sse, data.has_intercept());
    Ok(OlsFit {
        beta_hat: solve.beta,
        sigma2_hat,
        r2,
        residuals,
        hat_diag,
    })
}

/// Diagonal of the hat matrix `X(XᵀX)⁻¹Xᵀ`, from the thin Q factor.
pub fn hat_matrix_diag(data: &Dataset) -> Result<DVector<f64>, LinalgError> {
    let solve = qr_solve(&data.x, data.y.as_view())?;
    Ok(DVector::from_iterator(
        data.n(),
        solve.q.row_iter().map(|row| row.norm_squared()),
    ))
}

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols || b.len() != rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "A is {rows}x{cols}, b has {} entries",
            b.len()
        )));
    }
    let scale = a.amax().max(1.0);
    for i in 0..rows {
        for j in (i + 1)..cols {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(LinalgError::NotSymmetric);
            }
        }
    }
    let chol = a.clone().cholesky().ok_or(LinalgError::NotPositiveDefinite)?;
    Ok(chol.solve(b))
}
