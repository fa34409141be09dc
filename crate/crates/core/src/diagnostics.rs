//! Single-case regression diagnostics: leverage, standardized residuals,
//! Cook distance and DFFIT.
//!
//! Leave-one-out quantities use the closed forms in `h_ii` and `e_i`:
//!
//! * standardized residual `r_i = e_i / (σ̂ √(1 − h_ii))`
//! * Cook distance `D_i = (r_i² / p) · h_ii / (1 − h_ii)`, i.e.
//!   `‖X(β̂ − β̂₍ᵢ₎)‖² / (p σ̂²)`
//! * deleted variance `σ̂₍ᵢ₎² = (SSE − e_i²/(1 − h_ii)) / (n − p − 1)`
//! * DFFIT `= t_i √(h_ii / (1 − h_ii))` with the studentized deleted residual
//!   `t_i = e_i / (σ̂₍ᵢ₎ √(1 − h_ii))`, i.e. `(ŷ_i − ŷ_i₍ᵢ₎) / (σ̂₍ᵢ₎ √h_ii)`

use crate::linalg::{fit_ols, Dataset, LinalgError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `1 − h_ii` below this is treated as leverage one.
const LEVERAGE_ONE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("observation {row_id} has leverage one; deletion diagnostics are singular")]
    LeverageOne { index: usize, row_id: String },
    #[error("need n > p + 1 for deletion diagnostics, got n = {n}, p = {p}")]
    TooFewObservations { n: usize, p: usize },
    #[error("residual variance is zero; standardized residuals are undefined")]
    ZeroVariance,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDiagnostics {
    pub row_id: String,
    pub leverage: f64,
    pub high_leverage: bool,
    pub standardized_residual: f64,
    pub studentized_deleted_residual: f64,
    pub cook_distance: f64,
    pub dffit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub observations: Vec<ObservationDiagnostics>,
    /// `2p/n`.
    pub leverage_threshold: f64,
    pub sigma_hat: f64,
}

impl DiagnosticsReport {
    pub fn high_leverage_rows(&self) -> impl Iterator<Item = &str> {
        self.observations
            .iter()
            .filter(|o| o.high_leverage)
            .map(|o| o.row_id.as_str())
    }
}

pub fn classical_diagnostics(data: &Dataset) -> Result<DiagnosticsReport, DiagnosticsError> {
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(DiagnosticsError::TooFewObservations { n, p });
    }
    let fit = fit_ols(data)?;
    if let Some(i) = fit.hat_diag.iter().position(|h| 1.0 - h < LEVERAGE_ONE_TOL) {
        return Err(DiagnosticsError::LeverageOne {
            index: i,
            row_id: data.row_ids()[i].clone(),
        });
    }
    let sse = fit.sse();
    // residuals at rounding level count as an exact fit
    let noise_floor = n as f64 * (f64::EPSILON * data.y().norm()).powi(2);
    let sigma2 = fit.sigma2_hat.unwrap_or(0.0);
    if sse <= noise_floor {
        return Err(DiagnosticsError::ZeroVariance);
    }
    let sigma = sigma2.sqrt();
    let threshold = 2.0 * p as f64 / n as f64;
    let observations = fit
        .residuals
        .iter()
        .zip(fit.hat_diag.iter())
        .zip(data.row_ids())
        .map(|((&e, &h), row_id)| {
            let one_minus_h = 1.0 - h;
            let standardized = e / (sigma * one_minus_h.sqrt());
            let deleted_var = (sse - e * e / one_minus_h) / (n - p - 1) as f64;
            let studentized = e / (deleted_var.max(0.0).sqrt() * one_minus_h.sqrt());
            ObservationDiagnostics {
                row_id: row_id.clone(),
                leverage: h,
                high_leverage: h >= threshold,
                standardized_residual: standardized,
                studentized_deleted_residual: studentized,
                cook_distance: standardized * standardized / p as f64 * h / one_minus_h,
                dffit: studentized * (h / one_minus_h).sqrt(),
            }
        })
        .collect();
    Ok(DiagnosticsReport {
        observations,
        leverage_threshold: threshold,
        sigma_hat: sigma,
    })
}
