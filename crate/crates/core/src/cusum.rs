//! Cumulative sums of recursive residuals and their parabolic boundaries.
//!
//! With `S_0 = 0` and `S_k = S_{k−1} + w_k` for the recursive residuals
//! `w_1..w_{n−p}`, the path takes the value `S_k / (σ̂√n)` at `t = k/n` and is
//! linear in between. Under a Gaussian linear model it approaches Brownian
//! motion as `n` grows, so the crossing test is only meaningful for large
//! samples. The path ends at the last knot `t = (n−p)/n`.
//!
//! A Brownian path leaves the region `|y| < 3a√t` on `(0, 1)` with probability
//! `α` when `1 − Φ(3a) + exp(−4a²)Φ(a) = α/2`.

use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CusumError {
    #[error("no boundary constant for alpha = {alpha} (need 0 < alpha < 0.5)")]
    NoRoot { alpha: f64 },
    #[error("residual scale is zero; the cusum path is undefined for a perfect fit")]
    ZeroVariance,
    #[error("invalid residual scale {0}")]
    InvalidSigma(f64),
    #[error("{residuals} residuals cannot come from a sample of size {n}")]
    LengthMismatch { residuals: usize, n: usize },
}

/// Standard normal CDF, `Φ(x) = erfc(−x/√2)/2`.
///
/// `erfc` comes from `libm` (the musl/FreeBSD implementation, within about
/// one ulp), so `Φ` is accurate to well below `1e-12` in absolute terms.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `1 − Φ(3a) + exp(−4a²)Φ(a) − α/2`, whose root in `a` is the boundary constant.
pub fn boundary_equation(a: f64, alpha: f64) -> f64 {
    // 1 − Φ(3a) written as Φ(−3a) to keep the tail accurate
    normal_cdf(-3.0 * a) + (-4.0 * a * a).exp() * normal_cdf(a) - 0.5 * alpha
}

const BRACKET_HI: f64 = 10.0;

/// Solves for `a` by bisection on `(0, 10]`.
pub fn solve_boundary_constant(alpha: f64) -> Result<f64, CusumError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(CusumError::NoRoot { alpha });
    }
    let (mut lo, mut hi) = (0.0_f64, BRACKET_HI);
    // g(0) = 1 − α/2 > 0 always; the bracket fails only when α/2 is below g(10).
    if boundary_equation(hi, alpha) > 0.0 {
        return Err(CusumError::NoRoot { alpha });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if boundary_equation(mid, alpha) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    if boundary_equation(a, alpha).abs() > 1e-9 {
        return Err(CusumError::NoRoot { alpha });
    }
    Ok(a)
}

/// The pair of curves `y = ±3a√t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub alpha: f64,
    pub a: f64,
}

impl Boundary {
    pub fn new(alpha: f64) -> Result<Self, CusumError> {
        Ok(Self {
            alpha,
            a: solve_boundary_constant(alpha)?,
        })
    }

    pub fn upper(&self, t: f64) -> f64 {
        3.0 * self.a * t.max(0.0).sqrt()
    }

    pub fn lower(&self, t: f64) -> f64 {
        -self.upper(t)
    }
}

/// Normalized cusum process of one permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumPath {
    pub perm_id: usize,
    /// `(k/n, S_k/(σ̂√n))` for `k = 0..=n−p`.
    pub knots: Vec<(f64, f64)>,
    pub sigma_hat: f64,
    pub n: usize,
    pub p: usize,
    /// Points per knot interval in [`CusumPath::samples`].
    pub grid: usize,
}

impl CusumPath {
    /// Knots plus `grid − 1` evenly spaced interpolated points per interval.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let grid = self.grid.max(1);
        let mut out = Vec::with_capacity((self.knots.len().saturating_sub(1)) * grid + 1);
        for w in self.knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            for j in 0..grid {
                let f = j as f64 / grid as f64;
                out.push((t0 + f * (t1 - t0), v0 + f * (v1 - v0)));
            }
        }
        if let Some(&last) = self.knots.last() {
            out.push(last);
        }
        out
    }

    /// Linear interpolation between knots; `None` outside `[0, (n−p)/n]`.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let last = self.knots.last()?;
        if !(0.0..=last.0).contains(&t) {
            return None;
        }
        let k = ((t * self.n as f64).floor() as usize).min(self.knots.len() - 1);
        let (t0, v0) = self.knots[k];
        match self.knots.get(k + 1) {
            Some(&(t1, v1)) => Some(v0 + (t - t0) / (t1 - t0) * (v1 - v0)),
            None => Some(v0),
        }
    }

    pub fn end_value(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.1)
    }
}

/// Builds the cusum path of `residuals` from a sample of size `n`.
pub fn cusum_path(
    residuals: &[f64],
    sigma_hat: f64,
    n: usize,
    grid: usize,
) -> Result<CusumPath, CusumError> {
    if sigma_hat == 0.0 {
        return Err(CusumError::ZeroVariance);
    }
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(CusumError::InvalidSigma(sigma_hat));
    }
    if residuals.len() >= n {
        return Err(CusumError::LengthMismatch {
            residuals: residuals.len(),
            n,
        });
    }
    let scale = sigma_hat * (n as f64).sqrt();
    let mut knots = Vec::with_capacity(residuals.len() + 1);
    knots.push((0.0, 0.0));
    let mut sum = 0.0;
    for (k, w) in residuals.iter().enumerate() {
        sum += w;
        knots.push(((k + 1) as f64 / n as f64, sum / scale));
    }
    Ok(CusumPath {
        perm_id: 0,
        knots,
        sigma_hat,
        n,
        p: n - residuals.len(),
        grid: grid.max(1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub perm_id: usize,
    pub crossed: bool,
    pub first_crossing_t: Option<f64>,
    pub side: Option<Side>,
}

/// Smallest `t > 0` where the path meets or exceeds `3a√t`.
fn first_upper_meet(knots: impl Iterator<Item = (f64, f64)>, a: f64) -> Option<f64> {
    let b = 3.0 * a;
    let mut prev: Option<(f64, f64)> = None;
    for (t1, v1) in knots {
        let Some((t0, v0)) = prev.replace((t1, v1)) else {
            continue;
        };
        let (s0, s1) = (t0.sqrt(), t1.sqrt());
        if t0 > 0.0 && v0 >= b * s0 {
            return Some(t0);
        }
        // with s = √t the segment meets the parabola where
        // m s² − 3a s + (v0 − m t0) = 0
        let m = (v1 - v0) / (t1 - t0);
        let c = v0 - m * t0;
        let roots: [Option<f64>; 2] = if m == 0.0 {
            [Some(c / b), None]
        } else {
            let disc = b * b - 4.0 * m * c;
            if disc < 0.0 {
                [None, None]
            } else {
                let q = 0.5 * (b + disc.sqrt());
                [Some(q / m), (q != 0.0).then(|| c / q)]
            }
        };
        let hit = roots
            .into_iter()
            .flatten()
            .filter(|&s| s > s0 && s <= s1)
            .min_by(f64::total_cmp);
        if let Some(s) = hit {
            return Some((s * s).clamp(t0, t1));
        }
        if v1 >= b * s1 {
            return Some(t1);
        }
    }
    None
}

/// First time the path meets either boundary curve, solved per linear segment.
pub fn detect_crossing(path: &CusumPath, boundary: &Boundary) -> CrossingReport {
    let upper = first_upper_meet(path.knots.iter().copied(), boundary.a);
    let lower = first_upper_meet(path.knots.iter().map(|&(t, v)| (t, -v)), boundary.a);
    let hit = match (upper, lower) {
        (Some(u), Some(l)) if l < u => Some((l, Side::Lower)),
        (Some(u), _) => Some((u, Side::Upper)),
        (None, Some(l)) => Some((l, Side::Lower)),
        (None, None) => None,
    };
    CrossingReport {
        perm_id: path.perm_id,
        crossed: hit.is_some(),
        first_crossing_t: hit.map(|h| h.0),
        side: hit.map(|h| h.1),
    }
}
