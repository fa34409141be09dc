//! Recursive estimation along a permutation of the observations.
//!
//! Step `i` of a trace (1-based) holds the least-squares fit on the first
//! `p + i − 1` observations of the permutation, so a trace has `n − p + 1`
//! steps. The first step is the initialization block: its fit is exact, so
//! the variance, R² and recursive residual are left undefined there.
//!
//! Two methods are provided. [`Method::Resolve`] refits every prefix from a
//! fresh QR decomposition and is the reference. [`Method::Update`] carries
//! `β̂` and `(XᵀX)⁻¹` forward with rank-one updates; it is cheaper and
//! accumulates rounding error on badly conditioned designs.

use crate::linalg::{qr_solve, r_squared, Dataset, LinalgError};
use crate::permute::{schedule_permutations, Permutation, PermutationSchedule, PermuteError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("prefix of size {subset_size} (step {step}) is rank deficient")]
    PrefixRankDeficient { step: usize, subset_size: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("information matrix is singular or lost positive definiteness")]
    SingularInformation,
    #[error("permutation has length {got}, dataset has {expected} rows")]
    InvalidPermutation { expected: usize, got: usize },
    #[error("trim alpha {alpha} invalid: need 0 <= alpha < 1 and floor(alpha*n) <= n - p")]
    InvalidTrim { alpha: f64 },
    #[error(transparent)]
    Schedule(#[from] PermuteError),
    #[error("permutation {perm_id}: {source}")]
    InPermutation {
        perm_id: usize,
        #[source]
        source: Box<EngineError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Resolve,
    Update,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resolve" => Ok(Self::Resolve),
            "update" => Ok(Self::Update),
            other => Err(format!("unknown method `{other}` (expected resolve or update)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Resolve => "resolve",
            Self::Update => "update",
        })
    }
}

/// One step of a recursive trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub subset_size: usize,
    pub beta: DVector<f64>,
    pub sigma2: Option<f64>,
    pub r2: Option<f64>,
    pub recursive_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveTrace {
    pub perm_id: usize,
    pub perm: Permutation,
    pub method: Method,
    pub steps: Vec<TraceStep>,
    /// Set when a prefix turned out rank deficient; `steps` then holds only
    /// the steps computed before the failure.
    pub failure: Option<EngineError>,
}

impl RecursiveTrace {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    /// Recursive residuals of steps `2..=n−p+1`, in order.
    pub fn recursive_residuals(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.recursive_residual)
            .collect()
    }

    pub fn last(&self) -> Option<&TraceStep> {
        self.steps.last()
    }
}

/// Fit state needed to score the next observation: `β̂` and `(XᵀX)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixState {
    pub beta: DVector<f64>,
    pub info_inverse: DMatrix<f64>,
}

/// Standardized one-step-ahead prediction error of `(x_new, y_new)`:
/// `(y − xᵀβ̂) / sqrt(1 + xᵀ(XᵀX)⁻¹x)`.
pub fn recursive_residual(
    state: &PrefixState,
    x_new: &DVector<f64>,
    y_new: f64,
) -> Result<f64, EngineError> {
    let (_, denom_sq) = innovation(state, x_new)?;
    Ok((y_new - x_new.dot(&state.beta)) / denom_sq.sqrt())
}

/// Returns `((XᵀX)⁻¹x, 1 + xᵀ(XᵀX)⁻¹x)`.
fn innovation(state: &PrefixState, x: &DVector<f64>) -> Result<(DVector<f64>, f64), EngineError> {
    let p = state.beta.len();
    if x.len() != p || state.info_inverse.shape() != (p, p) {
        return Err(EngineError::DimensionMismatch(format!(
            "x has {} entries, state has p = {p}",
            x.len()
        )));
    }
    let px = &state.info_inverse * x;
    let denom_sq = 1.0 + x.dot(&px);
    if !denom_sq.is_finite() || denom_sq < 1.0 {
        return Err(EngineError::SingularInformation);
    }
    Ok((px, denom_sq))
}

struct Permuted {
    x: DMatrix<f64>,
    y: DVector<f64>,
    centered: bool,
}

fn permuted(data: &Dataset, perm: &Permutation) -> Result<Permuted, EngineError> {
    if perm.len() != data.n() {
        return Err(EngineError::InvalidPermutation {
            expected: data.n(),
            got: perm.len(),
        });
    }
    let rows = perm.as_slice();
    Ok(Permuted {
        x: data.x().select_rows(rows),
        y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| data.y()[r])),
        centered: data.has_intercept(),
    })
}

fn prefix_error(err: LinalgError, p: usize, subset_size: usize) -> EngineError {
    match err {
        LinalgError::DimensionMismatch(msg) => EngineError::DimensionMismatch(msg),
        _ => EngineError::PrefixRankDeficient {
            step: subset_size - p + 1,
            subset_size,
        },
    }
}

/// Trace built by refitting every prefix from scratch.
pub fn recursive_trace_resolve(
    data: &Dataset,
    perm: &Permutation,
) -> Result<RecursiveTrace, EngineError> {
    let pd = permuted(data, perm)?;
    let (n, p) = (data.n(), data.p());
    let mut trace = RecursiveTrace {
        perm_id: 0,
        perm: perm.clone(),
        method: Method::Resolve,
        steps: Vec::with_capacity(n - p + 1),
        failure: None,
    };
    let mut prev: Option<PrefixState> = None;
    for m in p..=n {
        let x_pre = pd.x.rows(0, m).into_owned();
        let y_pre = pd.y.rows(0, m);
        let solve = match qr_solve(&x_pre, y_pre) {
            Ok(s) => s,
            Err(LinalgError::DimensionMismatch(msg)) => {
                return Err(EngineError::DimensionMismatch(msg))
            }
            Err(e) => {
                trace.failure = Some(prefix_error(e, p, m));
                return Ok(trace);
            }
        };
        let recursive = match &prev {
            Some(state) => {
                let x_new = pd.x.row(m - 1).transpose();
                Some(recursive_residual(state, &x_new, pd.y[m - 1])?)
            }
            None => None,
        };
        let (sigma2, r2) = if m > p {
            let sse = (y_pre - &x_pre * &solve.beta).norm_squared();
            (
                Some(sse / (m - p) as f64),
                r_squared(y_pre, sse, pd.centered),
            )
        } else {
            (None, None)
        };
        let info_inverse = solve.info_inverse().map_err(|e| prefix_error(e, p, m))?;
        trace.steps.push(TraceStep {
            subset_size: m,
            beta: solve.beta.clone(),
            sigma2,
            r2,
            recursive_residual: recursive,
        });
        prev = Some(PrefixState {
            beta: solve.beta,
            info_inverse,
        });
    }
    Ok(trace)
}

/// Running sums for R² of a growing prefix.
#[derive(Default)]
struct ResponseMoments {
    count: f64,
    mean: f64,
    centered_ss: f64,
    raw_ss: f64,
}

impl ResponseMoments {
    fn push(&mut self, y: f64) {
        self.count += 1.0;
        let delta = y - self.mean;
        self.mean += delta / self.count;
        self.centered_ss += delta * (y - self.mean);
        self.raw_ss += y * y;
    }

    fn r2(&self, sse: f64, centered: bool) -> Option<f64> {
        let sst = if centered { self.centered_ss } else { self.raw_ss };
        (sst > 0.0).then(|| 1.0 - sse / sst)
    }
}

/// Trace built with the rank-one recursive least-squares update.
///
/// After the initialization block, each new row `x` with response `y` gives
/// `e = y − xᵀβ̂`, `d = 1 + xᵀPx`, `β̂ ← β̂ + Px·e/d`, `P ← P − PxxᵀP/d`, and the
/// residual sum of squares grows by the squared recursive residual `e²/d`.
pub fn recursive_trace_update(
    data: &Dataset,
    perm: &Permutation,
) -> Result<RecursiveTrace, EngineError> {
    let pd = permuted(data, perm)?;
    let (n, p) = (data.n(), data.p());
    let mut trace = RecursiveTrace {
        perm_id: 0,
        perm: perm.clone(),
        method: Method::Update,
        steps: Vec::with_capacity(n - p + 1),
        failure: None,
    };
    let init_x = pd.x.rows(0, p).into_owned();
    let init = qr_solve(&init_x, pd.y.rows(0, p)).and_then(|s| {
        let info_inverse = s.info_inverse()?;
        Ok(PrefixState {
            beta: s.beta,
            info_inverse,
        })
    });
    let mut state = match init {
        Ok(s) => s,
        Err(LinalgError::DimensionMismatch(msg)) => return Err(EngineError::DimensionMismatch(msg)),
        Err(e) => {
            trace.failure = Some(prefix_error(e, p, p));
            return Ok(trace);
        }
    };
    let mut moments = ResponseMoments::default();
    pd.y.rows(0, p).iter().for_each(|&v| moments.push(v));
    trace.steps.push(TraceStep {
        subset_size: p,
        beta: state.beta.clone(),
        sigma2: None,
        r2: None,
        recursive_residual: None,
    });
    let mut sse = 0.0;
    for m in (p + 1)..=n {
        let x_new = pd.x.row(m - 1).transpose();
        let y_new = pd.y[m - 1];
        let (px, denom_sq) = match innovation(&state, &x_new) {
            Ok(v) => v,
            Err(EngineError::SingularInformation) => {
                trace.failure = Some(EngineError::SingularInformation);
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        let err = y_new - x_new.dot(&state.beta);
        let w = err / denom_sq.sqrt();
        state.beta += &px * (err / denom_sq);
        state.info_inverse -= &px * px.transpose() / denom_sq;
        sse += w * w;
        moments.push(y_new);
        trace.steps.push(TraceStep {
            subset_size: m,
            beta: state.beta.clone(),
            sigma2: Some(sse / (m - p) as f64),
            r2: moments.r2(sse, pd.centered),
            recursive_residual: Some(w),
        });
    }
    Ok(trace)
}

pub fn recursive_trace(
    data: &Dataset,
    perm: &Permutation,
    method: Method,
) -> Result<RecursiveTrace, EngineError> {
    match method {
        Method::Resolve => recursive_trace_resolve(data, perm),
        Method::Update => recursive_trace_update(data, perm),
    }
}

/// First step index (1-based) shown when the first `⌊αn⌋ − 1` steps are trimmed.
pub fn first_exported_step(n: usize, p: usize, trim_alpha: f64) -> Result<usize, EngineError> {
    if !(0.0..1.0).contains(&trim_alpha) {
        return Err(EngineError::InvalidTrim { alpha: trim_alpha });
    }
    let cut = (trim_alpha * n as f64).floor() as usize;
    if cut > n.saturating_sub(p) {
        return Err(EngineError::InvalidTrim { alpha: trim_alpha });
    }
    Ok(cut.max(1))
}

/// All traces of a schedule, ordered by `perm_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEnsemble {
    pub traces: Vec<RecursiveTrace>,
    pub schedule: PermutationSchedule,
    pub method: Method,
    pub trim_alpha: f64,
    pub first_step: usize,
}

impl TraceEnsemble {
    /// Steps of `trace` that survive trimming.
    pub fn exported_steps<'a>(&self, trace: &'a RecursiveTrace) -> &'a [TraceStep] {
        let skip = (self.first_step - 1).min(trace.steps.len());
        &trace.steps[skip..]
    }

    pub fn valid_traces(&self) -> impl Iterator<Item = &RecursiveTrace> {
        self.traces.iter().filter(|t| t.is_valid())
    }
}

/// Runs one trace per scheduled permutation.
///
/// Traces run on the current rayon pool; the result order does not depend on
/// the thread count. A rank-deficient prefix invalidates only its own trace.
pub fn trace_ensemble(
    data: &Dataset,
    sched: &PermutationSchedule,
    method: Method,
    trim_alpha: f64,
) -> Result<TraceEnsemble, EngineError> {
    if sched.n != data.n() {
        return Err(EngineError::InvalidPermutation {
            expected: data.n(),
            got: sched.n,
        });
    }
    let first_step = first_exported_step(data.n(), data.p(), trim_alpha)?;
    let perms = schedule_permutations(sched)?;
    let traces = perms
        .into_par_iter()
        .enumerate()
        .map(|(perm_id, perm)| {
            recursive_trace(data, &perm, method)
                .map(|mut t| {
                    t.perm_id = perm_id;
                    t
                })
                .map_err(|e| EngineError::InPermutation {
                    perm_id,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TraceEnsemble {
        traces,
        schedule: *sched,
        method,
        trim_alpha,
        first_step,
    })
}
