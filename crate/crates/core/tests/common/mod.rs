//! Reference computations that share no numerics with the library.
//!
//! Least squares is solved exactly over the rationals; the normal CDF comes
//! from quadrature of the density; KS p-values use the Kolmogorov series.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num::{BigRational, One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recdiag::linalg::Dataset;
use std::path::PathBuf;

pub type Q = BigRational;

pub fn q(v: f64) -> Q {
    BigRational::from_float(v).expect("finite input")
}

pub fn f(v: &Q) -> f64 {
    v.to_f64().expect("representable")
}

/// Exact solution of a square system by Gaussian elimination, `None` if singular.
pub fn solve_exact(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[col][col];
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    let mut x = vec![Q::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r].clone();
        for c in r + 1..n {
            s -= &a[r][c] * &x[c];
        }
        x[r] = s / &a[r][r];
    }
    Some(x)
}

/// `XᵀX` and `Xᵀy` of the first `m` rows, exactly.
fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> (Vec<Vec<Q>>, Vec<Q>) {
    let p = x.ncols();
    let xq: Vec<Vec<Q>> = rows.iter().map(|&i| (0..p).map(|j| q(x[(i, j)])).collect()).collect();
    let yq: Vec<Q> = rows.iter().map(|&i| q(y[i])).collect();
    let mut xtx = vec![vec![Q::zero(); p]; p];
    let mut xty = vec![Q::zero(); p];
    for (row, yi) in xq.iter().zip(&yq) {
        for a in 0..p {
            for b in 0..p {
                xtx[a][b] += &row[a] * &row[b];
            }
            xty[a] += &row[a] * yi;
        }
    }
    (xtx, xty)
}

/// Exact least-squares summary of a subset of rows.
#[derive(Debug, Clone)]
pub struct ExactFit {
    pub beta: Vec<f64>,
    pub sigma2: Option<f64>,
    pub r2: Option<f64>,
    pub sse: f64,
}

pub fn exact_fit(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> Option<ExactFit> {
    let p = x.ncols();
    let m = rows.len();
    let (xtx, xty) = normal_equations(x, y, rows);
    let beta = solve_exact(xtx, xty)?;
    let mut sse = Q::zero();
    let mut sum_y = Q::zero();
    let mut sum_y2 = Q::zero();
    for &i in rows {
        let mut fitted = Q::zero();
        for j in 0..p {
            fitted += q(x[(i, j)]) * &beta[j];
        }
        let yi = q(y[i]);
        let e = &yi - fitted;
        sse += &e * &e;
        sum_y += &yi;
        sum_y2 += &yi * &yi;
    }
    let centered = (0..p).any(|j| rows.iter().all(|&i| x[(i, j)] == 1.0));
    let sst = if centered {
        &sum_y2 - &sum_y * &sum_y / Q::from_integer(m.into())
    } else {
        sum_y2
    };
    let sigma2 = (m > p).then(|| f(&(&sse / Q::from_integer((m - p).into()))));
    // a saturated fit (m = p) has no meaningful R², same as σ̂²
    let r2 = (m > p && !sst.is_zero()).then(|| f(&(Q::one() - &sse / &sst)));
    Some(ExactFit {
        beta: beta.iter().map(f).collect(),
        sigma2,
        r2,
        sse: f(&sse),
    })
}

/// Recursive residual of row `next` given the fit on `rows`, from its
/// definition `(y − xᵀβ̂) / √(1 + xᵀ(XᵀX)⁻¹x)`, exact up to the final root.
pub fn exact_recursive_residual(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize], next: usize) -> Option<f64> {
    let p = x.ncols();
    let (xtx, xty) = normal_equations(x, y, rows);
    let beta = solve_exact(xtx.clone(), xty)?;
    let xn: Vec<Q> = (0..p).map(|j| q(x[(next, j)])).collect();
    let z = solve_exact(xtx, xn.clone())?;
    let mut pred = Q::zero();
    let mut quad = Q::zero();
    for j in 0..p {
        pred += &xn[j] * &beta[j];
        quad += &xn[j] * &z[j];
    }
    let e = q(y[next]) - pred;
    Some(f(&e) / (1.0 + f(&quad)).sqrt())
}

/// Leverage of row `i` in the fit on all rows: `xᵢᵀ(XᵀX)⁻¹xᵢ`.
pub fn exact_leverage(x: &DMatrix<f64>, i: usize) -> f64 {
    let p = x.ncols();
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let y = DVector::zeros(x.nrows());
    let (xtx, _) = normal_equations(x, &y, &rows);
    let xi: Vec<Q> = (0..p).map(|j| q(x[(i, j)])).collect();
    let z = solve_exact(xtx, xi.clone()).expect("full rank");
    let mut h = Q::zero();
    for j in 0..p {
        h += &xi[j] * &z[j];
    }
    f(&h)
}

/// Rank of a rational matrix.
pub fn exact_rank(x: &DMatrix<f64>, rows: &[usize]) -> usize {
    let p = x.ncols();
    let mut a: Vec<Vec<Q>> = rows.iter().map(|&i| (0..p).map(|j| q(x[(i, j)])).collect()).collect();
    let mut rank = 0;
    for col in 0..p {
        let Some(pivot) = (rank..a.len()).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, pivot);
        for r in rank + 1..a.len() {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[rank][col];
            for c in col..p {
                let delta = &factor * &a[rank][c];
                a[r][c] -= delta;
            }
        }
        rank += 1;
    }
    rank
}

/// Random design with an intercept, `p − 1` uniform regressors on a coarse
/// grid (so ties and exact collinearity occur), and a noisy response.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(n, p, |_, j| {
        if j == 0 {
            1.0
        } else {
            (rng.random_range(-40..=40) as f64) / 8.0
        }
    });
    let y = DVector::from_fn(n, |i, _| {
        let mut v = 0.5;
        for j in 1..p {
            v += (j as f64) * x[(i, j)];
        }
        v + rng.random_range(-1.0..1.0)
    });
    (x, y)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal density.
fn phi(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Normal CDF by composite Gauss–Legendre (5 nodes) quadrature of the
/// density over `[0, |x|]`.
pub fn normal_cdf_quad(x: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let b = x.abs();
    let panels = ((b * 200.0).ceil() as usize).max(1);
    let h = b / panels as f64;
    let mut integral = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for (t, w) in NODES.iter().zip(WEIGHTS) {
            s += w * phi(mid + 0.5 * h * t);
        }
        integral += 0.5 * h * s;
    }
    if x >= 0.0 {
        0.5 + integral
    } else {
        0.5 - integral
    }
}

/// Boundary constant by plain bisection on the quadrature CDF.
pub fn boundary_oracle(alpha: f64) -> f64 {
    let g = |a: f64| normal_cdf_quad(-3.0 * a) + (-4.0 * a * a).exp() * normal_cdf_quad(a) - alpha / 2.0;
    let (mut lo, mut hi) = (1e-6, 10.0);
    assert!(g(lo) > 0.0 && g(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = cdf(v);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample variance and lag-1 autocorrelation.
pub fn variance_and_lag1(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let c0: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let c1: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    (c0 / (n - 1.0), c1 / c0)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative-or-absolute closeness with scale `max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Path of a bundled dataset, or `None` with a note on stderr if it is gone.
pub fn bundled(name: &str) -> Option<PathBuf> {
    let path = data_dir().join(name);
    if path.is_file() {
        Some(path)
    } else {
        eprintln!("skipping: bundled dataset {} not present", path.display());
        None
    }
}

pub fn dataset(x: DMatrix<f64>, y: DVector<f64>) -> Dataset {
    Dataset::from_parts(x, y).expect("full rank instance")
}

/// Intercept plus two regressors that differ by `1e-5` times noise. The
/// rank-one update loses several digits here while prefix refits by QR do not.
pub fn ill_conditioned_instance() -> (DMatrix<f64>, DVector<f64>) {
    const N: usize = 60;
    const EPS: f64 = 1e-5;
    let mut rng = seeded(1);
    let u: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = DMatrix::from_fn(N, 3, |i, j| match j {
        0 => 1.0,
        1 => u[i],
        _ => u[i] + EPS * v[i],
    });
    let y = DVector::from_fn(N, |i, _| 1.0 + u[i] + 0.1 * rng.random_range(-1.0..1.0));
    (x, y)
}
