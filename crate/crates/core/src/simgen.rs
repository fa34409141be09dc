//! Simulated regression data with decimal-shift outliers.
//!
//! Clean data follow `y_i = β0 + β1 x_i + ε_i` with `x_i` drawn from a Laplace
//! (double exponential) law with location 1 and `ε_i ~ N(0, noise_sd²)`.
//! Outliers multiply `x` and/or `y` at chosen positions by a factor, which
//! mimics a misplaced decimal separator when the factor is 10.

use crate::linalg::{Dataset, LinalgError};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("outlier positions {positions:?} fall outside 1..={n}")]
    PositionsOutOfRange { positions: Vec<usize>, n: usize },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which variable an outlier perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    None,
    #[serde(rename = "x")]
    XOnly,
    #[serde(rename = "y")]
    YOnly,
    Both,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::None, Target::XOnly, Target::YOnly, Target::Both];

    pub fn name(self) -> &'static str {
        match self {
            Target::None => "none",
            Target::XOnly => "x",
            Target::YOnly => "y",
            Target::Both => "both",
        }
    }

    fn touches_x(self) -> bool {
        matches!(self, Target::XOnly | Target::Both)
    }

    fn touches_y(self) -> bool {
        matches!(self, Target::YOnly | Target::Both)
    }
}

/// Where outliers go. Written as `middle`, `consecutive:K` or `random:K:SEED`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Positions {
    /// Observation `⌊n/2⌋`.
    #[default]
    Middle,
    /// `⌊n/2⌋, …, ⌊n/2⌋ + k − 1`.
    Consecutive(usize),
    /// `k` distinct observations drawn uniformly from `1..=n`.
    RandomK { k: usize, seed: u64 },
}

impl FromStr for Positions {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::Parse(format!("bad positions `{s}`"));
        let mut parts = s.trim().split(':');
        let out = match parts.next() {
            Some("middle") => Positions::Middle,
            Some("consecutive") => {
                Positions::Consecutive(parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?)
            }
            Some("random") => Positions::RandomK {
                k: parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
                seed: parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(out)
    }
}

impl TryFrom<String> for Positions {
    type Error = SimError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Positions> for String {
    fn from(p: Positions) -> Self {
        p.to_string()
    }
}

impl fmt::Display for Positions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Positions::Middle => f.write_str("middle"),
            Positions::Consecutive(k) => write!(f, "consecutive:{k}"),
            Positions::RandomK { k, seed } => write!(f, "random:{k}:{seed}"),
        }
    }
}

fn default_beta0() -> f64 {
    1.0
}
fn default_beta1() -> f64 {
    2.0
}
fn default_noise_sd() -> f64 {
    0.1
}
fn default_factor() -> f64 {
    10.0
}
fn default_scale() -> f64 {
    1.0
}

/// Recipe for one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Scale of the Laplace law of `x` (its location is fixed at 1).
    #[serde(default = "default_scale")]
    pub x_scale: f64,
    #[serde(default = "default_factor")]
    pub perturb_factor: f64,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub positions: Positions,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    /// Clean model with the default parameters.
    pub fn clean(n: usize, seed: u64) -> Self {
        Self {
            n,
            beta0: default_beta0(),
            beta1: default_beta1(),
            noise_sd: default_noise_sd(),
            x_scale: default_scale(),
            perturb_factor: default_factor(),
            target: Target::None,
            positions: Positions::Middle,
            seed,
        }
    }

    pub fn with_outliers(mut self, target: Target, positions: Positions) -> Self {
        self.target = target;
        self.positions = positions;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if self.n < 4 {
            return fail("n must be at least 4");
        }
        if let Positions::Consecutive(k) | Positions::RandomK { k, .. } = self.positions {
            if k == 0 || k >= self.n {
                return fail("outlier count k must satisfy 1 <= k < n");
            }
        }
        if self.perturb_factor == 0.0 || !self.perturb_factor.is_finite() {
            return fail("perturb_factor must be finite and non-zero");
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return fail("noise_sd must be finite and non-negative");
        }
        if !(self.x_scale > 0.0) || !self.x_scale.is_finite() {
            return fail("x_scale must be finite and positive");
        }
        if !self.beta0.is_finite() || !self.beta1.is_finite() {
            return fail("coefficients must be finite");
        }
        Ok(())
    }

    pub fn true_beta(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.beta0, self.beta1])
    }
}

/// Scenario file: one spec, optionally expanded over several targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    /// When present, overrides `target` and produces one dataset per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Target>>,
}

impl ScenarioConfig {
    pub fn specs(&self) -> Vec<ScenarioSpec> {
        match &self.targets {
            Some(ts) => ts
                .iter()
                .map(|&t| ScenarioSpec {
                    target: t,
                    ..self.spec.clone()
                })
                .collect(),
            None => vec![self.spec.clone()],
        }
    }
}

/// Parses a TOML scenario file.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig, SimError> {
    let parse_err = |e: toml::de::Error| SimError::Parse(e.to_string());
    let mut table: toml::Table = toml::from_str(text).map_err(parse_err)?;
    let targets = table
        .remove("targets")
        .map(|t| t.try_into::<Vec<Target>>())
        .transpose()
        .map_err(parse_err)?;
    let spec: ScenarioSpec = table.try_into().map_err(parse_err)?;
    let cfg = ScenarioConfig { spec, targets };
    for spec in cfg.specs() {
        spec.validate()?;
    }
    if cfg.targets.as_ref().is_some_and(|t| t.is_empty()) {
        return Err(SimError::InvalidSpec("targets must not be empty".into()));
    }
    Ok(cfg)
}

fn laplace<R: Rng>(rng: &mut R, location: f64, scale: f64) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u != -0.5 {
            return location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

/// Draws the clean dataset; returns it with the true coefficients.
///
/// All `x` values are drawn first, then all noise terms, from one
/// `ChaCha8Rng` seeded with `spec.seed`.
pub fn generate_clean(spec: &ScenarioSpec) -> Result<(Dataset, DVector<f64>), SimError> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let xs: Vec<f64> = (0..n).map(|_| laplace(&mut rng, 1.0, spec.x_scale)).collect();
    let noise = Normal::new(0.0, spec.noise_sd)
        .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| spec.beta0 + spec.beta1 * x + noise.sample(&mut rng))
        .collect();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let data = Dataset::new(
        x,
        DVector::from_vec(ys),
        vec!["intercept".into(), "x".into()],
        (1..=n).map(|i| i.to_string()).collect(),
    )?;
    Ok((data, spec.true_beta()))
}

/// Outlier positions, 1-based and sorted.
pub fn resolve_positions(n: usize, positions: Positions) -> Result<Vec<usize>, SimError> {
    let mid = n / 2;
    let out = match positions {
        Positions::Middle => vec![mid],
        Positions::Consecutive(k) => (mid..mid + k).collect(),
        Positions::RandomK { k, seed } => {
            if k > n {
                return Err(SimError::PositionsOutOfRange {
                    positions: vec![k],
                    n,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool: Vec<usize> = (1..=n).collect();
            // partial Fisher–Yates: the first k slots are a uniform k-subset
            for i in 0..k {
                let j = rng.random_range(i..n);
                pool.swap(i, j);
            }
            let mut chosen = pool[..k].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };
    if out.iter().any(|&i| i == 0 || i > n) {
        return Err(SimError::PositionsOutOfRange { positions: out, n });
    }
    Ok(out)
}

/// Multiplies the targeted variables at the scenario's positions by the
/// perturbation factor. The input is left untouched.
pub fn inject_outliers(data: &Dataset, spec: &ScenarioSpec) -> Result<Dataset, SimError> {
    if spec.target == Target::None {
        return Ok(data.clone());
    }
    let positions = resolve_positions(data.n(), spec.positions)?;
    let mut x = data.x().clone();
    let mut y = data.y().clone();
    let predictors: Vec<usize> = (0..data.p())
        .filter(|&j| !x.column(j).iter().all(|&v| v == 1.0))
        .collect();
    for &pos in &positions {
        let i = pos - 1;
        if spec.target.touches_x() {
            for &j in &predictors {
                x[(i, j)] *= spec.perturb_factor;
            }
        }
        if spec.target.touches_y() {
            y[i] *= spec.perturb_factor;
        }
    }
    Ok(Dataset::new(
        x,
        y,
        data.labels().to_vec(),
        data.row_ids().to_vec(),
    )?)
}

/// Clean draw followed by outlier injection.
pub fn simulate(spec: &ScenarioSpec) -> Result<Dataset, SimError> {
    let (clean, _) = generate_clean(spec)?;
    inject_outliers(&clean, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fit_ols;

    fn differing_rows(a: &Dataset, b: &Dataset) -> Vec<usize> {
        (0..a.n())
            .filter(|&i| a.row(i) != b.row(i) || a.y()[i] != b.y()[i])
            .map(|i| i + 1)
            .collect()
    }

    #[test]
    fn noiseless_clean_data_recover_coefficients() {
        let mut spec = ScenarioSpec::clean(50, 3);
        spec.noise_sd = 0.0;
        let (data, beta) = generate_clean(&spec).unwrap();
        let fit = fit_ols(&data).unwrap();
        assert!((fit.beta_hat - beta).amax() < 1e-10);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioSpec::clean(100, 77);
        let (a, _) = generate_clean(&spec).unwrap();
        let (b, _) = generate_clean(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_clean(&ScenarioSpec::clean(100, 78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_target_leaves_data_alone() {
        let spec = ScenarioSpec::clean(20, 1);
        let (data, _) = generate_clean(&spec).unwrap();
        assert_eq!(inject_outliers(&data, &spec).unwrap(), data);
    }

    #[test]
    fn middle_x_outlier_touches_row_fifty_only() {
        let spec = ScenarioSpec::clean(100, 5).with_outliers(Target::XOnly, Positions::Middle);
        let (data, _) = generate_clean(&spec).unwrap();
        let out = inject_outliers(&data, &spec).unwrap();
        assert_eq!(differing_rows(&data, &out), vec![50]);
        assert_eq!(out.x()[(49, 1)], 10.0 * data.x()[(49, 1)]);
        assert_eq!(out.x()[(49, 0)], 1.0);
        assert_eq!(out.y(), data.y());
    }

    #[test]
    fn both_target_scales_x_and_y() {
        let spec = ScenarioSpec::clean(11, 5).with_outliers(Target::Both, Positions::Middle);
        let (data, _) = generate_clean(&spec).unwrap();
        let out = inject_outliers(&data, &spec).unwrap();
        assert_eq!(out.x()[(4, 1)], 10.0 * data.x()[(4, 1)]);
        assert_eq!(out.y()[4], 10.0 * data.y()[4]);
    }

    #[test]
    fn consecutive_block_anchored_at_middle() {
        assert_eq!(
            resolve_positions(100, Positions::Consecutive(5)).unwrap(),
            vec![50, 51, 52, 53, 54]
        );
        assert!(matches!(
            resolve_positions(10, Positions::Consecutive(7)),
            Err(SimError::PositionsOutOfRange { .. })
        ));
    }

    #[test]
    fn random_positions_are_distinct_and_reproducible() {
        let spec = ScenarioSpec::clean(100, 9)
            .with_outliers(Target::YOnly, Positions::RandomK { k: 5, seed: 31 });
        let (data, _) = generate_clean(&spec).unwrap();
        let a = inject_outliers(&data, &spec).unwrap();
        let b = inject_outliers(&data, &spec).unwrap();
        let rows = differing_rows(&data, &a);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows, differing_rows(&data, &b));
        assert_eq!(rows, resolve_positions(100, spec.positions).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ScenarioSpec::clean(3, 0);
        assert!(spec.validate().is_err());
        spec.n = 10;
        spec.perturb_factor = 0.0;
        assert!(spec.validate().is_err());
        spec.perturb_factor = 10.0;
        spec.positions = Positions::Consecutive(10);
        assert!(spec.validate().is_err());
        spec.positions = Positions::RandomK { k: 0, seed: 1 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn positions_text_form() {
        for s in ["middle", "consecutive:5", "random:5:42"] {
            assert_eq!(s.parse::<Positions>().unwrap().to_string(), s);
        }
        for s in ["", "consecutive", "random:5", "middle:1", "random:a:1", "random:1:2:3"] {
            assert!(s.parse::<Positions>().is_err(), "{s}");
        }
    }

    #[test]
    fn scenario_file_round_trip() {
        let text = r#"
            n = 100
            seed = 12
            positions = "random:5:3"
            targets = ["none", "x", "y", "both"]
        "#;
        let cfg = parse_scenario_config(text).unwrap();
        assert_eq!(cfg.spec.noise_sd, 0.1);
        assert_eq!(cfg.spec.perturb_factor, 10.0);
        let specs = cfg.specs();
        assert_eq!(specs.len(), 4);
        assert_eq!(specs[2].target, Target::YOnly);
        let again = parse_scenario_config(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert!(parse_scenario_config("n = 100\nbogus = 1").is_err());
        assert!(parse_scenario_config("n = 2").is_err());
        assert!(parse_scenario_config("n = 10\ntargets = []").is_err());
    }
}
