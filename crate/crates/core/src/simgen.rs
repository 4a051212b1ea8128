//! Scenario definitions and data generation with correlated classical
//! measurement error.
//!
//! Each replicate draws from four disjoint sub-streams of the scenario seed
//! (true covariates, treatment, outcome noise, measurement error), so two
//! scenarios that differ only in their error model share the same `X`, `A`
//! and `Y` draws.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::glm::{expit, DesignMatrix};
use crate::linalg::{dot, Matrix};
use crate::sampling::{sample_mvn_with, standard_normal, CovarianceSpec, SeedSpec};

const STREAM_X: u64 = 1;
const STREAM_A: u64 = 2;
const STREAM_Y: u64 = 3;
const STREAM_E: u64 = 4;

/// `Var(X)/Var(W) = 1/(1 + σ²)` for a unit-variance covariate.
pub fn reliability(sigma2: f64) -> f64 {
    1.0 / (1.0 + sigma2)
}

/// Error variance giving the requested reliability.
pub fn sigma2_for_reliability(rel: f64) -> f64 {
    1.0 / rel - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Two correlated confounders.
    Sim1,
    /// Confounder X1, outcome-only X2, treatment-only X3; X1–X2 correlated.
    Sim2Rho12,
    /// Same covariate roles; X1–X3 correlated.
    Sim2Rho13,
    /// Two confounders with negative correlation and equal-sign treatment
    /// coefficients.
    SignflipA1,
}

impl Design {
    pub const ALL: [Design; 4] = [
        Design::Sim1,
        Design::Sim2Rho12,
        Design::Sim2Rho13,
        Design::SignflipA1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Design::Sim1 => "sim1",
            Design::Sim2Rho12 => "sim2_rho12",
            Design::Sim2Rho13 => "sim2_rho13",
            Design::SignflipA1 => "signflip_a1",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Design::Sim1 | Design::SignflipA1 => 2,
            Design::Sim2Rho12 | Design::Sim2Rho13 => 3,
        }
    }

    /// Covariate pair (0-based) carrying both `ρˣ` and `ρʷ`.
    pub fn correlated_pair(self) -> (usize, usize) {
        match self {
            Design::Sim1 | Design::SignflipA1 | Design::Sim2Rho12 => (0, 1),
            Design::Sim2Rho13 => (0, 2),
        }
    }

    pub fn is_sim2(self) -> bool {
        matches!(self, Design::Sim2Rho12 | Design::Sim2Rho13)
    }

    /// Covariate sets compared for this design.
    pub fn default_covariate_sets(self) -> Vec<CovariateSet> {
        let tags: &[&str] = if self.is_sim2() {
            &[
                "X1,X2",
                "X1,X2,X3",
                "X1,W2,X3",
                "X1,X2,W3",
                "X1,W2,W3",
                "W1,X2,X3",
                "W1,X2,W3",
                "W1,W2,X3",
                "W1,W2,W3",
                "W1,W2",
            ]
        } else {
            &["X1,X2", "W1,W2"]
        };
        tags.iter().map(|t| t.parse().expect("static tag")).collect()
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown design `{s}`")))
    }
}

/// One regressor column: a true (`X`) or observed (`W`) covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CovariateRef {
    pub index: usize,
    pub observed: bool,
}

/// Ordered set of covariates used in the propensity and DR outcome models.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CovariateSet(Vec<CovariateRef>);

impl CovariateSet {
    pub fn new(columns: Vec<CovariateRef>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidInput("covariate set is empty".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.index == c.index) {
                return Err(Error::InvalidInput(format!(
                    "covariate {} appears twice",
                    c.index + 1
                )));
            }
        }
        Ok(Self(columns))
    }

    pub fn columns(&self) -> &[CovariateRef] {
        &self.0
    }

    pub fn tag(&self) -> String {
        self.to_string()
    }

    pub fn validate_for(&self, design: Design) -> Result<()> {
        if self.0.iter().any(|c| c.index >= design.dim()) {
            return Err(Error::InvalidSet {
                set: self.tag(),
                design: design.to_string(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, index: usize, observed: bool) -> bool {
        self.0.contains(&CovariateRef { index, observed })
    }
}

impl fmt::Display for CovariateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}{}", if c.observed { 'W' } else { 'X' }, c.index + 1)?;
        }
        Ok(())
    }
}

impl FromStr for CovariateSet {
    type Err = Error;
    /// Accepts `W1,X2`, `{W1, X2}` or `(W1,X2)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .trim_start_matches(['{', '('])
            .trim_end_matches(['}', ')']);
        let bad = || Error::InvalidInput(format!("cannot parse covariate set `{s}`"));
        let columns = inner
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                let mut chars = tok.chars();
                let observed = match chars.next().map(|c| c.to_ascii_uppercase()) {
                    Some('X') => false,
                    Some('W') => true,
                    _ => return Err(bad()),
                };
                let idx: usize = chars.as_str().parse().map_err(|_| bad())?;
                if idx == 0 {
                    return Err(bad());
                }
                Ok(CovariateRef {
                    index: idx - 1,
                    observed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CovariateSet::new(columns)
    }
}

impl Serialize for CovariateSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for CovariateSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Full description of one simulation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub design: Design,
    pub rho_x: f64,
    pub rho_w: f64,
    pub sigma2_w: Vec<f64>,
    pub alpha0: f64,
    pub alphas: Vec<f64>,
    pub beta0: f64,
    pub tau: f64,
    pub betas: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub covariate_sets: Vec<CovariateSet>,
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
}

impl ScenarioSpec {
    /// Scenario with the design's default covariate sets and the two
    /// regression estimators; coefficients must be filled in by the caller
    /// (see `calibration::calibrated_scenario`).
    pub fn new(design: Design, rho_x: f64, rho_w: f64, sigma2_w: f64) -> Self {
        let dim = design.dim();
        Self {
            id: String::new(),
            design,
            rho_x,
            rho_w,
            sigma2_w: vec![sigma2_w; dim],
            alpha0: 0.0,
            alphas: vec![0.0; dim],
            beta0: 0.0,
            tau: 2.0,
            betas: vec![0.0; dim],
            n: 1000,
            replicates: 200,
            covariate_sets: design.default_covariate_sets(),
            estimators: vec![EstimatorKind::IptwWreg, EstimatorKind::DrWreg],
            master_seed: 0,
        }
        .with_default_id()
    }

    pub fn with_default_id(mut self) -> Self {
        self.id = format!(
            "{}_rx{}_rw{}_rel{}",
            self.design,
            self.rho_x,
            self.rho_w,
            (self.reliability(0) * 1000.0).round() / 1000.0
        );
        self
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    pub fn reliability(&self, p: usize) -> f64 {
        reliability(self.sigma2_w[p])
    }

    /// Covariance of the true covariates.
    pub fn x_covariance(&self) -> Result<CovarianceSpec> {
        let (i, j) = self.design.correlated_pair();
        CovarianceSpec::correlation(self.dim(), &[(i, j, self.rho_x)])
    }

    /// Covariance of the measurement errors.
    pub fn e_covariance(&self) -> Matrix {
        let dim = self.dim();
        let (i, j) = self.design.correlated_pair();
        let sd: Vec<f64> = self.sigma2_w.iter().map(|v| v.sqrt()).collect();
        let mut m = Matrix::zeros(dim, dim);
        for p in 0..dim {
            m[(p, p)] = self.sigma2_w[p];
        }
        m[(i, j)] = sd[i] * sd[j] * self.rho_w;
        m[(j, i)] = m[(i, j)];
        m
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let bad = |msg: String| Err(Error::InvalidInput(format!("scenario `{}`: {msg}", self.id)));
        if !(self.rho_x > -1.0 && self.rho_x < 1.0) {
            return bad(format!("rho_x must lie in (-1, 1), got {}", self.rho_x));
        }
        if !(self.rho_w >= -1.0 && self.rho_w < 1.0) {
            return bad(format!("rho_w must lie in [-1, 1), got {}", self.rho_w));
        }
        if self.sigma2_w.len() != dim
            || self.sigma2_w.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad(format!("sigma2_w must hold {dim} non-negative values"));
        }
        if self.alphas.len() != dim || self.betas.len() != dim {
            return bad(format!("alphas and betas must have length {dim}"));
        }
        let coefs = [self.alpha0, self.beta0, self.tau];
        if coefs
            .iter()
            .chain(&self.alphas)
            .chain(&self.betas)
            .any(|v| !v.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        if self.design.is_sim2() && (self.alphas[1] != 0.0 || self.betas[2] != 0.0) {
            return bad("simulation-2 designs require alpha_2 = 0 and beta_3 = 0".into());
        }
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.covariate_sets.is_empty() || self.estimators.is_empty() {
            return bad("need at least one covariate set and one estimator".into());
        }
        for set in &self.covariate_sets {
            set.validate_for(self.design)?;
        }
        Ok(())
    }
}

/// One dataset: true and observed covariates, treatment, outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleData {
    pub x_true: Matrix,
    pub x_obs: Matrix,
    pub a: Vec<bool>,
    pub y: Vec<f64>,
}

impl SampleData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn treated_fraction(&self) -> f64 {
        self.a.iter().filter(|&&v| v).count() as f64 / self.n() as f64
    }
}

/// Draws replicate `replicate` of `spec`.
pub fn generate(spec: &ScenarioSpec, replicate: u64) -> Result<SampleData> {
    generate_with_seed(spec, SeedSpec::new(spec.master_seed, replicate), spec.n)
}

/// As [`generate`] with an explicit seed and sample size.
pub fn generate_with_seed(spec: &ScenarioSpec, seed: SeedSpec, n: usize) -> Result<SampleData> {
    spec.validate()?;
    let dim = spec.dim();

    let mut rng_x = seed.rng(STREAM_X);
    let x_true = sample_mvn_with(&mut rng_x, &spec.x_covariance()?, n)?;

    let mut rng_a = seed.rng(STREAM_A);
    let a: Vec<bool> = (0..n)
        .map(|i| {
            let p = expit(spec.alpha0 + dot(x_true.row(i), &spec.alphas));
            rng_a.random::<f64>() < p
        })
        .collect();

    let mut rng_y = seed.rng(STREAM_Y);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mean = spec.beta0
                + spec.tau * f64::from(u8::from(a[i]))
                + dot(x_true.row(i), &spec.betas);
            mean + standard_normal(&mut rng_y)
        })
        .collect();

    // e = D·Lρ·z with Lρ the closed-form Cholesky factor of the pair
    // correlation; valid for any σ² ≥ 0 and ρʷ ∈ [−1, 1).
    let mut rng_e = seed.rng(STREAM_E);
    let (pi, pj) = spec.design.correlated_pair();
    let sd: Vec<f64> = spec.sigma2_w.iter().map(|v| v.sqrt()).collect();
    let rho = spec.rho_w;
    let tail = (1.0 - rho * rho).max(0.0).sqrt();
    let mut x_obs = Matrix::zeros(n, dim);
    let mut z = vec![0.0; dim];
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = standard_normal(&mut rng_e));
        for p in 0..dim {
            let e = if p == pj {
                sd[p] * (rho * z[pi] + tail * z[pj])
            } else {
                sd[p] * z[p]
            };
            x_obs[(i, p)] = x_true[(i, p)] + e;
        }
    }

    let data = SampleData { x_true, x_obs, a, y };
    let treated = data.treated_fraction();
    if treated == 0.0 {
        return Err(Error::EmptyGroup("treated"));
    }
    if treated == 1.0 {
        return Err(Error::EmptyGroup("control"));
    }
    Ok(data)
}

/// Intercept plus the set's columns, taken from the true or observed matrix.
pub fn covariate_view(data: &SampleData, set: &CovariateSet) -> Result<DesignMatrix> {
    let dim = data.x_true.cols();
    if let Some(c) = set.columns().iter().find(|c| c.index >= dim) {
        return Err(Error::InvalidSet {
            set: set.tag(),
            design: format!("{dim}-covariate data (no covariate {})", c.index + 1),
        });
    }
    let cols: Vec<Vec<f64>> = set
        .columns()
        .iter()
        .map(|c| {
            if c.observed {
                data.x_obs.column(c.index)
            } else {
                data.x_true.column(c.index)
            }
        })
        .collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    DesignMatrix::with_intercept(&refs)
}
