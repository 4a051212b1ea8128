//! Total confounding and the coefficient solvers that hold it fixed.
//!
//! Total confounding is the bias of the naive outcome-on-treatment
//! regression, `Σ_p β_p [E(X_p | A=1) − E(X_p | A=0)]`. Under a logistic
//! treatment model with Gaussian covariates the conditional means reduce to
//! one-dimensional integrals over the linear score `S = αᵀX ~ N(0, αᵀΣα)`:
//! `E[X_p · g(S)] = c_p · E[S · g(S)]` with `c_p = Cov(X_p, S) / Var(S)`.

pub mod quadrature;
pub mod roots;

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{expit, fit_wls, DesignMatrix};
use crate::linalg::dot;
use crate::sampling::{sample_mvn_with, CovarianceSpec, SeedSpec};
use crate::simgen::{generate_with_seed, Design, ScenarioSpec};

use self::quadrature::GaussHermite;
use self::roots::{brent, RootOptions};

pub const QUADRATURE_ORDER: usize = 64;
pub const ALPHA_BRACKET: (f64, f64) = (1e-4, 10.0);
/// Treatment coefficient held fixed while solving for outcome coefficients.
pub const DEFAULT_ALPHA_FIXED: f64 = 0.575;

fn rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(QUADRATURE_ORDER))
}

/// Logistic treatment model over Gaussian true covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentModel {
    pub alpha0: f64,
    pub alphas: Vec<f64>,
    pub cov: CovarianceSpec,
}

impl TreatmentModel {
    pub fn new(alpha0: f64, alphas: Vec<f64>, cov: CovarianceSpec) -> Result<Self> {
        if alphas.len() != cov.dim() {
            return Err(Error::Dimension(format!(
                "{} treatment coefficients for {} covariates",
                alphas.len(),
                cov.dim()
            )));
        }
        Ok(Self { alpha0, alphas, cov })
    }

    /// Built from a scenario's true-covariate model only; error variances
    /// and error correlations never enter.
    pub fn from_scenario(spec: &ScenarioSpec) -> Result<Self> {
        Self::new(spec.alpha0, spec.alphas.clone(), spec.x_covariance()?)
    }

    /// `Σα` and `αᵀΣα`.
    fn score_moments(&self) -> (Vec<f64>, f64) {
        let m = self.cov.matrix();
        let cov_xs = m.mul_vec(&self.alphas);
        let var = dot(&self.alphas, &cov_xs);
        (cov_xs, var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SmdMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundingReport {
    pub smd_per_covariate: Vec<f64>,
    pub betas: Vec<f64>,
    pub total_confounding: f64,
    pub method: SmdMethod,
    pub mc_se: f64,
}

/// `E(X_p | A=1) − E(X_p | A=0)` for every covariate, by Gauss–Hermite
/// quadrature on the scalar score.
pub fn marginal_smd(model: &TreatmentModel) -> Result<Vec<f64>> {
    let dim = model.alphas.len();
    if model.alphas.iter().all(|&a| a == 0.0) {
        return Ok(vec![0.0; dim]);
    }
    let (cov_xs, var) = model.score_moments();
    if !(var >= 1e-12) {
        return Err(Error::DegenerateScore(var));
    }
    let gh = rule();
    let a0 = model.alpha0;
    let p1 = gh.normal_expectation(var, |s| expit(a0 + s));
    let k = gh.normal_expectation(var, |s| s * expit(a0 + s));
    // E[X|A=1] = c·k/p1 and E[X|A=0] = −c·k/(1−p1) since E[S] = 0.
    let scale = k * (1.0 / p1 + 1.0 / (1.0 - p1));
    Ok(cov_xs.iter().map(|c| c / var * scale).collect())
}

pub fn total_confounding(model: &TreatmentModel, betas: &[f64]) -> Result<ConfoundingReport> {
    if betas.len() != model.alphas.len() {
        return Err(Error::Dimension(format!(
            "{} outcome coefficients for {} covariates",
            betas.len(),
            model.alphas.len()
        )));
    }
    let smd = marginal_smd(model)?;
    Ok(ConfoundingReport {
        total_confounding: dot(betas, &smd),
        smd_per_covariate: smd,
        betas: betas.to_vec(),
        method: SmdMethod::Quadrature,
        mc_se: 0.0,
    })
}

/// Monte Carlo estimate of the group mean differences from `n` draws of
/// `(X, A)`, with per-covariate standard errors.
pub fn marginal_smd_monte_carlo(
    model: &TreatmentModel,
    n: usize,
    seed: SeedSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = model.alphas.len();
    let mut projections = Vec::with_capacity(dim);
    for p in 0..dim {
        let mut b = vec![0.0; dim];
        b[p] = 1.0;
        projections.push(b);
    }
    let stats = mc_group_differences(model, &projections, n, seed)?;
    Ok(stats.into_iter().unzip())
}

/// Monte Carlo total confounding, reported with its standard error.
pub fn total_confounding_monte_carlo(
    model: &TreatmentModel,
    betas: &[f64],
    n: usize,
    seed: SeedSpec,
) -> Result<ConfoundingReport> {
    if betas.len() != model.alphas.len() {
        return Err(Error::Dimension("betas length mismatch".into()));
    }
    let (smd, _) = marginal_smd_monte_carlo(model, n, seed)?;
    let (tc, se) = mc_group_differences(model, &[betas.to_vec()], n, seed)?[0];
    Ok(ConfoundingReport {
        smd_per_covariate: smd,
        betas: betas.to_vec(),
        total_confounding: tc,
        method: SmdMethod::MonteCarlo,
        mc_se: se,
    })
}

/// For each projection `b`, the difference in means of `bᵀX` between
/// treated and control draws and its standard error.
fn mc_group_differences(
    model: &TreatmentModel,
    projections: &[Vec<f64>],
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<(f64, f64)>> {
    let mut rng_x = seed.rng(101);
    let mut rng_a = seed.rng(102);
    let k = projections.len();
    // Running sums per group: count, Σz, Σz².
    let mut acc = vec![[[0.0f64; 3]; 2]; k];
    const CHUNK: usize = 65_536;
    let mut left = n;
    while left > 0 {
        let m = left.min(CHUNK);
        let x = sample_mvn_with(&mut rng_x, &model.cov, m)?;
        for i in 0..m {
            let row = x.row(i);
            let g = usize::from(rng_a.random::<f64>() < expit(model.alpha0 + dot(row, &model.alphas)));
            for (j, b) in projections.iter().enumerate() {
                let z = dot(row, b);
                let s = &mut acc[j][g];
                s[0] += 1.0;
                s[1] += z;
                s[2] += z * z;
            }
        }
        left -= m;
    }
    acc.iter()
        .map(|groups| {
            let [c, t] = groups;
            if t[0] < 2.0 || c[0] < 2.0 {
                return Err(Error::EmptyGroup("monte carlo treatment arm"));
            }
            let mean = |s: &[f64; 3]| s[1] / s[0];
            let var = |s: &[f64; 3]| (s[2] - s[1] * s[1] / s[0]) / (s[0] - 1.0);
            Ok((mean(t) - mean(c), (var(t) / t[0] + var(c) / c[0]).sqrt()))
        })
        .collect()
}

/// Which treatment coefficients move together when solving for `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaStructure {
    /// Two covariates, `α₁ = α₂ = a`, correlation on (X1, X2).
    Sim1,
    /// Three covariates, `α₁ = α₃ = a`, `α₂ = 0`, correlation on (X1, X3).
    Sim2Rho13,
}

impl AlphaStructure {
    pub fn alphas(self, a: f64) -> Vec<f64> {
        match self {
            AlphaStructure::Sim1 => vec![a, a],
            AlphaStructure::Sim2Rho13 => vec![a, 0.0, a],
        }
    }

    pub fn model(self, a: f64, rho: f64) -> Result<TreatmentModel> {
        let cov = match self {
            AlphaStructure::Sim1 => CovarianceSpec::correlation(2, &[(0, 1, rho)])?,
            AlphaStructure::Sim2Rho13 => CovarianceSpec::correlation(3, &[(0, 2, rho)])?,
        };
        TreatmentModel::new(0.0, self.alphas(a), cov)
    }
}

/// Common treatment coefficient `a` giving total confounding `target_tc`.
pub fn solve_alpha(
    target_tc: f64,
    rho_x: f64,
    betas: &[f64],
    structure: AlphaStructure,
) -> Result<f64> {
    if !(target_tc > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target total confounding must be positive, got {target_tc}"
        )));
    }
    let tc = |a: f64| -> Result<f64> {
        Ok(total_confounding(&structure.model(a, rho_x)?, betas)?.total_confounding)
    };
    let (lo, hi) = ALPHA_BRACKET;
    let (f_lo, f_hi) = (tc(lo)? - target_tc, tc(hi)? - target_tc);
    if f_hi < 0.0 || f_lo > 0.0 {
        return Err(Error::NoBracket { lo, hi, f_lo, f_hi });
    }
    let mut failure = None;
    let root = brent(
        |a| match tc(a) {
            Ok(v) => v - target_tc,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        RootOptions::default(),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

/// Scale `b` such that outcome coefficients `b · pattern` give total
/// confounding `target_tc` under `model` (total confounding is linear in β).
pub fn solve_beta_scale(model: &TreatmentModel, pattern: &[f64], target_tc: f64) -> Result<f64> {
    let unit = total_confounding(model, pattern)?.total_confounding;
    if unit.abs() < 1e-10 {
        return Err(Error::ZeroSmd(unit));
    }
    Ok(target_tc / unit)
}

/// Simulation-2 first block: `α = (a, 0, a)` fixed, `β₁ = β₂ = b`, `β₃ = 0`,
/// correlation on (X1, X2).
pub fn solve_beta(target_tc: f64, rho_12: f64, alpha_fixed: f64) -> Result<f64> {
    let model = sim2_rho12_model(alpha_fixed, rho_12)?;
    let smd = marginal_smd(&model)?;
    if smd[0] < 1e-10 {
        return Err(Error::ZeroSmd(smd[0]));
    }
    solve_beta_scale(&model, &[1.0, 1.0, 0.0], target_tc)
}

fn sim2_rho12_model(alpha_fixed: f64, rho_12: f64) -> Result<TreatmentModel> {
    TreatmentModel::new(
        0.0,
        vec![alpha_fixed, 0.0, alpha_fixed],
        CovarianceSpec::correlation(3, &[(0, 1, rho_12)])?,
    )
}

/// Where scenario coefficients come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    /// Solve for unit-scale total confounding with the quadrature functional.
    #[default]
    Solve,
    /// Published parameter tables (only for ρ ∈ {0, 0.3, 0.6, 0.9}).
    PaperTable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub target_tc: f64,
    pub tau: f64,
    pub alpha_fixed: f64,
    pub source: CoefficientSource,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            target_tc: 1.0,
            tau: 2.0,
            alpha_fixed: DEFAULT_ALPHA_FIXED,
            source: CoefficientSource::Solve,
        }
    }
}

/// The coefficient the calibration solves for at correlation `rho`: the
/// common `α` for `sim1`/`sim2_rho13`, the common `β` otherwise.
pub fn solve_design_coefficient(design: Design, rho: f64, opts: &CalibrationOptions) -> Result<f64> {
    match design {
        Design::Sim1 => solve_alpha(opts.target_tc, rho, &[1.0, 1.0], AlphaStructure::Sim1),
        Design::Sim2Rho13 => solve_alpha(
            opts.target_tc,
            rho,
            &[2.0, 2.0, 0.0],
            AlphaStructure::Sim2Rho13,
        ),
        Design::Sim2Rho12 => solve_beta(opts.target_tc, rho, opts.alpha_fixed),
        Design::SignflipA1 => {
            let model = AlphaStructure::Sim1.model(opts.alpha_fixed, rho)?;
            solve_beta_scale(&model, &[1.0, 1.0], opts.target_tc)
        }
    }
}

fn paper_table_coefficient(design: Design, rho: f64) -> Result<f64> {
    const GRID: [f64; 4] = [0.0, 0.3, 0.6, 0.9];
    let values: [f64; 4] = match design {
        Design::Sim1 => [0.569, 0.423, 0.336, 0.279],
        Design::Sim2Rho12 => [2.0, 1.538, 1.248, 1.05],
        Design::Sim2Rho13 => [0.575, 0.427, 0.34, 0.283],
        Design::SignflipA1 => {
            return Err(Error::InvalidInput(
                "no published coefficients for the sign-flip design".into(),
            ))
        }
    };
    GRID.iter()
        .position(|g| (g - rho).abs() < 1e-12)
        .map(|i| values[i])
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "published coefficients exist only for rho in {{0, 0.3, 0.6, 0.9}}, got {rho}"
            ))
        })
}

/// Scenario for `design` with coefficients set so total confounding equals
/// `opts.target_tc` (or taken from the published tables).
pub fn calibrated_scenario(
    design: Design,
    rho_x: f64,
    rho_w: f64,
    sigma2_w: f64,
    opts: &CalibrationOptions,
) -> Result<ScenarioSpec> {
    let coef = match opts.source {
        CoefficientSource::Solve => solve_design_coefficient(design, rho_x, opts)?,
        CoefficientSource::PaperTable => paper_table_coefficient(design, rho_x)?,
    };
    let mut spec = ScenarioSpec::new(design, rho_x, rho_w, sigma2_w);
    spec.tau = opts.tau;
    let alpha_fixed = match opts.source {
        CoefficientSource::PaperTable => DEFAULT_ALPHA_FIXED,
        CoefficientSource::Solve => opts.alpha_fixed,
    };
    match design {
        Design::Sim1 => {
            spec.alphas = vec![coef, coef];
            spec.betas = vec![1.0, 1.0];
        }
        Design::Sim2Rho13 => {
            spec.alphas = vec![coef, 0.0, coef];
            spec.betas = vec![2.0, 2.0, 0.0];
        }
        Design::Sim2Rho12 => {
            spec.alphas = vec![alpha_fixed, 0.0, alpha_fixed];
            spec.betas = vec![coef, coef, 0.0];
        }
        Design::SignflipA1 => {
            spec.alphas = vec![alpha_fixed, alpha_fixed];
            spec.betas = vec![coef, coef];
        }
    }
    Ok(spec)
}

/// The reflected twin of a two-covariate scenario: `X₂ → −X₂` maps
/// `(ρˣ, ρʷ, α₂, β₂)` to `(−ρˣ, −ρʷ, −α₂, −β₂)` and leaves the joint law of
/// everything the estimators see unchanged up to that sign.
pub fn reflect_second_covariate(spec: &ScenarioSpec) -> Result<ScenarioSpec> {
    if spec.dim() != 2 {
        return Err(Error::InvalidInput(
            "reflection is defined for two-covariate designs".into(),
        ));
    }
    let mut out = spec.clone();
    out.design = Design::Sim1;
    out.rho_x = -spec.rho_x;
    out.rho_w = -spec.rho_w;
    out.alphas[1] = -spec.alphas[1];
    out.betas[1] = -spec.betas[1];
    out.id = format!("{}_reflected", spec.id);
    Ok(out)
}

/// Bias of the naive regression of `Y` on `[1, A]` in one size-`n` draw.
pub fn naive_bias_oracle(scenario: &ScenarioSpec, n: usize, seed: SeedSpec) -> Result<f64> {
    let data = generate_with_seed(scenario, seed, n)?;
    let treat: Vec<f64> = data.a.iter().map(|&v| f64::from(u8::from(v))).collect();
    let design = DesignMatrix::with_intercept(&[&treat])?;
    let fit = fit_wls(&design, &data.y, &vec![1.0; n])?;
    Ok(fit.coefficients[1] - scenario.tau)
}
