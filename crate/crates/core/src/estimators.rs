//! Inverse-probability weights, the four treatment-effect estimators, and
//! the weighted standardized mean difference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{fit_wls, DesignMatrix, GlmFit};

/// Propensities outside `[PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR]` are a
/// positivity failure.
pub const PROPENSITY_FLOOR: f64 = 1e-6;
/// Normal quantile used for all Wald intervals.
pub const Z_95: f64 = 1.96;

/// Estimated propensities and the matching inverse-probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PsWeights {
    propensity: Vec<f64>,
    weights: Vec<f64>,
}

impl PsWeights {
    /// `wᵢ = aᵢ/eᵢ + (1 − aᵢ)/(1 − eᵢ)`.
    pub fn from_propensity(propensity: Vec<f64>, a: &[bool]) -> Result<Self> {
        if propensity.len() != a.len() {
            return Err(Error::Dimension(format!(
                "{} propensities for {} units",
                propensity.len(),
                a.len()
            )));
        }
        check_positivity(&propensity)?;
        let weights = propensity
            .iter()
            .zip(a)
            .map(|(&e, &ai)| if ai { 1.0 / e } else { 1.0 / (1.0 - e) })
            .collect();
        Ok(Self {
            propensity,
            weights,
        })
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_positivity(e: &[f64]) -> Result<()> {
    match e
        .iter()
        .position(|&v| !(PROPENSITY_FLOOR..=1.0 - PROPENSITY_FLOOR).contains(&v))
    {
        Some(index) => Err(Error::ExtremePropensity {
            index,
            value: e[index],
        }),
        None => Ok(()),
    }
}

/// Weights from a fitted propensity model.
pub fn compute_weights(fit: &GlmFit, a: &[bool]) -> Result<PsWeights> {
    PsWeights::from_propensity(fit.fitted.clone(), a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Normalized (Hájek) weighted contrast of group means.
    #[serde(rename = "IPTW_HAJEK")]
    IptwHajek,
    /// Weighted regression of the outcome on treatment alone.
    #[serde(rename = "IPTW_WREG")]
    IptwWreg,
    /// Augmented IPW with outcome-model predictions.
    #[serde(rename = "DR_AIPW")]
    DrAipw,
    /// Weighted regression of the outcome on treatment and covariates.
    #[serde(rename = "DR_WREG")]
    DrWreg,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::IptwHajek,
        EstimatorKind::IptwWreg,
        EstimatorKind::DrAipw,
        EstimatorKind::DrWreg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::IptwHajek => "IPTW_HAJEK",
            EstimatorKind::IptwWreg => "IPTW_WREG",
            EstimatorKind::DrAipw => "DR_AIPW",
            EstimatorKind::DrWreg => "DR_WREG",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator `{s}`")))
    }
}

/// Point estimate with its Wald 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AteEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub estimator: EstimatorKind,
    pub covariate_set: String,
}

impl AteEstimate {
    pub fn new(estimate: f64, se: f64, estimator: EstimatorKind) -> Self {
        Self {
            estimate,
            se,
            ci_low: estimate - Z_95 * se,
            ci_high: estimate + Z_95 * se,
            estimator,
            covariate_set: String::new(),
        }
    }

    pub fn labeled(mut self, covariate_set: impl Into<String>) -> Self {
        self.covariate_set = covariate_set.into();
        self
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// Two-sided normal p-value for `estimate / se`.
    pub fn p_value(&self) -> f64 {
        two_sided_normal_p(self.estimate / self.se)
    }
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn check_lengths(n: usize, named: &[(&str, usize)]) -> Result<()> {
    for (name, len) in named {
        if *len != n {
            return Err(Error::Dimension(format!("{name} has length {len}, expected {n}")));
        }
    }
    Ok(())
}

fn treatment_column(a: &[bool]) -> Vec<f64> {
    a.iter().map(|&v| f64::from(u8::from(v))).collect()
}

/// `Σwᵢaᵢyᵢ/Σwᵢaᵢ − Σwᵢ(1−aᵢ)yᵢ/Σwᵢ(1−aᵢ)`.
pub fn ate_iptw_hajek(w: &PsWeights, a: &[bool], y: &[f64]) -> Result<f64> {
    check_lengths(w.len(), &[("treatment", a.len()), ("outcome", y.len())])?;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for ((&wi, &ai), &yi) in w.weights().iter().zip(a).zip(y) {
        if ai {
            s1 += wi * yi;
            n1 += wi;
        } else {
            s0 += wi * yi;
            n0 += wi;
        }
    }
    if !(n1 > 0.0) {
        return Err(Error::EmptyGroup("treated"));
    }
    if !(n0 > 0.0) {
        return Err(Error::EmptyGroup("control"));
    }
    Ok(s1 / n1 - s0 / n0)
}

/// Hájek point estimate paired with the sandwich SE of the equivalent
/// weighted regression.
pub fn ate_iptw_hajek_estimate(w: &PsWeights, a: &[bool], y: &[f64]) -> Result<AteEstimate> {
    let estimate = ate_iptw_hajek(w, a, y)?;
    let reg = ate_iptw_wreg(a, y, w)?;
    Ok(AteEstimate::new(estimate, reg.se, EstimatorKind::IptwHajek))
}

fn check_both_arms(a: &[bool]) -> Result<()> {
    if !a.iter().any(|&v| v) {
        return Err(Error::EmptyGroup("treated"));
    }
    if a.iter().all(|&v| v) {
        return Err(Error::EmptyGroup("control"));
    }
    Ok(())
}

/// Weighted regression of `y` on `[1, a]`; the treatment coefficient is the
/// estimate.
pub fn ate_iptw_wreg(a: &[bool], y: &[f64], w: &PsWeights) -> Result<AteEstimate> {
    check_lengths(w.len(), &[("treatment", a.len()), ("outcome", y.len())])?;
    check_both_arms(a)?;
    let treat = treatment_column(a);
    let design = DesignMatrix::with_intercept(&[&treat])?;
    let fit = fit_wls(&design, y, w.weights())?;
    Ok(AteEstimate::new(
        fit.coefficients[1],
        fit.se(1),
        EstimatorKind::IptwWreg,
    ))
}

/// Weighted regression of `y` on `[1, a, covariates]`.
pub fn ate_dr_wreg(
    a: &[bool],
    y: &[f64],
    w: &PsWeights,
    outcome_covariates: &DesignMatrix,
) -> Result<AteEstimate> {
    Ok(dr_wreg_fit(a, y, w, outcome_covariates)?.0)
}

/// DR regression estimate together with the fitted outcome model, whose
/// design is `[1, a, covariates]`.
pub fn dr_wreg_fit(
    a: &[bool],
    y: &[f64],
    w: &PsWeights,
    outcome_covariates: &DesignMatrix,
) -> Result<(AteEstimate, GlmFit)> {
    check_lengths(
        w.len(),
        &[
            ("treatment", a.len()),
            ("outcome", y.len()),
            ("covariates", outcome_covariates.n()),
        ],
    )?;
    check_both_arms(a)?;
    let design = outcome_covariates.insert_column(1, &treatment_column(a))?;
    let fit = fit_wls(&design, y, w.weights())?;
    let est = AteEstimate::new(fit.coefficients[1], fit.se(1), EstimatorKind::DrWreg);
    Ok((est, fit))
}

/// Per-unit predictions `m1 = E[Y | A=1, X]`, `m0 = E[Y | A=0, X]` from an
/// outcome fit whose design is `[1, a, covariates]`.
pub fn outcome_predictions(fit: &GlmFit, outcome_covariates: &DesignMatrix) -> (Vec<f64>, Vec<f64>) {
    let c = &fit.coefficients;
    let n = outcome_covariates.n();
    let mut m1 = Vec::with_capacity(n);
    let mut m0 = Vec::with_capacity(n);
    for i in 0..n {
        let row = outcome_covariates.row(i);
        let base = c[0] + row[1..].iter().zip(&c[2..]).map(|(x, b)| x * b).sum::<f64>();
        m0.push(base);
        m1.push(base + c[1]);
    }
    (m1, m0)
}

fn aipw_terms(
    a: &[bool],
    y: &[f64],
    e: &[f64],
    m1: &[f64],
    m0: &[f64],
) -> Result<Vec<f64>> {
    check_lengths(
        e.len(),
        &[("treatment", a.len()), ("outcome", y.len()), ("m1", m1.len()), ("m0", m0.len())],
    )?;
    check_positivity(e)?;
    Ok((0..e.len())
        .map(|i| {
            let ai = f64::from(u8::from(a[i]));
            let ei = e[i];
            let treated = ai * y[i] / ei - (ai - ei) * m1[i] / ei;
            let control = (1.0 - ai) * y[i] / (1.0 - ei) + (ai - ei) * m0[i] / (1.0 - ei);
            treated - control
        })
        .collect())
}

/// Augmented IPW:
/// `n⁻¹Σ[aᵢyᵢ/eᵢ − (aᵢ−eᵢ)m1ᵢ/eᵢ] − n⁻¹Σ[(1−aᵢ)yᵢ/(1−eᵢ) + (aᵢ−eᵢ)m0ᵢ/(1−eᵢ)]`.
pub fn ate_dr_aipw(a: &[bool], y: &[f64], w: &PsWeights, m1: &[f64], m0: &[f64]) -> Result<f64> {
    let terms = aipw_terms(a, y, w.propensity(), m1, m0)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// AIPW point estimate with the empirical influence-function SE.
pub fn ate_dr_aipw_estimate(
    a: &[bool],
    y: &[f64],
    w: &PsWeights,
    m1: &[f64],
    m0: &[f64],
) -> Result<AteEstimate> {
    let terms = aipw_terms(a, y, w.propensity(), m1, m0)?;
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    Ok(AteEstimate::new(mean, (var / n).sqrt(), EstimatorKind::DrAipw))
}

/// Unweighted sample standard deviation (n − 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Weighted between-group mean difference over the full-sample unweighted
/// standard deviation of `x`.
pub fn weighted_smd(x: &[f64], a: &[bool], w: &[f64]) -> Result<f64> {
    check_lengths(x.len(), &[("treatment", a.len()), ("weights", w.len())])?;
    check_both_arms(a)?;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for ((&xi, &ai), &wi) in x.iter().zip(a).zip(w) {
        if ai {
            s1 += wi * xi;
            n1 += wi;
        } else {
            s0 += wi * xi;
            n0 += wi;
        }
    }
    let sd = sample_sd(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance("covariate is constant".into()));
    }
    Ok((s1 / n1 - s0 / n0) / sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{standard_normal, SeedSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn bools(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn weight_arithmetic() {
        let w = PsWeights::from_propensity(vec![0.5, 0.5], &[true, true]).unwrap();
        assert_eq!(w.weights(), &[2.0, 2.0]);
        let w = PsWeights::from_propensity(vec![0.8], &[false]).unwrap();
        assert!((w.weights()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn extreme_propensity_rejected() {
        let r = PsWeights::from_propensity(vec![0.5, 1.0 - 1e-9], &[true, false]);
        assert!(matches!(r, Err(Error::ExtremePropensity { index: 1, .. })));
        let r = PsWeights::from_propensity(vec![1e-7], &[true]);
        assert!(matches!(r, Err(Error::ExtremePropensity { index: 0, .. })));
    }

    #[test]
    fn hajek_four_point_fixture() {
        let y = [1.0, 3.0, 2.0, 6.0];
        let a = bools(&[1, 1, 0, 0]);
        let w = PsWeights::from_propensity(vec![0.8, 0.4, 0.5, 0.2], &a).unwrap();
        let treated = (1.0 / 0.8 + 3.0 / 0.4) / (1.0 / 0.8 + 1.0 / 0.4);
        let control = (2.0 / 0.5 + 6.0 / 0.8) / (1.0 / 0.5 + 1.0 / 0.8);
        let expected = treated - control;
        assert!((expected - (-1.2051_f64)).abs() < 1e-4);
        let est = ate_iptw_hajek(&w, &a, &y).unwrap();
        assert!((est - expected).abs() < 1e-12);
        let reg = ate_iptw_wreg(&a, &y, &w).unwrap();
        assert!((reg.estimate - expected).abs() < 1e-10);
    }

    #[test]
    fn hajek_equal_weights_is_mean_difference() {
        let y = [1.0, 2.0, 3.0, 10.0, 20.0];
        let a = bools(&[1, 1, 1, 0, 0]);
        let w = PsWeights::from_propensity(vec![0.5; 5], &a).unwrap();
        let est = ate_iptw_hajek(&w, &a, &y).unwrap();
        assert!((est - (2.0 - 15.0)).abs() < 1e-12);
    }

    #[test]
    fn hajek_empty_group() {
        let a = bools(&[1, 1]);
        let w = PsWeights::from_propensity(vec![0.5; 2], &a).unwrap();
        assert!(matches!(ate_iptw_hajek(&w, &a, &[1.0, 2.0]), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn wreg_constant_weights_y_equals_a() {
        let a = bools(&[1, 0, 1, 0, 1]);
        let y: Vec<f64> = a.iter().map(|&v| f64::from(u8::from(v))).collect();
        let w = PsWeights::from_propensity(vec![0.5; 5], &a).unwrap();
        let est = ate_iptw_wreg(&a, &y, &w).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-12);
        assert!(est.se < 1e-12);
        assert_eq!(est.estimator, EstimatorKind::IptwWreg);
        assert!((est.ci_low - (est.estimate - 1.96 * est.se)).abs() < 1e-15);
    }

    #[test]
    fn aipw_zero_augmentation_is_horvitz_thompson() {
        let a = bools(&[1, 0, 1, 0, 0, 1]);
        let y = [2.0, 1.0, 3.5, -0.5, 0.7, 1.2];
        let e = vec![0.3, 0.6, 0.5, 0.2, 0.45, 0.7];
        let w = PsWeights::from_propensity(e.clone(), &a).unwrap();
        let zeros = [0.0; 6];
        let est = ate_dr_aipw(&a, &y, &w, &zeros, &zeros).unwrap();
        let n = 6.0;
        let ht: f64 = (0..6)
            .map(|i| if a[i] { y[i] / e[i] } else { -y[i] / (1.0 - e[i]) })
            .sum::<f64>()
            / n;
        assert!((est - ht).abs() < 1e-12);
    }

    #[test]
    fn aipw_saturated_group_means_is_mean_difference() {
        // e = empirical treated share; m = group means: AIPW reduces to the
        // plain difference. Brute-force evaluation over a 6-point fixture.
        let a = bools(&[1, 1, 0, 0, 0, 1]);
        let y = [4.0, 2.0, 1.0, 0.5, 3.0, 6.0];
        let share = 0.5;
        let mean1 = (4.0 + 2.0 + 6.0) / 3.0;
        let mean0 = (1.0 + 0.5 + 3.0) / 3.0;
        let w = PsWeights::from_propensity(vec![share; 6], &a).unwrap();
        let est = ate_dr_aipw(&a, &y, &w, &[mean1; 6], &[mean0; 6]).unwrap();
        let mut brute = 0.0;
        for i in 0..6 {
            let ai = if a[i] { 1.0 } else { 0.0 };
            brute += ai * y[i] / share - (ai - share) * mean1 / share;
            brute -= (1.0 - ai) * y[i] / (1.0 - share) + (ai - share) * mean0 / (1.0 - share);
        }
        brute /= 6.0;
        assert!((est - brute).abs() < 1e-12);
        assert!((est - (mean1 - mean0)).abs() < 1e-12);
    }

    #[test]
    fn aipw_exact_outcome_model_returns_tau_for_any_propensity() {
        let mut rng = SeedSpec::new(77, 0).rng(0);
        let tau = 1.7;
        for _ in 0..20 {
            let n = 40;
            let x: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let a: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            let y: Vec<f64> = (0..n)
                .map(|i| tau * f64::from(u8::from(a[i])) + x[i])
                .collect();
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let m1: Vec<f64> = x.iter().map(|v| tau + v).collect();
            let w = PsWeights::from_propensity(e, &a).unwrap();
            let est = ate_dr_aipw(&a, &y, &w, &m1, &x).unwrap();
            assert!((est - tau).abs() < 1e-12, "{est}");
        }
    }

    #[test]
    fn dr_wreg_noiseless_linear_model() {
        let mut rng = SeedSpec::new(8, 0).rng(0);
        let n = 60;
        let x1: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let x2: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let a: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * f64::from(u8::from(a[i])) + x1[i] + x2[i])
            .collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let w = PsWeights::from_propensity(e, &a).unwrap();
        let cov = DesignMatrix::with_intercept(&[&x1, &x2]).unwrap();
        let est = ate_dr_wreg(&a, &y, &w, &cov).unwrap();
        assert!((est.estimate - 2.0).abs() < 1e-10);
        assert!(est.se < 1e-8);
    }

    #[test]
    fn dr_wreg_orthogonal_covariate_matches_iptw() {
        // Covariate balanced within each arm under unit weights, so it is
        // weighted-orthogonal to the treatment.
        let a = bools(&[1, 1, 1, 1, 0, 0, 0, 0]);
        let x = [1.0, -1.0, 2.0, -2.0, 1.0, -1.0, 3.0, -3.0];
        let y = [3.0, 1.5, 4.0, 0.2, 1.0, 0.3, 2.2, -0.4];
        let w = PsWeights::from_propensity(vec![0.5; 8], &a).unwrap();
        let cov = DesignMatrix::with_intercept(&[&x]).unwrap();
        let dr = ate_dr_wreg(&a, &y, &w, &cov).unwrap();
        let ip = ate_iptw_wreg(&a, &y, &w).unwrap();
        assert!((dr.estimate - ip.estimate).abs() < 1e-8);
    }

    #[test]
    fn outcome_predictions_differ_by_treatment_coefficient() {
        let a = bools(&[1, 0, 1, 0, 1, 0]);
        let x = [0.1, 0.5, -0.3, 1.2, 0.8, -1.0];
        let y = [2.0, 0.4, 1.5, 1.0, 2.9, -1.1];
        let w = PsWeights::from_propensity(vec![0.5; 6], &a).unwrap();
        let cov = DesignMatrix::with_intercept(&[&x]).unwrap();
        let (est, fit) = dr_wreg_fit(&a, &y, &w, &cov).unwrap();
        let (m1, m0) = outcome_predictions(&fit, &cov);
        for i in 0..6 {
            assert!((m1[i] - m0[i] - est.estimate).abs() < 1e-12);
            let observed = if a[i] { m1[i] } else { m0[i] };
            assert!((observed - fit.fitted[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn smd_definitions() {
        let a = bools(&[1, 1, 0, 0]);
        assert_eq!(weighted_smd(&[1.0, 2.0, 1.0, 2.0], &a, &[1.0; 4]).unwrap(), 0.0);
        // Group means 1 and 0 with full-sample sd exactly 1.
        let c = 0.5f64.sqrt();
        let x = [1.0 + c, 1.0 - c, c, -c];
        assert!((sample_sd(&x) - 1.0).abs() < 1e-15);
        let smd = weighted_smd(&x, &a, &[1.0; 4]).unwrap();
        assert!((smd - 1.0).abs() < 1e-12);
        assert!(matches!(
            weighted_smd(&[3.0; 4], &a, &[1.0; 4]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn smd_uniform_weights_is_classical() {
        let x = [0.3, 1.7, 2.2, -0.4, 0.9, 1.1, -1.3];
        let a = bools(&[1, 1, 1, 0, 0, 0, 0]);
        let m1 = (0.3 + 1.7 + 2.2) / 3.0;
        let m0 = (-0.4 + 0.9 + 1.1 - 1.3) / 4.0;
        let classical = (m1 - m0) / sample_sd(&x);
        let smd = weighted_smd(&x, &a, &[2.5; 7]).unwrap();
        assert!((smd - classical).abs() < 1e-12);
    }

    #[test]
    fn p_value_matches_ci() {
        let est = AteEstimate::new(1.96, 1.0, EstimatorKind::IptwWreg);
        assert!((est.p_value() - 0.05).abs() < 1e-3);
        assert!((two_sided_normal_p(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn estimator_tag_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.as_str().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("IPTW".parse::<EstimatorKind>().is_err());
    }

    proptest! {
        #[test]
        fn wreg_point_estimate_is_hajek(
            seed in any::<u64>(),
            n in 6usize..60,
            scale in 0.01f64..100.0,
        ) {
            let mut rng = SeedSpec::new(seed, 0).rng(0);
            let mut a: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            a[0] = true;
            a[1] = false;
            let y: Vec<f64> = (0..n).map(|_| 3.0 * standard_normal(&mut rng)).collect();
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
            let w = PsWeights::from_propensity(e, &a).unwrap();
            let hajek = ate_iptw_hajek(&w, &a, &y).unwrap();
            let reg = ate_iptw_wreg(&a, &y, &w).unwrap();
            prop_assert!((hajek - reg.estimate).abs() < 1e-8);

            // Ratio invariance: scaled weights give the same contrast.
            let scaled: Vec<f64> = w.weights().iter().map(|v| v * scale).collect();
            let treat: Vec<f64> = a.iter().map(|&v| f64::from(u8::from(v))).collect();
            let d = DesignMatrix::with_intercept(&[&treat]).unwrap();
            let fit = fit_wls(&d, &y, &scaled).unwrap();
            prop_assert!((fit.coefficients[1] - hajek).abs() < 1e-8);
        }
    }
}
