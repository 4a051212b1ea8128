//! `verify-trends`: checks a `simulate` summary CSV against the expected
//! qualitative behaviour of the estimators.
//!
//! Monotone trends allow a slack of two standard errors of the difference
//! between neighbouring cells, `2·sqrt(se_a² + se_b²)`; coverage uses the
//! binomial standard error `sqrt(c(1 − c)/R)` in the same way.

use std::fmt;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use confound_core::engine::{CellMetrics, CellSummary};
use confound_core::estimators::EstimatorKind;
use confound_core::output::read_summaries_file;

use crate::config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Summary CSV written by `simulate` (several files are pooled).
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub input: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        write!(f, "{s} {}: {}", self.name, self.detail)
    }
}

pub fn run(args: VerifyArgs) -> CliResult<()> {
    let cfg: VerifyConfig = config::load(args.config.as_deref())?;
    let inputs = if args.input.is_empty() {
        cfg.input
            .unwrap_or_default()
            .into_iter()
            .map(|p| config::relative_to(args.config.as_deref(), p))
            .collect()
    } else {
        args.input
    };
    if inputs.is_empty() {
        return Err(CliError::Config("missing `input` summary CSV".into()));
    }
    for p in &inputs {
        config::require_input(p)?;
    }
    let mut rows = Vec::new();
    for p in &inputs {
        rows.extend(read_summaries_file(p)?);
    }
    let checks = run_checks(&rows);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    if failed > 0 {
        Err(CliError::ChecksFailed(failed))
    } else {
        Ok(())
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 0.01
}

fn diff_se(a: &CellMetrics, b: &CellMetrics) -> f64 {
    (a.mc_se_bias.powi(2) + b.mc_se_bias.powi(2)).sqrt()
}

fn coverage_se(m: &CellMetrics) -> f64 {
    (m.coverage * (1.0 - m.coverage) / m.replicates as f64).sqrt()
}

struct Outcome {
    checked: usize,
    failures: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            checked: 0,
            failures: Vec::new(),
        }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, name: &'static str, unit: &str) -> Check {
        let (status, detail) = if self.checked == 0 {
            (Status::Skip, "no matching rows".to_string())
        } else if self.failures.is_empty() {
            (Status::Pass, format!("{} {unit} checked", self.checked))
        } else {
            (
                Status::Fail,
                format!(
                    "{} of {} {unit} failed; {}",
                    self.failures.len(),
                    self.checked,
                    self.failures.join("; ")
                ),
            )
        };
        Check {
            name,
            status,
            detail,
        }
    }
}

struct Rows<'a>(Vec<(&'a CellSummary, CellMetrics)>);

impl<'a> Rows<'a> {
    fn new(rows: &'a [CellSummary]) -> Self {
        Rows(rows.iter().filter_map(|r| r.metrics.map(|m| (r, m))).collect())
    }

    fn select(
        &self,
        design: &str,
        estimator: EstimatorKind,
        set: &str,
    ) -> Vec<(&'a CellSummary, CellMetrics)> {
        self.0
            .iter()
            .filter(|(r, _)| {
                r.design == design
                    && r.estimator == estimator
                    && r.covariate_set == set
                    && !r.scenario_id.ends_with("_reflected")
            })
            .copied()
            .collect()
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

/// Every check, in a fixed order.
pub fn run_checks(rows: &[CellSummary]) -> Vec<Check> {
    let all = Rows::new(rows);
    vec![
        unbiased_with_true_confounder(&all),
        coverage_with_true_covariates(&all),
        bias_decreases_in_rho_x(&all),
        bias_decreases_with_reliability(&all),
        bias_increases_in_rho_w(&all),
        coverage_decreases_in_rho_w(&all),
        iptw_matches_dr(&all),
        sim2_grouping(&all, "sim2_rho12"),
        sim2_grouping(&all, "sim2_rho13"),
        omitted_pair_unaffected_by_rho13(&all),
        sign_flip_equivalence(&all),
    ]
}

/// Sets containing the true `X1` (for the two-covariate designs, `X1,X2`).
fn unbiased_with_true_confounder(all: &Rows) -> Check {
    let mut out = Outcome::new();
    for (r, m) in &all.0 {
        if r.covariate_set.split(',').any(|c| c == "X1") {
            out.expect(m.bias.abs() < 3.0 * m.mc_se_bias, || {
                format!(
                    "{} {} {}: bias {:.4} vs 3·mc_se {:.4}",
                    r.scenario_id,
                    r.estimator,
                    r.covariate_set,
                    m.bias,
                    3.0 * m.mc_se_bias
                )
            });
        }
    }
    out.finish("unbiased_with_true_x1", "cells")
}

fn coverage_with_true_covariates(all: &Rows) -> Check {
    let mut out = Outcome::new();
    for (r, m) in &all.0 {
        if r.design != "sim1" || r.covariate_set != "X1,X2" {
            continue;
        }
        match r.estimator {
            EstimatorKind::DrWreg => out.expect((0.91..=0.99).contains(&m.coverage), || {
                format!("{} DR coverage {:.3} outside [0.91, 0.99]", r.scenario_id, m.coverage)
            }),
            EstimatorKind::IptwWreg => out.expect(m.coverage >= 0.98, || {
                format!("{} IPTW coverage {:.3} < 0.98", r.scenario_id, m.coverage)
            }),
            _ => {}
        }
    }
    out.finish("coverage_true_covariates", "cells")
}

/// Reliability 0.5, `ρʷ = 0`: bias non-increasing in `ρˣ`, total drop > 0.1.
fn bias_decreases_in_rho_x(all: &Rows) -> Check {
    let mut out = Outcome::new();
    let mut cells: Vec<_> = all
        .select("sim1", EstimatorKind::IptwWreg, "W1,W2")
        .into_iter()
        .filter(|(r, _)| near(r.reliability, 0.5) && r.rho_w == 0.0)
        .collect();
    cells.sort_by(|a, b| a.0.rho_x.total_cmp(&b.0.rho_x));
    for w in cells.windows(2) {
        let ((ra, a), (rb, b)) = (w[0], w[1]);
        out.expect(b.bias <= a.bias + 2.0 * diff_se(&a, &b), || {
            format!(
                "bias rose from {:.4} (ρˣ={}) to {:.4} (ρˣ={})",
                a.bias, ra.rho_x, b.bias, rb.rho_x
            )
        });
    }
    if let (Some(first), Some(last)) = (cells.first(), cells.last()) {
        if cells.len() > 1 {
            out.expect(first.1.bias - last.1.bias > 0.1, || {
                format!(
                    "total drop {:.4} from ρˣ={} to ρˣ={} is not > 0.1",
                    first.1.bias - last.1.bias,
                    first.0.rho_x,
                    last.0.rho_x
                )
            });
        }
    }
    out.finish("bias_nonincreasing_in_rho_x", "comparisons")
}

/// `ρʷ = 0`: bias at reliability 0.9 below bias at 0.5 for every `ρˣ`.
fn bias_decreases_with_reliability(all: &Rows) -> Check {
    let mut out = Outcome::new();
    let cells: Vec<_> = all
        .select("sim1", EstimatorKind::IptwWreg, "W1,W2")
        .into_iter()
        .filter(|(r, _)| r.rho_w == 0.0)
        .collect();
    for rx in distinct(cells.iter().map(|(r, _)| r.rho_x)) {
        let at = |rel: f64| {
            cells
                .iter()
                .find(|(r, _)| (r.rho_x - rx).abs() < 1e-9 && near(r.reliability, rel))
                .map(|(_, m)| m.bias)
        };
        if let (Some(lo), Some(hi)) = (at(0.5), at(0.9)) {
            out.expect(hi < lo, || {
                format!("ρˣ={rx}: bias {hi:.4} at reliability 0.9 not below {lo:.4} at 0.5")
            });
        }
    }
    out.finish("bias_lower_at_higher_reliability", "comparisons")
}

fn rho_w_series<'a>(all: &Rows<'a>) -> Vec<(f64, Vec<(&'a CellSummary, CellMetrics)>)> {
    let cells: Vec<_> = all
        .select("sim1", EstimatorKind::IptwWreg, "W1,W2")
        .into_iter()
        .filter(|(r, _)| near(r.reliability, 0.7))
        .collect();
    distinct(cells.iter().map(|(r, _)| r.rho_x))
        .into_iter()
        .map(|rx| {
            let mut s: Vec<_> = cells
                .iter()
                .filter(|(r, _)| (r.rho_x - rx).abs() < 1e-9)
                .copied()
                .collect();
            s.sort_by(|a, b| a.0.rho_w.total_cmp(&b.0.rho_w));
            (rx, s)
        })
        .filter(|(_, s)| s.len() > 1)
        .collect()
}

/// Reliability 0.7: bias non-decreasing in `ρʷ` for each `ρˣ`.
fn bias_increases_in_rho_w(all: &Rows) -> Check {
    let mut out = Outcome::new();
    for (rx, series) in rho_w_series(all) {
        for w in series.windows(2) {
            let ((ra, a), (rb, b)) = (w[0], w[1]);
            out.expect(b.bias >= a.bias - 2.0 * diff_se(&a, &b), || {
                format!(
                    "ρˣ={rx}: bias fell from {:.4} (ρʷ={}) to {:.4} (ρʷ={})",
                    a.bias, ra.rho_w, b.bias, rb.rho_w
                )
            });
        }
    }
    out.finish("bias_nondecreasing_in_rho_w", "comparisons")
}

fn coverage_decreases_in_rho_w(all: &Rows) -> Check {
    let mut out = Outcome::new();
    for (rx, series) in rho_w_series(all) {
        for w in series.windows(2) {
            let ((ra, a), (rb, b)) = (w[0], w[1]);
            let slack = 2.0 * (coverage_se(&a).powi(2) + coverage_se(&b).powi(2)).sqrt();
            out.expect(b.coverage <= a.coverage + slack, || {
                format!(
                    "ρˣ={rx}: coverage rose from {:.3} (ρʷ={}) to {:.3} (ρʷ={})",
                    a.coverage, ra.rho_w, b.coverage, rb.rho_w
                )
            });
        }
    }
    out.finish("coverage_nonincreasing_in_rho_w", "comparisons")
}

/// Same cell and covariates: IPTW and DR biases within 2·mc_se.
fn iptw_matches_dr(all: &Rows) -> Check {
    let mut out = Outcome::new();
    for (r, iptw) in all.0.iter().filter(|(r, _)| r.estimator == EstimatorKind::IptwWreg) {
        let twin = all.0.iter().find(|(d, _)| {
            d.estimator == EstimatorKind::DrWreg
                && d.scenario_id == r.scenario_id
                && d.covariate_set == r.covariate_set
        });
        if let Some((_, dr)) = twin {
            let tol = 2.0 * iptw.mc_se_bias.max(dr.mc_se_bias);
            out.expect((iptw.bias - dr.bias).abs() < tol, || {
                format!(
                    "{} {}: IPTW {:.4} vs DR {:.4}",
                    r.scenario_id, r.covariate_set, iptw.bias, dr.bias
                )
            });
        }
    }
    out.finish("iptw_dr_biases_agree", "cells")
}

/// Reliability 0.5, correlation 0.6: with `W1`, measuring the correlated
/// partner correctly gives strictly smaller |bias|.
fn sim2_grouping(all: &Rows, design: &'static str) -> Check {
    let pairs: &[(&str, &str)] = if design == "sim2_rho12" {
        &[("W1,X2,X3", "W1,W2,X3"), ("W1,X2,W3", "W1,W2,W3")]
    } else {
        &[("W1,X2,X3", "W1,X2,W3"), ("W1,W2,X3", "W1,W2,W3")]
    };
    let mut out = Outcome::new();
    for &(better, worse) in pairs {
        let pick = |set: &str| {
            all.select(design, EstimatorKind::IptwWreg, set)
                .into_iter()
                .filter(|(r, _)| near(r.reliability, 0.5) && (r.rho_x - 0.6).abs() < 1e-9)
                .collect::<Vec<_>>()
        };
        for (rb, b) in pick(better) {
            let Some((_, w)) = pick(worse).into_iter().find(|(r, _)| r.rho_w == rb.rho_w) else {
                continue;
            };
            out.expect(b.bias.abs() < w.bias.abs(), || {
                format!(
                    "ρʷ={}: |bias| {better} {:.4} not below {worse} {:.4}",
                    rb.rho_w, b.bias, w.bias
                )
            });
        }
    }
    let name = if design == "sim2_rho12" {
        "grouping_sim2_rho12"
    } else {
        "grouping_sim2_rho13"
    };
    out.finish(name, "comparisons")
}

/// `{W1,W2}` ignores the X1–X3 correlation entirely.
fn omitted_pair_unaffected_by_rho13(all: &Rows) -> Check {
    let mut out = Outcome::new();
    let cells = all.select("sim2_rho13", EstimatorKind::IptwWreg, "W1,W2");
    let keys: Vec<(i64, i64)> = {
        let mut k: Vec<_> = cells
            .iter()
            .map(|(r, _)| ((r.reliability * 1000.0).round() as i64, (r.rho_w * 1000.0).round() as i64))
            .collect();
        k.sort_unstable();
        k.dedup();
        k
    };
    for key in keys {
        let group: Vec<_> = cells
            .iter()
            .filter(|(r, _)| {
                ((r.reliability * 1000.0).round() as i64, (r.rho_w * 1000.0).round() as i64) == key
            })
            .collect();
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let ((ri, a), (rj, b)) = (group[i], group[j]);
                out.expect((a.bias - b.bias).abs() < 2.0 * diff_se(a, b), || {
                    format!(
                        "bias {:.4} at ρˣ₁₃={} vs {:.4} at ρˣ₁₃={}",
                        a.bias, ri.rho_x, b.bias, rj.rho_x
                    )
                });
            }
        }
    }
    out.finish("w1w2_constant_in_rho13", "pairs")
}

fn sign_flip_equivalence(all: &Rows) -> Check {
    let mut out = Outcome::new();
    for (r, m) in all.0.iter().filter(|(r, _)| {
        r.design == "signflip_a1"
            && r.estimator == EstimatorKind::IptwWreg
            && r.covariate_set == "W1,W2"
    }) {
        let twin_id = format!("{}_reflected", r.scenario_id);
        let twin = all.0.iter().find(|(t, _)| {
            t.scenario_id == twin_id
                && t.estimator == EstimatorKind::IptwWreg
                && t.covariate_set == "W1,W2"
        });
        if let Some((_, t)) = twin {
            out.expect((m.bias - t.bias).abs() < 2.0 * diff_se(m, t), || {
                format!("{}: bias {:.4} vs reflected {:.4}", r.scenario_id, m.bias, t.bias)
            });
        }
    }
    out.finish("sign_flip_equivalence", "pairs")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, rho_x: f64, rel: f64, set: &str, bias: f64, se: f64) -> CellSummary {
        CellSummary {
            scenario_id: id.into(),
            design: "sim1".into(),
            rho_x,
            rho_w: 0.0,
            reliability: rel,
            n: 1000,
            tau: 2.0,
            estimator: EstimatorKind::IptwWreg,
            covariate_set: set.into(),
            metrics: Some(CellMetrics {
                bias,
                mse: bias * bias,
                coverage: 0.5,
                mc_se_bias: se,
                mean_se: 0.1,
                replicates: 200,
                failures: 0,
            }),
            attempted: 200,
            flagged: false,
        }
    }

    fn status(checks: &[Check], name: &str) -> Status {
        checks.iter().find(|c| c.name == name).unwrap().status
    }

    #[test]
    fn decreasing_series_passes_and_rising_series_fails() {
        let good: Vec<_> = [(0.0, 0.5), (0.3, 0.45), (0.6, 0.4), (0.9, 0.35)]
            .iter()
            .map(|&(rx, b)| row(&format!("c{rx}"), rx, 0.5, "W1,W2", b, 0.005))
            .collect();
        assert_eq!(status(&run_checks(&good), "bias_nonincreasing_in_rho_x"), Status::Pass);

        let mut bad = good.clone();
        bad[2].metrics.as_mut().unwrap().bias = 0.6;
        assert_eq!(status(&run_checks(&bad), "bias_nonincreasing_in_rho_x"), Status::Fail);
    }

    #[test]
    fn small_total_drop_fails() {
        let flat: Vec<_> = [(0.0, 0.5), (0.9, 0.45)]
            .iter()
            .map(|&(rx, b)| row(&format!("c{rx}"), rx, 0.5, "W1,W2", b, 0.005))
            .collect();
        assert_eq!(status(&run_checks(&flat), "bias_nonincreasing_in_rho_x"), Status::Fail);
    }

    #[test]
    fn missing_rows_skip() {
        assert!(run_checks(&[]).iter().all(|c| c.status == Status::Skip));
    }

    #[test]
    fn biased_true_covariate_cell_fails() {
        let rows = vec![row("c", 0.0, 0.5, "X1,X2", 0.1, 0.005)];
        assert_eq!(status(&run_checks(&rows), "unbiased_with_true_x1"), Status::Fail);
    }
}
