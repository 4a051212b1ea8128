//! Monte Carlo grid runner.
//!
//! Work is flattened to `(cell, replicate)` jobs. Each job depends only on
//! its scenario and replicate index, and per-cell folds run in replicate
//! order after all jobs finish, so summaries are bit-identical for any
//! worker count.

use crate::error::{Error, Result};
use crate::estimators::{
    ate_dr_aipw_estimate, ate_iptw_hajek_estimate, ate_iptw_wreg, compute_weights, dr_wreg_fit,
    outcome_predictions, AteEstimate, EstimatorKind,
};
use crate::glm::fit_logistic;
use crate::simgen::{covariate_view, generate, CovariateSet, SampleData, ScenarioSpec};

/// Cells whose failure share exceeds this are flagged in the output.
pub const FAILURE_FLAG_SHARE: f64 = 0.01;

/// Why a replicate produced no estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFailure {
    pub tag: &'static str,
    pub message: String,
}

impl From<&Error> for ReplicateFailure {
    fn from(e: &Error) -> Self {
        Self {
            tag: e.tag(),
            message: e.to_string(),
        }
    }
}

pub type ReplicateResult = std::result::Result<AteEstimate, ReplicateFailure>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub covariate_set: String,
    pub estimator: EstimatorKind,
    pub result: ReplicateResult,
}

/// All requested estimators for every covariate set of one replicate, in
/// `covariate_sets × estimators` order.
pub fn run_replicate(spec: &ScenarioSpec, r: u64) -> Vec<ReplicateOutcome> {
    let data = generate(spec, r);
    let mut out = Vec::with_capacity(spec.covariate_sets.len() * spec.estimators.len());
    for set in &spec.covariate_sets {
        let results = match &data {
            Ok(d) => estimate_set(spec, d, set),
            Err(e) => vec![Err(ReplicateFailure::from(e)); spec.estimators.len()],
        };
        for (&estimator, result) in spec.estimators.iter().zip(results) {
            out.push(ReplicateOutcome {
                covariate_set: set.tag(),
                estimator,
                result: result.map(|est| est.labeled(set.tag())),
            });
        }
    }
    out
}

fn estimate_set(spec: &ScenarioSpec, data: &SampleData, set: &CovariateSet) -> Vec<ReplicateResult> {
    let fail = |e: Error| vec![Err(ReplicateFailure::from(&e)); spec.estimators.len()];
    let design = match covariate_view(data, set) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let weights = match fit_logistic(&design, &data.a).and_then(|fit| compute_weights(&fit, &data.a)) {
        Ok(w) => w,
        Err(e) => return fail(e),
    };
    let needs_outcome_model = spec
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::DrWreg | EstimatorKind::DrAipw));
    let dr = needs_outcome_model.then(|| dr_wreg_fit(&data.a, &data.y, &weights, &design));

    spec.estimators
        .iter()
        .map(|kind| {
            let res = match kind {
                EstimatorKind::IptwWreg => ate_iptw_wreg(&data.a, &data.y, &weights),
                EstimatorKind::IptwHajek => ate_iptw_hajek_estimate(&weights, &data.a, &data.y),
                EstimatorKind::DrWreg => match dr.as_ref().expect("outcome model") {
                    Ok((est, _)) => Ok(est.clone()),
                    Err(e) => Err(e.clone()),
                },
                EstimatorKind::DrAipw => match dr.as_ref().expect("outcome model") {
                    Ok((_, fit)) => {
                        let (m1, m0) = outcome_predictions(fit, &design);
                        ate_dr_aipw_estimate(&data.a, &data.y, &weights, &m1, &m0)
                    }
                    Err(e) => Err(e.clone()),
                },
            };
            res.map_err(|e| ReplicateFailure::from(&e))
        })
        .collect()
}

/// Monte Carlo performance metrics of one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mc_se_bias: f64,
    pub mean_se: f64,
    pub replicates: usize,
    pub failures: usize,
}

/// Bias, MSE and coverage over successful replicates; failures are counted.
pub fn summarize(estimates: &[ReplicateResult], tau_true: f64) -> Result<CellMetrics> {
    let ok: Vec<&AteEstimate> = estimates.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = estimates.len() - ok.len();
    let r = ok.len();
    if r < 2 {
        return Err(Error::TooFewReplicates(r));
    }
    let rf = r as f64;
    let mean = ok.iter().map(|e| e.estimate).sum::<f64>() / rf;
    let mse = ok
        .iter()
        .map(|e| (e.estimate - tau_true) * (e.estimate - tau_true))
        .sum::<f64>()
        / rf;
    let var = ok
        .iter()
        .map(|e| (e.estimate - mean) * (e.estimate - mean))
        .sum::<f64>()
        / (rf - 1.0);
    let covered = ok.iter().filter(|e| e.covers(tau_true)).count();
    Ok(CellMetrics {
        bias: mean - tau_true,
        mse,
        coverage: covered as f64 / rf,
        mc_se_bias: (var / rf).sqrt(),
        mean_se: ok.iter().map(|e| e.se).sum::<f64>() / rf,
        replicates: r,
        failures,
    })
}

/// One output row: a scenario cell × covariate set × estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario_id: String,
    pub design: String,
    pub rho_x: f64,
    pub rho_w: f64,
    pub reliability: f64,
    pub n: usize,
    pub tau: f64,
    pub estimator: EstimatorKind,
    pub covariate_set: String,
    pub metrics: Option<CellMetrics>,
    /// Replicates attempted.
    pub attempted: usize,
    pub flagged: bool,
}

impl CellSummary {
    pub fn failures(&self) -> usize {
        self.metrics
            .map_or(self.attempted, |m| m.failures)
    }
}

/// How grid jobs are scheduled. Output never depends on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Execution {
    /// `None` uses all available cores; `Some(1)` runs on the caller's thread.
    pub workers: Option<usize>,
}

impl Execution {
    pub fn sequential() -> Self {
        Self { workers: Some(1) }
    }

    pub fn parallel(workers: Option<usize>) -> Self {
        Self { workers }
    }

    /// Maps `f` over `0..len` and returns results in index order.
    pub fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.workers == Some(1) {
            return (0..len).map(f).collect();
        }
        self.map_parallel(len, f)
    }

    #[cfg(feature = "parallel")]
    fn map_parallel<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        let run = || (0..len).into_par_iter().map(&f).collect();
        match self.workers {
            Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                Ok(pool) => pool.install(run),
                Err(_) => run(),
            },
            None => run(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn map_parallel<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}

/// Runs every cell of `grid`; rows come out in grid order, then covariate
/// set, then estimator.
pub fn run_grid(grid: &[ScenarioSpec], exec: &Execution) -> Result<Vec<CellSummary>> {
    for spec in grid {
        spec.validate()?;
    }
    let jobs: Vec<(usize, u64)> = grid
        .iter()
        .enumerate()
        .flat_map(|(c, s)| (0..s.replicates as u64).map(move |r| (c, r)))
        .collect();
    let outcomes = exec.map_indexed(jobs.len(), |j| {
        let (c, r) = jobs[j];
        run_replicate(&grid[c], r)
    });

    let mut rows = Vec::new();
    let mut cursor = 0;
    for spec in grid {
        let block = &outcomes[cursor..cursor + spec.replicates];
        cursor += spec.replicates;
        let per_rep = spec.covariate_sets.len() * spec.estimators.len();
        for k in 0..per_rep {
            let first = &block[0][k];
            let results: Vec<ReplicateResult> =
                block.iter().map(|rep| rep[k].result.clone()).collect();
            let metrics = summarize(&results, spec.tau).ok();
            let failures = metrics.map_or(results.len(), |m| m.failures);
            rows.push(CellSummary {
                scenario_id: spec.id.clone(),
                design: spec.design.to_string(),
                rho_x: spec.rho_x,
                rho_w: spec.rho_w,
                reliability: spec.reliability(0),
                n: spec.n,
                tau: spec.tau,
                estimator: first.estimator,
                covariate_set: first.covariate_set.clone(),
                metrics,
                attempted: results.len(),
                flagged: failures as f64 > FAILURE_FLAG_SHARE * results.len() as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrated_scenario, CalibrationOptions};
    use crate::simgen::Design;

    fn est(estimate: f64, se: f64) -> ReplicateResult {
        Ok(AteEstimate::new(estimate, se, EstimatorKind::IptwWreg))
    }

    #[test]
    fn summarize_exact_estimates() {
        let m = summarize(&[est(2.0, 0.1), est(2.0, 0.3), est(2.0, 0.2)], 2.0).unwrap();
        assert_eq!(m.bias, 0.0);
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.coverage, 1.0);
        assert_eq!(m.replicates, 3);
    }

    #[test]
    fn summarize_symmetric_misses() {
        let m = summarize(
            &[est(1.0, 100.0), est(3.0, 100.0), est(1.0, 100.0), est(3.0, 100.0)],
            2.0,
        )
        .unwrap();
        assert_eq!(m.bias, 0.0);
        assert_eq!(m.mse, 1.0);
        assert_eq!(m.coverage, 1.0);
    }

    #[test]
    fn summarize_counts_failures_and_requires_two() {
        let fail = Err(ReplicateFailure {
            tag: "separation",
            message: String::new(),
        });
        let m = summarize(&[est(1.0, 1.0), fail.clone(), est(3.0, 1.0)], 2.0).unwrap();
        assert_eq!(m.failures, 1);
        assert_eq!(m.replicates, 2);
        assert!(matches!(
            summarize(&[est(1.0, 1.0), fail], 2.0),
            Err(Error::TooFewReplicates(1))
        ));
    }

    fn small_spec(sigma2: f64) -> ScenarioSpec {
        let mut s =
            calibrated_scenario(Design::Sim1, 0.3, 0.0, sigma2, &CalibrationOptions::default())
                .unwrap();
        s.n = 400;
        s.replicates = 6;
        s.master_seed = 99;
        s.estimators = EstimatorKind::ALL.to_vec();
        s
    }

    #[test]
    fn error_free_covariates_match_true_covariates() {
        let spec = small_spec(0.0);
        let out = run_replicate(&spec, 0);
        let by_set = |tag: &str, k: EstimatorKind| {
            out.iter()
                .find(|o| o.covariate_set == tag && o.estimator == k)
                .unwrap()
                .result
                .clone()
                .unwrap()
        };
        for k in EstimatorKind::ALL {
            let x = by_set("X1,X2", k);
            let w = by_set("W1,W2", k);
            assert_eq!(x.estimate, w.estimate);
            assert_eq!(x.se, w.se);
        }
    }

    #[test]
    fn hajek_and_regression_agree_per_replicate() {
        let spec = small_spec(1.0);
        let out = run_replicate(&spec, 3);
        for set in ["X1,X2", "W1,W2"] {
            let get = |k| {
                out.iter()
                    .find(|o| o.covariate_set == set && o.estimator == k)
                    .unwrap()
                    .result
                    .clone()
                    .unwrap()
                    .estimate
            };
            assert!((get(EstimatorKind::IptwHajek) - get(EstimatorKind::IptwWreg)).abs() < 1e-10);
        }
    }

    #[test]
    fn unconfounded_estimates_within_four_se() {
        let mut spec = ScenarioSpec::new(Design::Sim1, 0.3, 0.0, 1.0);
        spec.n = 1000;
        spec.master_seed = 5;
        spec.estimators = EstimatorKind::ALL.to_vec();
        for o in run_replicate(&spec, 0) {
            let e = o.result.as_ref().unwrap();
            assert!((e.estimate - spec.tau).abs() < 4.0 * e.se, "{:?} {:?}", o.estimator, o.covariate_set);
        }
    }

    #[test]
    fn grid_order_and_worker_invariance() {
        let grid = vec![small_spec(1.0), small_spec(0.43)];
        let seq = run_grid(&grid, &Execution::sequential()).unwrap();
        let par = run_grid(&grid, &Execution::parallel(Some(4))).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.len(), 2 * 2 * 4);
        assert_eq!(seq[0].scenario_id, grid[0].id);
        assert_eq!(seq[8].scenario_id, grid[1].id);
        assert_eq!(seq[0].covariate_set, "X1,X2");
        assert_eq!(seq[4].covariate_set, "W1,W2");
    }

    #[test]
    fn failed_data_generation_is_recorded() {
        let mut spec = small_spec(1.0);
        spec.alpha0 = 30.0;
        spec.n = 10;
        let rows = run_grid(&[spec], &Execution::sequential()).unwrap();
        assert!(rows.iter().all(|r| r.flagged && r.metrics.is_none()));
        assert!(rows.iter().all(|r| r.failures() == 6));
    }
}
