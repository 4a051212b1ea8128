//! `simulate`: calibrated Monte Carlo grids.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use confound_core::calibration::{
    calibrated_scenario, reflect_second_covariate, CalibrationOptions, CoefficientSource,
    DEFAULT_ALPHA_FIXED,
};
use confound_core::engine::{run_grid, CellSummary, Execution};
use confound_core::estimators::EstimatorKind;
use confound_core::output::write_summaries;
use confound_core::simgen::{CovariateSet, Design, ScenarioSpec};

use crate::config::{self, check_grid};
use crate::error::{CliError, CliResult};
use crate::svg;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<Design>,
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub rho_x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub rho_w: Option<Vec<f64>>,
    /// Measurement-error variances (reliability = 1 / (1 + σ²)).
    #[arg(long = "sigma2-w", value_delimiter = ',', num_args = 1..)]
    pub sigma2_w: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Covariate sets such as `W1,X2` (separate sets with `;`).
    #[arg(long, value_delimiter = ';', num_args = 1..)]
    pub covariate_sets: Option<Vec<CovariateSet>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// `solve` (default) or `paper_table`.
    #[arg(long, value_parser = parse_source)]
    pub coefficients: Option<CoefficientSource>,
    /// Worker threads; never changes the output.
    #[arg(long, env = "CONFOUND_FORGE_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write an SVG chart of bias, MSE and coverage.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<CoefficientSource, String> {
    match s {
        "solve" => Ok(CoefficientSource::Solve),
        "paper_table" => Ok(CoefficientSource::PaperTable),
        other => Err(format!("expected `solve` or `paper_table`, got `{other}`")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub design: Option<Design>,
    pub rho_x: Option<Vec<f64>>,
    pub rho_w: Option<Vec<f64>>,
    pub sigma2_w: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub covariate_sets: Option<Vec<CovariateSet>>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub coefficients: Option<CoefficientSource>,
    pub target_tc: Option<f64>,
    pub tau: Option<f64>,
    pub alpha_fixed: Option<f64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Fully resolved simulation settings.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub design: Design,
    pub rho_x: Vec<f64>,
    pub rho_w: Vec<f64>,
    pub sigma2_w: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub covariate_sets: Option<Vec<CovariateSet>>,
    pub estimators: Vec<EstimatorKind>,
    pub calibration: CalibrationOptions,
}

impl SimulationPlan {
    /// Cells in `σ² × ρʷ × ρˣ` order. Sign-flip cells are each followed by
    /// their reflected twin.
    pub fn scenarios(&self) -> CliResult<Vec<ScenarioSpec>> {
        let mut out = Vec::new();
        for &s2 in &self.sigma2_w {
            for &rw in &self.rho_w {
                for &rx in &self.rho_x {
                    let mut spec = calibrated_scenario(self.design, rx, rw, s2, &self.calibration)?;
                    spec.n = self.n;
                    spec.replicates = self.replicates;
                    spec.master_seed = self.seed;
                    spec.estimators = self.estimators.clone();
                    if let Some(sets) = &self.covariate_sets {
                        spec.covariate_sets = sets.clone();
                    }
                    spec.validate()?;
                    let twin = (self.design == Design::SignflipA1)
                        .then(|| reflect_second_covariate(&spec))
                        .transpose()?;
                    out.push(spec);
                    out.extend(twin);
                }
            }
        }
        Ok(out)
    }
}

fn resolve(args: &SimulateArgs, cfg: SimulateConfig) -> CliResult<SimulationPlan> {
    let design = args.design.or(cfg.design).unwrap_or(Design::Sim1);
    let default_rho_x = if design == Design::SignflipA1 {
        vec![-0.6]
    } else {
        vec![0.0, 0.3, 0.6, 0.9]
    };
    let rho_x = args.rho_x.clone().or(cfg.rho_x).unwrap_or(default_rho_x);
    let rho_w = args.rho_w.clone().or(cfg.rho_w).unwrap_or_else(|| vec![0.0]);
    let sigma2_w = args
        .sigma2_w
        .clone()
        .or(cfg.sigma2_w)
        .unwrap_or_else(|| vec![1.0, 0.43, 0.1]);
    check_grid("rho_x", &rho_x, (-1.0, 1.0))?;
    check_grid("rho_w", &rho_w, (-1.0, 1.0))?;
    if sigma2_w.is_empty() || sigma2_w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CliError::Config(
            "`sigma2_w` must be a non-empty list of non-negative values".into(),
        ));
    }
    let n = args.n.or(cfg.n).unwrap_or(1000);
    let replicates = args.reps.or(cfg.replicates).unwrap_or(200);
    if n < 10 {
        return Err(CliError::Config(format!("`n` must be at least 10, got {n}")));
    }
    if replicates < 2 {
        return Err(CliError::Config(format!(
            "`replicates` must be at least 2, got {replicates}"
        )));
    }
    let covariate_sets = args.covariate_sets.clone().or(cfg.covariate_sets);
    if let Some(sets) = &covariate_sets {
        if sets.is_empty() {
            return Err(CliError::Config("`covariate_sets` is empty".into()));
        }
        for s in sets {
            s.validate_for(design)?;
        }
    }
    let estimators = args
        .estimators
        .clone()
        .or(cfg.estimators)
        .unwrap_or_else(|| vec![EstimatorKind::IptwWreg, EstimatorKind::DrWreg]);
    if estimators.is_empty() {
        return Err(CliError::Config("`estimators` is empty".into()));
    }
    let calibration = CalibrationOptions {
        target_tc: cfg.target_tc.unwrap_or(1.0),
        tau: cfg.tau.unwrap_or(2.0),
        alpha_fixed: cfg.alpha_fixed.unwrap_or(DEFAULT_ALPHA_FIXED),
        source: args.coefficients.or(cfg.coefficients).unwrap_or_default(),
    };
    Ok(SimulationPlan {
        design,
        rho_x,
        rho_w,
        sigma2_w,
        n,
        replicates,
        seed: args.seed.or(cfg.seed).unwrap_or(1),
        covariate_sets,
        estimators,
        calibration,
    })
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let mut cfg: SimulateConfig = config::load(args.config.as_deref())?;
    let workers = args.workers.or(cfg.workers.take());
    if workers == Some(0) {
        return Err(CliError::Config("`workers` must be positive".into()));
    }
    let base = args.config.as_deref();
    let output = args.output.clone().or(cfg.output.take().map(|p| config::relative_to(base, p)));
    let svg_path = args.svg.clone().or(cfg.svg.take().map(|p| config::relative_to(base, p)));
    for p in output.iter().chain(&svg_path) {
        config::require_output(p)?;
    }
    let plan = resolve(&args, cfg)?;
    let grid = plan.scenarios()?;

    let rows = run_grid(&grid, &Execution::parallel(workers))?;
    if rows.iter().all(|r| r.metrics.is_none()) {
        return Err(CliError::Numeric(
            "every cell failed; no estimates were produced".into(),
        ));
    }
    report_flags(&rows);

    let mut buf = Vec::new();
    write_summaries(&mut buf, &rows)?;
    config::emit(output.as_ref(), &buf)?;
    if let Some(p) = svg_path {
        config::emit(Some(&p), svg::summary_chart(&rows).as_bytes())?;
    }
    Ok(())
}

fn report_flags(rows: &[CellSummary]) {
    for r in rows.iter().filter(|r| r.flagged) {
        eprintln!(
            "warning: {} {} {}: {} of {} replicates failed",
            r.scenario_id,
            r.estimator,
            r.covariate_set,
            r.failures(),
            r.attempted
        );
    }
}
