//! `calibrate`: solved coefficient tables.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use confound_core::calibration::{
    calibrated_scenario, solve_design_coefficient, total_confounding, CalibrationOptions,
    TreatmentModel, DEFAULT_ALPHA_FIXED,
};
use confound_core::output::{write_calibration, CalibrationRow};
use confound_core::simgen::Design;

use crate::config::{self, check_grid};
use crate::error::{CliError, CliResult};

pub const DEFAULT_RHO_GRID: [f64; 4] = [0.0, 0.3, 0.6, 0.9];

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Design tag; repeat for several. Defaults to sim1, sim2_rho12, sim2_rho13.
    #[arg(long)]
    pub design: Vec<Design>,
    /// Correlation grid (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub rho: Option<Vec<f64>>,
    #[arg(long)]
    pub target_tc: Option<f64>,
    #[arg(long)]
    pub alpha_fixed: Option<f64>,
    /// Output CSV (stdout if omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub design: Option<Vec<Design>>,
    pub rho: Option<Vec<f64>>,
    pub target_tc: Option<f64>,
    pub alpha_fixed: Option<f64>,
    pub output: Option<PathBuf>,
}

pub fn run(args: CalibrateArgs) -> CliResult<()> {
    let cfg: CalibrateConfig = config::load(args.config.as_deref())?;
    let designs = if !args.design.is_empty() {
        args.design
    } else {
        cfg.design
            .unwrap_or_else(|| vec![Design::Sim1, Design::Sim2Rho12, Design::Sim2Rho13])
    };
    if designs.is_empty() {
        return Err(CliError::Config("`design` list is empty".into()));
    }
    let rho = args.rho.or(cfg.rho).unwrap_or_else(|| DEFAULT_RHO_GRID.to_vec());
    check_grid("rho", &rho, (-1.0, 1.0))?;
    let opts = CalibrationOptions {
        target_tc: args.target_tc.or(cfg.target_tc).unwrap_or(1.0),
        alpha_fixed: args.alpha_fixed.or(cfg.alpha_fixed).unwrap_or(DEFAULT_ALPHA_FIXED),
        ..CalibrationOptions::default()
    };
    if !(opts.target_tc.is_finite() && opts.target_tc > 0.0) {
        return Err(CliError::Config("`target_tc` must be positive".into()));
    }
    let output = args
        .output
        .or(cfg.output.map(|p| config::relative_to(args.config.as_deref(), p)));
    if let Some(p) = &output {
        config::require_output(p)?;
    }

    let rows = calibration_rows(&designs, &rho, &opts)?;
    let mut buf = Vec::new();
    write_calibration(&mut buf, &rows)?;
    config::emit(output.as_ref(), &buf)
}

pub fn calibration_rows(
    designs: &[Design],
    rho: &[f64],
    opts: &CalibrationOptions,
) -> CliResult<Vec<CalibrationRow>> {
    let mut rows = Vec::new();
    for &design in designs {
        for &r in rho {
            let coef = solve_design_coefficient(design, r, opts)?;
            let spec = calibrated_scenario(design, r, 0.0, 1.0, opts)?;
            let achieved =
                total_confounding(&TreatmentModel::from_scenario(&spec)?, &spec.betas)?
                    .total_confounding;
            rows.push(CalibrationRow {
                design: design.to_string(),
                rho: r,
                solved_coefficient: coef,
                total_confounding_achieved: achieved,
            });
        }
    }
    Ok(rows)
}
