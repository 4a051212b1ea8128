//! `report`: charts and a text table from a `simulate` summary CSV.

use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use confound_core::engine::CellSummary;
use confound_core::estimators::EstimatorKind;
use confound_core::output::{fmt_num, read_summaries_file};

use crate::config;
use crate::error::{CliError, CliResult};
use crate::svg;

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Summary CSV written by `simulate`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// SVG chart path.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Markdown table path (stdout if neither this nor `--output` is set).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Covariate sets to keep, e.g. `W1,W2;X1,X2`.
    #[arg(long, value_delimiter = ';', num_args = 1..)]
    pub covariate_sets: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub rho_w: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub covariate_sets: Option<Vec<String>>,
    pub rho_w: Option<Vec<f64>>,
}

pub fn run(args: ReportArgs) -> CliResult<()> {
    let cfg: ReportConfig = config::load(args.config.as_deref())?;
    let base = args.config.as_deref();
    let rel = |p: Option<PathBuf>| p.map(|p| config::relative_to(base, p));
    let input = args
        .input
        .or(rel(cfg.input))
        .ok_or_else(|| CliError::Config("missing `input` summary CSV".into()))?;
    config::require_input(&input)?;
    let output = args.output.or(rel(cfg.output));
    let table = args.table.or(rel(cfg.table));
    for p in output.iter().chain(&table) {
        config::require_output(p)?;
    }
    let estimators = args.estimators.or(cfg.estimators);
    let sets = args.covariate_sets.or(cfg.covariate_sets);
    let rho_w = args.rho_w.or(cfg.rho_w);

    let rows: Vec<CellSummary> = read_summaries_file(&input)?
        .into_iter()
        .filter(|r| estimators.as_ref().is_none_or(|e| e.contains(&r.estimator)))
        .filter(|r| {
            sets.as_ref()
                .is_none_or(|s| s.iter().any(|t| t.trim() == r.covariate_set))
        })
        .filter(|r| {
            rho_w
                .as_ref()
                .is_none_or(|w| w.iter().any(|v| (v - r.rho_w).abs() < 1e-9))
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data("no summary rows match the selection".into()));
    }

    let text = markdown_table(&rows);
    match (&output, &table) {
        (None, None) => config::emit(None, text.as_bytes())?,
        _ => {
            if let Some(p) = &table {
                config::emit(Some(p), text.as_bytes())?;
            }
        }
    }
    if let Some(p) = &output {
        config::emit(Some(p), svg::summary_chart(&rows).as_bytes())?;
    }
    Ok(())
}

pub fn markdown_table(rows: &[CellSummary]) -> String {
    let mut s = String::from(
        "| scenario | estimator | covariates | bias | mc_se | mse | coverage | failures |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let (bias, se, mse, cov) = r.metrics.map_or_else(
            || ("".into(), "".into(), "".into(), "".into()),
            |m| (fmt_num(m.bias), fmt_num(m.mc_se_bias), fmt_num(m.mse), fmt_num(m.coverage)),
        );
        let flag = if r.flagged { " (flagged)" } else { "" };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {bias} | {se} | {mse} | {cov} | {}{flag} |",
            r.scenario_id,
            r.estimator,
            r.covariate_set,
            r.failures()
        );
    }
    s
}
