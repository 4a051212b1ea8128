//! `analyze`: estimates on a user dataset with gold-standard and
//! error-prone covariate measurements.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use confound_core::analysis::{
    analyze_all, ingest_csv, write_measurement_summary, write_report, StudySchema,
};

use crate::config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// JSON config holding at least the column `schema`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write reliabilities and error correlations per subgroup.
    #[arg(long)]
    pub metrics_output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub input: Option<PathBuf>,
    pub schema: Option<StudySchema>,
    /// Instruments to analyze; defaults to the gold label then every
    /// instrument in the schema.
    pub instruments: Option<Vec<String>>,
    pub output: Option<PathBuf>,
    pub metrics_output: Option<PathBuf>,
}

pub fn run(args: AnalyzeArgs) -> CliResult<()> {
    let cfg: AnalyzeConfig = config::load(Some(&args.config))?;
    let schema = cfg
        .schema
        .ok_or_else(|| CliError::Config("missing field `schema`".into()))?;
    let input = args
        .input
        .or(cfg.input.map(|p| config::relative_to(Some(&args.config), p)))
        .ok_or_else(|| CliError::Config("missing field `input`".into()))?;
    config::require_input(&input)?;
    let base = Some(args.config.as_path());
    let output = args.output.or(cfg.output.map(|p| config::relative_to(base, p)));
    let metrics_output = args
        .metrics_output
        .or(cfg.metrics_output.map(|p| config::relative_to(base, p)));
    for p in output.iter().chain(&metrics_output) {
        config::require_output(p)?;
    }
    let available = schema.instruments();
    let instruments = cfg.instruments.unwrap_or_else(|| available.clone());
    if instruments.is_empty() {
        return Err(CliError::Config("`instruments` is empty".into()));
    }
    if let Some(bad) = instruments.iter().find(|i| !available.contains(i)) {
        return Err(CliError::Config(format!(
            "instrument `{bad}` is not declared in the schema (known: {})",
            available.join(", ")
        )));
    }

    let frame = ingest_csv(&input, &schema)?;
    if frame.dropped > 0 {
        eprintln!("note: dropped {} row(s) with missing values", frame.dropped);
    }
    let reports = analyze_all(&frame, &instruments)?;
    let mut buf = Vec::new();
    write_report(&mut buf, &reports)?;
    config::emit(output.as_ref(), &buf)?;
    if let Some(p) = metrics_output {
        let mut m = Vec::new();
        write_measurement_summary(&mut m, &frame, &instruments)?;
        config::emit(Some(&p), &m)?;
    }
    Ok(())
}
