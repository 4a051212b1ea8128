//! CSV formats: simulation summaries (written by `simulate`, read back by
//! `report` and `verify-trends`) and calibration tables. Numbers are
//! written with 10 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use crate::engine::{CellMetrics, CellSummary};
use crate::error::{Error, Result};

/// `x` with 10 significant digits, trailing zeros trimmed; scientific
/// notation outside `[1e-5, 1e10)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

pub const SUMMARY_HEADER: [&str; 17] = [
    "scenario_id",
    "design",
    "rho_x",
    "rho_w",
    "reliability",
    "n",
    "tau",
    "estimator",
    "covariate_set",
    "bias",
    "mse",
    "coverage",
    "mc_se_bias",
    "mean_se",
    "replicates",
    "failures",
    "flagged",
];

pub fn write_summaries<W: Write>(out: W, rows: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let m = r.metrics;
        let metric = |f: fn(&CellMetrics) -> f64| m.as_ref().map_or(String::new(), |m| fmt_num(f(m)));
        w.write_record([
            r.scenario_id.clone(),
            r.design.clone(),
            fmt_num(r.rho_x),
            fmt_num(r.rho_w),
            fmt_num(r.reliability),
            r.n.to_string(),
            fmt_num(r.tau),
            r.estimator.to_string(),
            r.covariate_set.clone(),
            metric(|m| m.bias),
            metric(|m| m.mse),
            metric(|m| m.coverage),
            metric(|m| m.mc_se_bias),
            metric(|m| m.mean_se),
            m.map_or(0, |m| m.replicates).to_string(),
            r.failures().to_string(),
            u8::from(r.flagged).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summaries_file(path: &Path, rows: &[CellSummary]) -> Result<()> {
    let mut buf = Vec::new();
    write_summaries(&mut buf, rows)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn parse_f64(field: &str, column: &str, line: u64) -> Result<f64> {
    field.trim().parse().map_err(|_| {
        Error::SchemaMismatch(format!("line {line}: `{field}` in column {column} is not a number"))
    })
}

pub fn read_summaries<R: Read>(input: R) -> Result<Vec<CellSummary>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let missing: Vec<&str> = SUMMARY_HEADER
        .iter()
        .copied()
        .filter(|h| !header.iter().any(|c| c == *h))
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaMismatch(format!(
            "summary CSV lacks columns: {}",
            missing.join(", ")
        )));
    }
    let idx = |name: &str| header.iter().position(|c| c == name).expect("checked");
    let cols: Vec<usize> = SUMMARY_HEADER.iter().map(|h| idx(h)).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |k: usize| rec.get(cols[k]).unwrap_or("");
        let num = |k: usize| parse_f64(get(k), SUMMARY_HEADER[k], line);
        let int = |k: usize| -> Result<usize> {
            get(k).trim().parse().map_err(|_| {
                Error::SchemaMismatch(format!("line {line}: bad integer in {}", SUMMARY_HEADER[k]))
            })
        };
        let replicates = int(14)?;
        let failures = int(15)?;
        let metrics = if get(9).is_empty() {
            None
        } else {
            Some(CellMetrics {
                bias: num(9)?,
                mse: num(10)?,
                coverage: num(11)?,
                mc_se_bias: num(12)?,
                mean_se: num(13)?,
                replicates,
                failures,
            })
        };
        rows.push(CellSummary {
            scenario_id: get(0).to_string(),
            design: get(1).to_string(),
            rho_x: num(2)?,
            rho_w: num(3)?,
            reliability: num(4)?,
            n: int(5)?,
            tau: num(6)?,
            estimator: get(7).parse()?,
            covariate_set: get(8).to_string(),
            metrics,
            attempted: replicates + failures,
            flagged: get(16).trim() == "1",
        });
    }
    Ok(rows)
}

pub fn read_summaries_file(path: &Path) -> Result<Vec<CellSummary>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_summaries(f)
}

/// One solved coefficient of a calibration table.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub design: String,
    pub rho: f64,
    pub solved_coefficient: f64,
    pub total_confounding_achieved: f64,
}

pub fn write_calibration<W: Write>(out: W, rows: &[CalibrationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "rho", "solved_coefficient", "total_confounding_achieved"])?;
    for r in rows {
        w.write_record([
            r.design.clone(),
            fmt_num(r.rho),
            fmt_num(r.solved_coefficient),
            fmt_num(r.total_confounding_achieved),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;
    use proptest::prelude::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_num(123456.789012345), "123456.789");
        assert_eq!(fmt_num(9.99999999999), "10");
        assert_eq!(fmt_num(1.5e-7), "1.5e-7");
        assert_eq!(fmt_num(2.0e12), "2e12");
        assert_eq!(fmt_num(-1e-12), "-1e-12");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn formatted_numbers_round_trip_to_ten_digits(x in -1e12f64..1e12) {
            let back: f64 = fmt_num(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn summaries_round_trip() {
        let rows = vec![
            CellSummary {
                scenario_id: "a".into(),
                design: "sim1".into(),
                rho_x: 0.3,
                rho_w: 0.0,
                reliability: 0.5,
                n: 1000,
                tau: 2.0,
                estimator: EstimatorKind::IptwWreg,
                covariate_set: "W1,W2".into(),
                metrics: Some(CellMetrics {
                    bias: 0.25,
                    mse: 0.0725,
                    coverage: 0.9,
                    mc_se_bias: 0.005,
                    mean_se: 0.1,
                    replicates: 199,
                    failures: 1,
                }),
                attempted: 200,
                flagged: false,
            },
            CellSummary {
                scenario_id: "b".into(),
                design: "sim1".into(),
                rho_x: 0.9,
                rho_w: 0.8,
                reliability: 0.7,
                n: 1000,
                tau: 2.0,
                estimator: EstimatorKind::DrWreg,
                covariate_set: "X1,X2".into(),
                metrics: None,
                attempted: 5,
                flagged: true,
            },
        ];
        let mut buf = Vec::new();
        write_summaries(&mut buf, &rows).unwrap();
        let back = read_summaries(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn missing_columns_reported() {
        let err = read_summaries("scenario_id,design\na,b\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(m) if m.contains("rho_x")));
    }
}
