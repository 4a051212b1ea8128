//! Estimation on observed data with a gold-standard instrument and one or
//! more error-prone instruments per covariate.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    ate_iptw_wreg, compute_weights, dr_wreg_fit, weighted_smd, AteEstimate,
};
use crate::glm::{fit_logistic, DesignMatrix};
use crate::output::fmt_num;

mod planted;
pub use planted::{PlantedInstrument, PlantedStudy};

/// Column mapping for one covariate: its gold-standard column and the
/// error-prone instruments that measure it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSchema {
    pub name: String,
    pub gold: String,
    /// Instrument label → column.
    #[serde(default)]
    pub instruments: BTreeMap<String, String>,
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySchema {
    pub outcome: String,
    pub treatment: String,
    #[serde(default)]
    pub subgroup: Option<String>,
    /// Label used for the gold-standard instrument in reports.
    #[serde(default = "default_gold_label")]
    pub gold_label: String,
    pub variables: Vec<VariableSchema>,
}

fn default_gold_label() -> String {
    "gold".into()
}

impl StudySchema {
    /// Gold label first, then every instrument label in sorted order.
    pub fn instruments(&self) -> Vec<String> {
        let mut out = vec![self.gold_label.clone()];
        for v in &self.variables {
            for k in v.instruments.keys() {
                if !out.contains(k) {
                    out.push(k.clone());
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::SchemaMismatch("schema declares no covariates".into()));
        }
        for v in &self.variables {
            if v.instruments.contains_key(&self.gold_label) {
                return Err(Error::SchemaMismatch(format!(
                    "variable `{}` uses the gold label `{}` as an instrument name",
                    v.name, self.gold_label
                )));
            }
        }
        Ok(())
    }
}

/// One covariate measurement column after ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub variable: String,
    pub instrument: String,
    pub is_gold: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyFrame {
    pub outcome: Vec<f64>,
    pub treatment: Vec<bool>,
    pub subgroup: Option<Vec<String>>,
    pub measurements: Vec<Measurement>,
    pub variables: Vec<String>,
    pub gold_label: String,
    /// Rows dropped for missing required fields.
    pub dropped: usize,
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "na" | "NaN" | "nan" | "." | "null")
}

pub fn ingest_csv(path: &Path, schema: &StudySchema) -> Result<StudyFrame> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(f, schema)
}

pub fn ingest_reader<R: Read>(input: R, schema: &StudySchema) -> Result<StudyFrame> {
    schema.validate()?;
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);

    // (variable, instrument, is_gold, column, log)
    let mut specs: Vec<(String, String, bool, String, bool)> = Vec::new();
    for v in &schema.variables {
        specs.push((v.name.clone(), schema.gold_label.clone(), true, v.gold.clone(), v.log));
        for (inst, col) in &v.instruments {
            specs.push((v.name.clone(), inst.clone(), false, col.clone(), v.log));
        }
    }
    let mut wanted = vec![schema.outcome.clone(), schema.treatment.clone()];
    wanted.extend(schema.subgroup.iter().cloned());
    wanted.extend(specs.iter().map(|s| s.3.clone()));
    let missing: Vec<&str> = wanted
        .iter()
        .filter(|c| find(c).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaMismatch(format!(
            "columns not found in header: {}",
            missing.join(", ")
        )));
    }
    let y_col = find(&schema.outcome).expect("checked");
    let a_col = find(&schema.treatment).expect("checked");
    let g_col = schema.subgroup.as_deref().and_then(find);
    let m_cols: Vec<usize> = specs.iter().map(|s| find(&s.3).expect("checked")).collect();

    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    let mut subgroup = g_col.map(|_| Vec::new());
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    let mut dropped = 0;

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line()) as usize;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let required = [y_col, a_col]
            .into_iter()
            .chain(g_col)
            .chain(m_cols.iter().copied());
        if required.clone().any(|c| is_missing(field(c))) {
            dropped += 1;
            continue;
        }
        let number = |c: usize, name: &str| -> Result<f64> {
            let s = field(c).trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "line {line}: column `{name}` has non-numeric value `{s}`"
                    ))
                })
        };
        let y = number(y_col, &schema.outcome)?;
        let a = match number(a_col, &schema.treatment)? {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => {
                return Err(Error::SchemaMismatch(format!(
                    "line {line}: treatment `{}` must be 0 or 1, got {v}",
                    schema.treatment
                )))
            }
        };
        let mut row = Vec::with_capacity(specs.len());
        for (s, &c) in specs.iter().zip(&m_cols) {
            let v = number(c, &s.3)?;
            if s.4 {
                if v <= 0.0 {
                    return Err(Error::NonPositiveLog {
                        column: s.3.clone(),
                        line,
                        value: v,
                    });
                }
                row.push(v.ln());
            } else {
                row.push(v);
            }
        }
        outcome.push(y);
        treatment.push(a);
        if let (Some(g), Some(c)) = (subgroup.as_mut(), g_col) {
            g.push(field(c).trim().to_string());
        }
        for (dst, v) in values.iter_mut().zip(row) {
            dst.push(v);
        }
    }

    let measurements = specs
        .into_iter()
        .zip(values)
        .map(|((variable, instrument, is_gold, _, _), values)| Measurement {
            variable,
            instrument,
            is_gold,
            values,
        })
        .collect();
    Ok(StudyFrame {
        outcome,
        treatment,
        subgroup,
        measurements,
        variables: schema.variables.iter().map(|v| v.name.clone()).collect(),
        gold_label: schema.gold_label.clone(),
        dropped,
    })
}

impl StudyFrame {
    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Subgroup levels in order of first appearance.
    pub fn subgroup_levels(&self) -> Vec<String> {
        let mut levels: Vec<String> = Vec::new();
        if let Some(g) = &self.subgroup {
            for v in g {
                if !levels.contains(v) {
                    levels.push(v.clone());
                }
            }
        }
        levels
    }

    /// Rows whose subgroup equals `level`.
    pub fn filter_subgroup(&self, level: &str) -> Result<StudyFrame> {
        let g = self.subgroup.as_ref().ok_or_else(|| {
            Error::SchemaMismatch("no subgroup column was declared".into())
        })?;
        let keep: Vec<usize> = (0..self.n()).filter(|&i| g[i] == level).collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(StudyFrame {
            outcome: pick(&self.outcome),
            treatment: keep.iter().map(|&i| self.treatment[i]).collect(),
            subgroup: Some(vec![level.to_string(); keep.len()]),
            measurements: self
                .measurements
                .iter()
                .map(|m| Measurement {
                    values: pick(&m.values),
                    ..m.clone()
                })
                .collect(),
            variables: self.variables.clone(),
            gold_label: self.gold_label.clone(),
            dropped: 0,
        })
    }

    /// Column for `variable` measured by `instrument`; the gold label
    /// selects the gold column.
    pub fn column(&self, variable: &str, instrument: &str) -> Result<&[f64]> {
        self.measurements
            .iter()
            .find(|m| {
                m.variable == variable
                    && (m.instrument == instrument || (m.is_gold && instrument == self.gold_label))
            })
            .map(|m| m.values.as_slice())
            .ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "no `{instrument}` measurement for variable `{variable}`"
                ))
            })
    }

    pub fn gold(&self, variable: &str) -> Result<&[f64]> {
        self.measurements
            .iter()
            .find(|m| m.variable == variable && m.is_gold)
            .map(|m| m.values.as_slice())
            .ok_or_else(|| Error::SchemaMismatch(format!("no gold column for `{variable}`")))
    }
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::ZeroVariance("correlation of a constant vector".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    x.iter().map(|v| (v - m) / scale).collect()
}

/// `Var(gold) / Var(instrument)` on the analysis scale.
pub fn instrument_reliability(frame: &StudyFrame, variable: &str, instrument: &str) -> Result<f64> {
    let gold = frame.gold(variable)?;
    let inst = frame.column(variable, instrument)?;
    if frame.n() < 2 {
        return Err(Error::ZeroVariance("fewer than two rows".into()));
    }
    let vi = variance(inst);
    if !(vi > 0.0) {
        return Err(Error::ZeroVariance(format!(
            "`{instrument}` measurement of `{variable}` is constant"
        )));
    }
    Ok(variance(gold) / vi)
}

/// Pearson correlation of the errors `W − X` of two variables.
pub fn error_correlation(
    frame: &StudyFrame,
    variables: (&str, &str),
    instrument: &str,
) -> Result<f64> {
    let err = |v: &str| -> Result<Vec<f64>> {
        let g = frame.gold(v)?;
        let w = frame.column(v, instrument)?;
        Ok(w.iter().zip(g).map(|(w, x)| w - x).collect())
    };
    pearson(&err(variables.0)?, &err(variables.1)?)
        .map_err(|_| Error::ZeroVariance(format!("`{instrument}` errors are constant")))
}

/// Results for one subgroup and one instrument choice.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupReport {
    pub subgroup: String,
    pub instrument: String,
    pub n: usize,
    /// IPTW_WREG then DR_WREG.
    pub estimates: Vec<AteEstimate>,
    /// `(variable, reliability)` of the chosen instrument.
    pub reliabilities: Vec<(String, f64)>,
    /// `(variable, SMD)` of the gold columns after weighting.
    pub smd_gold: Vec<(String, f64)>,
    /// `(variable, SMD)` of the gold columns before weighting.
    pub smd_gold_unweighted: Vec<(String, f64)>,
}

/// Propensity model on `instrument`'s covariates, then IPTW and DR
/// regression estimates; balance is always assessed on the gold columns.
pub fn analyze_subgroup(
    frame: &StudyFrame,
    subgroup: &str,
    instrument: &str,
) -> Result<SubgroupReport> {
    let sub = if frame.subgroup.is_some() && subgroup != ALL_ROWS {
        frame.filter_subgroup(subgroup)?
    } else {
        frame.clone()
    };
    if sub.n() == 0 {
        return Err(Error::EmptyGroup("subgroup"));
    }
    if !sub.treatment.iter().any(|&a| a) {
        return Err(Error::EmptyGroup("treated"));
    }
    if sub.treatment.iter().all(|&a| a) {
        return Err(Error::EmptyGroup("control"));
    }
    // Covariates are standardized before fitting. With an intercept in both
    // models, propensities and the treatment coefficient are unchanged, but
    // coefficients stay on a unit scale for raw intakes with large means.
    let cols: Vec<Vec<f64>> = sub
        .variables
        .iter()
        .map(|v| sub.column(v, instrument).map(standardize))
        .collect::<Result<_>>()?;
    let col_refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let design = DesignMatrix::with_intercept(&col_refs)?;
    let fit = fit_logistic(&design, &sub.treatment)?;
    let weights = compute_weights(&fit, &sub.treatment)?;
    let iptw = ate_iptw_wreg(&sub.treatment, &sub.outcome, &weights)?;
    let (dr, _) = dr_wreg_fit(&sub.treatment, &sub.outcome, &weights, &design)?;

    let mut reliabilities = Vec::new();
    let mut smd_gold = Vec::new();
    let mut smd_gold_unweighted = Vec::new();
    let ones = vec![1.0; sub.n()];
    for v in &sub.variables {
        reliabilities.push((v.clone(), instrument_reliability(&sub, v, instrument)?));
        let gold = sub.gold(v)?;
        smd_gold.push((v.clone(), weighted_smd(gold, &sub.treatment, weights.weights())?));
        smd_gold_unweighted.push((v.clone(), weighted_smd(gold, &sub.treatment, &ones)?));
    }
    Ok(SubgroupReport {
        subgroup: subgroup.to_string(),
        instrument: instrument.to_string(),
        n: sub.n(),
        estimates: vec![iptw.labeled(instrument), dr.labeled(instrument)],
        reliabilities,
        smd_gold,
        smd_gold_unweighted,
    })
}

/// Subgroup label used when the frame has no subgroup column.
pub const ALL_ROWS: &str = "all";

/// Every subgroup level (or all rows) × every instrument.
pub fn analyze_all(frame: &StudyFrame, instruments: &[String]) -> Result<Vec<SubgroupReport>> {
    let levels = if frame.subgroup.is_some() {
        frame.subgroup_levels()
    } else {
        vec![ALL_ROWS.to_string()]
    };
    let mut out = Vec::new();
    for level in &levels {
        for inst in instruments {
            out.push(analyze_subgroup(frame, level, inst)?);
        }
    }
    Ok(out)
}

/// Report CSV: one row per subgroup × instrument × estimator.
pub fn write_report<W: Write>(out: W, reports: &[SubgroupReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let vars: Vec<String> = reports
        .first()
        .map(|r| r.reliabilities.iter().map(|(v, _)| v.clone()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = [
        "subgroup",
        "instrument",
        "estimator",
        "estimate",
        "ci_low",
        "ci_high",
        "se",
        "p_value",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(vars.iter().map(|v| format!("reliability_{v}")));
    header.extend(vars.iter().map(|v| format!("smd_gold_{v}")));
    w.write_record(&header)?;
    for r in reports {
        for e in &r.estimates {
            let mut row = vec![
                r.subgroup.clone(),
                r.instrument.clone(),
                e.estimator.to_string(),
                fmt_num(e.estimate),
                fmt_num(e.ci_low),
                fmt_num(e.ci_high),
                fmt_num(e.se),
                fmt_num(e.p_value()),
            ];
            row.extend(r.reliabilities.iter().map(|(_, v)| fmt_num(*v)));
            row.extend(r.smd_gold.iter().map(|(_, v)| fmt_num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Measurement-error summary: reliabilities, gold correlations and error
/// correlations for every subgroup × error-prone instrument.
pub fn write_measurement_summary<W: Write>(
    out: W,
    frame: &StudyFrame,
    instruments: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subgroup", "instrument", "metric", "variables", "value"])?;
    let levels = if frame.subgroup.is_some() {
        frame.subgroup_levels()
    } else {
        vec![ALL_ROWS.to_string()]
    };
    for level in &levels {
        let sub = if frame.subgroup.is_some() {
            frame.filter_subgroup(level)?
        } else {
            frame.clone()
        };
        let vars = &sub.variables;
        for i in 0..vars.len() {
            for j in (i + 1)..vars.len() {
                let r = pearson(sub.gold(&vars[i])?, sub.gold(&vars[j])?)?;
                w.write_record([
                    level.as_str(),
                    sub.gold_label.as_str(),
                    "gold_correlation",
                    &format!("{};{}", vars[i], vars[j]),
                    &fmt_num(r),
                ])?;
            }
        }
        for inst in instruments.iter().filter(|i| **i != sub.gold_label) {
            for v in vars {
                if sub.column(v, inst).is_err() {
                    continue;
                }
                let rel = instrument_reliability(&sub, v, inst)?;
                w.write_record([level.as_str(), inst.as_str(), "reliability", v, &fmt_num(rel)])?;
            }
            for i in 0..vars.len() {
                for j in (i + 1)..vars.len() {
                    if let Ok(r) = error_correlation(&sub, (&vars[i], &vars[j]), inst) {
                        w.write_record([
                            level.as_str(),
                            inst.as_str(),
                            "error_correlation",
                            &format!("{};{}", vars[i], vars[j]),
                            &fmt_num(r),
                        ])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(log: bool) -> StudySchema {
        StudySchema {
            outcome: "y".into(),
            treatment: "a".into(),
            subgroup: Some("sex".into()),
            gold_label: "bio".into(),
            variables: vec![VariableSchema {
                name: "energy".into(),
                gold: "e_bio".into(),
                instruments: [("ffq".to_string(), "e_ffq".to_string())].into(),
                log,
            }],
        }
    }

    #[test]
    fn well_formed_fixture() {
        let csv = "y,a,sex,e_bio,e_ffq\n1.0,1,m,2.0,2.5\n2.0,0,f,3.0,2.0\n0.5,1,f,1.5,1.0\n";
        let f = ingest_reader(csv.as_bytes(), &schema(false)).unwrap();
        assert_eq!(f.n(), 3);
        assert_eq!(f.dropped, 0);
        assert_eq!(f.subgroup_levels(), vec!["m", "f"]);
        assert_eq!(f.column("energy", "ffq").unwrap(), &[2.5, 2.0, 1.0]);
        assert_eq!(f.column("energy", "bio").unwrap(), &[2.0, 3.0, 1.5]);
    }

    #[test]
    fn missing_outcome_dropped() {
        let csv = "y,a,sex,e_bio,e_ffq\n1.0,1,m,2.0,2.5\n,0,f,3.0,2.0\n0.5,1,f,1.5,1.0\n";
        let f = ingest_reader(csv.as_bytes(), &schema(false)).unwrap();
        assert_eq!(f.n(), 2);
        assert_eq!(f.dropped, 1);
    }

    #[test]
    fn log_of_zero_rejected() {
        let csv = "y,a,sex,e_bio,e_ffq\n1.0,1,m,2.0,2.5\n2.0,0,f,3.0,0\n";
        let err = ingest_reader(csv.as_bytes(), &schema(true)).unwrap_err();
        match err {
            Error::NonPositiveLog { column, line, value } => {
                assert_eq!(column, "e_ffq");
                assert_eq!(line, 3);
                assert_eq!(value, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let csv = "y,a,sex,e_bio\n1.0,1,m,2.0\n";
        let err = ingest_reader(csv.as_bytes(), &schema(false)).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(m) if m.contains("e_ffq")));
    }

    #[test]
    fn non_binary_treatment_rejected() {
        let csv = "y,a,sex,e_bio,e_ffq\n1.0,2,m,2.0,2.5\n";
        assert!(ingest_reader(csv.as_bytes(), &schema(false)).is_err());
    }

    fn frame_from(gold: Vec<Vec<f64>>, inst: Vec<Vec<f64>>) -> StudyFrame {
        let n = gold[0].len();
        let mut measurements = Vec::new();
        let names = ["v1", "v2"];
        for (k, (g, w)) in gold.into_iter().zip(inst).enumerate() {
            measurements.push(Measurement {
                variable: names[k].into(),
                instrument: "gold".into(),
                is_gold: true,
                values: g,
            });
            measurements.push(Measurement {
                variable: names[k].into(),
                instrument: "w".into(),
                is_gold: false,
                values: w,
            });
        }
        StudyFrame {
            outcome: vec![0.0; n],
            treatment: (0..n).map(|i| i % 2 == 0).collect(),
            subgroup: None,
            measurements,
            variables: names[..2].iter().map(|s| s.to_string()).collect(),
            gold_label: "gold".into(),
            dropped: 0,
        }
    }

    #[test]
    fn reliability_and_error_correlation_edge_cases() {
        let g1 = vec![1.0, 2.0, 4.0, 3.0];
        let g2 = vec![0.5, 0.1, 0.9, 0.3];
        let f = frame_from(vec![g1.clone(), g2.clone()], vec![g1.clone(), g2.clone()]);
        assert_eq!(instrument_reliability(&f, "v1", "w").unwrap(), 1.0);
        assert_eq!(instrument_reliability(&f, "v1", "gold").unwrap(), 1.0);
        assert!(matches!(
            error_correlation(&f, ("v1", "v2"), "w"),
            Err(Error::ZeroVariance(_))
        ));
        let f = frame_from(vec![g1, g2.clone()], vec![vec![2.0; 4], g2]);
        assert!(matches!(
            instrument_reliability(&f, "v1", "w"),
            Err(Error::ZeroVariance(_))
        ));
    }
}
