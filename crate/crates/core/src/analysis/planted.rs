//! Synthetic nutrition-style studies with known truth: a gold-standard
//! (biomarker) measurement and several error-prone instruments for two
//! log-normal intakes, per subgroup.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;

use super::{StudySchema, VariableSchema};
use crate::error::Result;
use crate::glm::expit;
use crate::output::fmt_num;
use crate::sampling::{standard_normal, SeedSpec};

/// An error-prone instrument: `log W = log X + sd·e` with
/// `e ~ N(0, σ²)` and correlation `error_rho` between the two variables'
/// errors, so its reliability on the log scale is `1 / (1 + σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstrument {
    pub name: String,
    pub sigma2: f64,
    pub error_rho: f64,
}

impl PlantedInstrument {
    pub fn reliability(&self) -> f64 {
        1.0 / (1.0 + self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedStudy {
    pub subgroups: Vec<String>,
    pub n_per_subgroup: usize,
    pub variables: [String; 2],
    /// Means of the log intakes.
    pub log_means: [f64; 2],
    /// Standard deviation shared by both log intakes.
    pub log_sd: f64,
    /// Correlation of the true log intakes.
    pub rho_x: f64,
    pub alpha0: f64,
    /// Treatment log-odds per standardized true intake.
    pub alphas: [f64; 2],
    pub tau: f64,
    /// Outcome slope per standardized true intake.
    pub betas: [f64; 2],
    pub outcome_sd: f64,
    pub instruments: Vec<PlantedInstrument>,
}

impl Default for PlantedStudy {
    /// Two subgroups, energy and protein, and two instruments mimicking a
    /// recall (moderately reliable) and a questionnaire (noisier, with
    /// strongly correlated errors).
    fn default() -> Self {
        Self {
            subgroups: vec!["female".into(), "male".into()],
            n_per_subgroup: 500,
            variables: ["energy".into(), "protein".into()],
            log_means: [7.6, 4.3],
            log_sd: 0.3,
            rho_x: 0.6,
            alpha0: 0.0,
            alphas: [0.8, 0.8],
            tau: 1.0,
            betas: [1.0, 1.0],
            outcome_sd: 1.0,
            instruments: vec![
                PlantedInstrument {
                    name: "recall".into(),
                    sigma2: 0.43,
                    error_rho: 0.3,
                },
                PlantedInstrument {
                    name: "questionnaire".into(),
                    sigma2: 1.0,
                    error_rho: 0.65,
                },
            ],
        }
    }
}

const GOLD_LABEL: &str = "biomarker";

impl PlantedStudy {
    fn column(&self, v: usize, instrument: &str) -> String {
        format!("{}_{}", self.variables[v], instrument)
    }

    /// Schema matching the CSV written by [`PlantedStudy::write_csv`].
    pub fn schema(&self) -> StudySchema {
        StudySchema {
            outcome: "outcome".into(),
            treatment: "treated".into(),
            subgroup: Some("sex".into()),
            gold_label: GOLD_LABEL.into(),
            variables: (0..2)
                .map(|v| VariableSchema {
                    name: self.variables[v].clone(),
                    gold: self.column(v, GOLD_LABEL),
                    instruments: self
                        .instruments
                        .iter()
                        .map(|i| (i.name.clone(), self.column(v, &i.name)))
                        .collect::<BTreeMap<_, _>>(),
                    log: true,
                })
                .collect(),
        }
    }

    /// Writes one seeded draw as CSV (intakes on the original, unlogged
    /// scale).
    pub fn write_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sex".to_string(), "treated".into(), "outcome".into()];
        for v in 0..2 {
            header.push(self.column(v, GOLD_LABEL));
            for inst in &self.instruments {
                header.push(self.column(v, &inst.name));
            }
        }
        w.write_record(&header)?;

        let tail_x = (1.0 - self.rho_x * self.rho_x).sqrt();
        for (g, label) in self.subgroups.iter().enumerate() {
            let seeds = SeedSpec::new(seed, g as u64);
            let mut rng_x = seeds.rng(1);
            let mut rng_a = seeds.rng(2);
            let mut rng_y = seeds.rng(3);
            let mut rng_e = seeds.rng(4);
            for _ in 0..self.n_per_subgroup {
                let z1 = standard_normal(&mut rng_x);
                let z2 = self.rho_x * z1 + tail_x * standard_normal(&mut rng_x);
                let z = [z1, z2];
                let p = expit(self.alpha0 + self.alphas[0] * z1 + self.alphas[1] * z2);
                let a = rng_a.random::<f64>() < p;
                let y = self.tau * f64::from(u8::from(a))
                    + self.betas[0] * z1
                    + self.betas[1] * z2
                    + self.outcome_sd * standard_normal(&mut rng_y);

                let mut row = vec![label.clone(), u8::from(a).to_string(), fmt_num(y)];
                let mut per_var: [Vec<String>; 2] = [Vec::new(), Vec::new()];
                for (v, cells) in per_var.iter_mut().enumerate() {
                    let log_x = self.log_means[v] + self.log_sd * z[v];
                    cells.push(fmt_num(log_x.exp()));
                }
                for inst in &self.instruments {
                    let sd = inst.sigma2.sqrt() * self.log_sd;
                    let u1 = standard_normal(&mut rng_e);
                    let u2 = inst.error_rho * u1
                        + (1.0 - inst.error_rho * inst.error_rho).sqrt() * standard_normal(&mut rng_e);
                    for (v, u) in [u1, u2].into_iter().enumerate() {
                        let log_w = self.log_means[v] + self.log_sd * z[v] + sd * u;
                        per_var[v].push(fmt_num(log_w.exp()));
                    }
                }
                row.extend(per_var.into_iter().flatten());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV text of one seeded draw.
    pub fn to_csv_string(&self, seed: u64) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, seed)?;
        Ok(String::from_utf8(buf).expect("csv writer emits UTF-8"))
    }
}
