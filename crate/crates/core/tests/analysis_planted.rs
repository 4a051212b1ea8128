use confound_core::analysis::{
    analyze_subgroup, error_correlation, ingest_reader, instrument_reliability, PlantedInstrument,
    PlantedStudy, StudyFrame,
};
use confound_core::estimators::{EstimatorKind, Z_95};

fn single_group(n: usize, instruments: Vec<PlantedInstrument>) -> PlantedStudy {
    PlantedStudy {
        subgroups: vec!["all".into()],
        n_per_subgroup: n,
        instruments,
        ..PlantedStudy::default()
    }
}

fn frame(study: &PlantedStudy, seed: u64) -> StudyFrame {
    let text = study.to_csv_string(seed).unwrap();
    ingest_reader(text.as_bytes(), &study.schema()).unwrap()
}

fn inst(name: &str, sigma2: f64, error_rho: f64) -> PlantedInstrument {
    PlantedInstrument {
        name: name.into(),
        sigma2,
        error_rho,
    }
}

#[test]
fn planted_reliability_and_error_correlation_recovered() {
    let study = single_group(
        100_000,
        vec![inst("noisy", 1.0, 0.65), inst("independent", 1.0, 0.0)],
    );
    let f = frame(&study, 11);
    for v in ["energy", "protein"] {
        let rel = instrument_reliability(&f, v, "noisy").unwrap();
        assert!((rel - 0.5).abs() < 0.02, "{v}: {rel}");
        assert_eq!(instrument_reliability(&f, v, "biomarker").unwrap(), 1.0);
    }
    let r = error_correlation(&f, ("energy", "protein"), "noisy").unwrap();
    assert!((r - 0.65).abs() < 0.01, "{r}");
    let r0 = error_correlation(&f, ("energy", "protein"), "independent").unwrap();
    assert!(r0.abs() < 3.0 / (100_000f64).sqrt(), "{r0}");
}

#[test]
fn instrument_identical_to_gold_gives_identical_estimates() {
    let study = single_group(2_000, vec![inst("copy", 0.0, 0.0)]);
    let f = frame(&study, 3);
    let gold = analyze_subgroup(&f, "all", "biomarker").unwrap();
    let copy = analyze_subgroup(&f, "all", "copy").unwrap();
    for (g, c) in gold.estimates.iter().zip(&copy.estimates) {
        assert_eq!(g.estimate, c.estimate);
        assert_eq!(g.se, c.se);
    }
}

#[test]
fn gold_weighting_balances_gold_covariates() {
    let study = single_group(100_000, vec![inst("noisy", 1.0, 0.0)]);
    let f = frame(&study, 5);
    let rep = analyze_subgroup(&f, "all", "biomarker").unwrap();
    for ((v, after), (_, before)) in rep.smd_gold.iter().zip(&rep.smd_gold_unweighted) {
        assert!(after.abs() < 0.02, "{v}: {after}");
        assert!(before.abs() > 0.1, "fixture should be confounded: {before}");
    }
}

#[test]
fn report_rows_have_consistent_p_values_and_intervals() {
    let study = PlantedStudy::default();
    let f = frame(&study, 8);
    for level in f.subgroup_levels() {
        for inst in study.schema().instruments() {
            let rep = analyze_subgroup(&f, &level, &inst).unwrap();
            assert_eq!(rep.estimates[0].estimator, EstimatorKind::IptwWreg);
            assert_eq!(rep.estimates[1].estimator, EstimatorKind::DrWreg);
            for e in &rep.estimates {
                let excludes_zero = e.ci_low > 0.0 || e.ci_high < 0.0;
                assert_eq!(e.p_value() < 0.05, excludes_zero, "{e:?}");
                assert!((e.ci_high - e.ci_low - 2.0 * Z_95 * e.se).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn weighting_on_gold_does_not_worsen_balance() {
    let study = single_group(5_000, vec![]);
    for seed in 0..10 {
        let f = frame(&study, seed);
        let rep = analyze_subgroup(&f, "all", "biomarker").unwrap();
        let se = (4.0 / 5_000f64).sqrt();
        for ((_, after), (_, before)) in rep.smd_gold.iter().zip(&rep.smd_gold_unweighted) {
            assert!(after.abs() <= before.abs() + 3.0 * se);
        }
    }
}

#[test]
fn gold_analysis_less_biased_than_degraded_instrument() {
    let study = single_group(1_000, vec![inst("degraded", 1.0, 0.0)]);
    let (mut gold, mut degraded) = (0.0, 0.0);
    for seed in 0..100 {
        let f = frame(&study, 1_000 + seed);
        gold += analyze_subgroup(&f, "all", "biomarker").unwrap().estimates[0].estimate - study.tau;
        degraded +=
            analyze_subgroup(&f, "all", "degraded").unwrap().estimates[0].estimate - study.tau;
    }
    assert!((gold / 100.0).abs() < (degraded / 100.0).abs());
}
