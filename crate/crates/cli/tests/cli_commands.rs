use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use confound_core::analysis::{PlantedInstrument, PlantedStudy};
use confound_core::output::{read_summaries, SUMMARY_HEADER};

const FIXTURE_SEED: u64 = 2024;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_confound-forge"));
    c.env_remove("CONFOUND_FORGE_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_fixture_matches_generator() {
    let text = PlantedStudy::default().to_csv_string(FIXTURE_SEED).unwrap();
    let path = fixtures().join("open_like.csv");
    if std::env::var_os("BLESS_FIXTURE").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    assert_eq!(std::fs::read_to_string(path).unwrap(), text);
}

#[test]
fn bundled_fixture_report_has_twelve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let cfg = fixtures().join("open_like.json");
    let input = fixtures().join("open_like.csv");
    let o = run(&["analyze", "--config", s(&cfg), "--input", s(&input), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "subgroup",
            "instrument",
            "estimator",
            "estimate",
            "ci_low",
            "ci_high",
            "se",
            "p_value",
            "reliability_energy",
            "reliability_protein",
            "smd_gold_energy",
            "smd_gold_protein"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    let subgroups: std::collections::BTreeSet<_> = rows.iter().map(|r| r[0].to_string()).collect();
    let instruments: std::collections::BTreeSet<_> = rows.iter().map(|r| r[1].to_string()).collect();
    assert_eq!(subgroups.len(), 2);
    assert_eq!(instruments.len(), 3);
    for r in &rows {
        let f = |i: usize| r[i].parse::<f64>().unwrap();
        assert_eq!(f(7) < 0.05, f(4) > 0.0 || f(5) < 0.0);
    }
}

#[test]
fn instruments_equal_to_gold_give_identical_estimates() {
    let study = PlantedStudy {
        instruments: vec![
            PlantedInstrument {
                name: "copy_a".into(),
                sigma2: 0.0,
                error_rho: 0.0,
            },
            PlantedInstrument {
                name: "copy_b".into(),
                sigma2: 0.0,
                error_rho: 0.5,
            },
        ],
        ..PlantedStudy::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, study.to_csv_string(3).unwrap()).unwrap();
    let cfg = dir.path().join("c.json");
    let body = serde_json::json!({ "input": data, "schema": study.schema() });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&["analyze", "--config", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    for group in rows.chunks(6) {
        for k in 0..2 {
            let estimates: Vec<&str> = (0..3).map(|i| &group[2 * i + k][3]).collect();
            assert!(estimates.windows(2).all(|w| w[0] == w[1]), "{estimates:?}");
        }
    }
}

#[test]
fn missing_schema_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"input": "x.csv", "schema": {"treatment": "a", "variables": []}}"#,
    )
    .unwrap();
    let o = run(&["analyze", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("outcome"));
}

#[test]
fn missing_data_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "outcome,treated,sex\n1,0,f\n").unwrap();
    let cfg = fixtures().join("open_like.json");
    let o = run(&["analyze", "--config", s(&cfg), "--input", s(&data)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("energy_biomarker"));
}

#[test]
fn empty_rho_grid_creates_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"design": ["sim1"], "rho": []}"#).unwrap();
    let out = dir.path().join("cal.csv");
    let o = run(&["calibrate", "--config", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"design": "sim1", "reps": 10}"#).unwrap();
    let o = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field `reps`"));
}

#[test]
fn missing_output_directory_fails_before_running() {
    let o = run(&["simulate", "--reps", "5", "-o", "/no/such/dir/out.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn minimal_cell_config_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("s.csv");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "design": "sim1",
            "rho_x": [0.3],
            "rho_w": [0.2],
            "sigma2_w": [0.43],
            "n": 300,
            "replicates": 20,
            "seed": 4,
            "covariate_sets": ["W1,W2"],
            "estimators": ["IPTW_WREG", "IPTW_HAJEK", "DR_WREG", "DR_AIPW"],
            "output": out,
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SUMMARY_HEADER.join(","));
    assert_eq!(lines.count(), 4);

    let rows = read_summaries(text.as_bytes()).unwrap();
    let hajek = rows[1].metrics.unwrap().bias;
    let wreg = rows[0].metrics.unwrap().bias;
    assert!((hajek - wreg).abs() < 1e-9);

    let svg = dir.path().join("r.svg");
    let table = dir.path().join("t.md");
    let o = run(&["report", "--input", s(&out), "-o", s(&svg), "--table", s(&table)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 6);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"rho_x": [0.0, 0.3], "replicates": 3, "n": 200, "sigma2_w": [1]}"#)
        .unwrap();
    let o = run(&["simulate", "--config", s(&cfg), "--rho-x", "0.6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_summaries(o.stdout.as_slice()).unwrap();
    assert!(rows.iter().all(|r| r.rho_x == 0.6));
    assert_eq!(rows.len(), 4);
}

#[test]
fn workers_env_var_does_not_change_bytes() {
    let args = ["simulate", "--rho-x", "0.3", "--sigma2-w", "1", "--reps", "12", "--n", "200"];
    let plain = run(&args);
    let with_env = bin()
        .args(args)
        .env("CONFOUND_FORGE_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&plain), 0);
    assert_eq!(plain.stdout, with_env.stdout);
}

#[test]
fn calibrate_defaults_match_published_tables() {
    let o = run(&["calibrate"]);
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    let expected = [0.569, 0.423, 0.336, 0.279, 2.0, 1.538, 1.248, 1.05];
    for (r, e) in rows.iter().zip(expected) {
        let v: f64 = r[2].parse().unwrap();
        assert!((v - e).abs() < 0.01, "{r:?}");
    }
}

#[test]
fn non_positive_log_value_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = PlantedStudy::default().to_csv_string(1).unwrap();
    let first_row_end = text.find('\n').unwrap() + 1;
    let second = text[first_row_end..].find('\n').unwrap() + first_row_end;
    let row: Vec<&str> = text[first_row_end..second].split(',').collect();
    let mut patched = row.clone();
    patched[3] = "0";
    text.replace_range(first_row_end..second, &patched.join(","));
    std::fs::write(&data, text).unwrap();
    let o = run(&["analyze", "--config", s(&fixtures().join("open_like.json")), "--input", s(&data)]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("energy_biomarker") && err.contains("line 2"), "{err}");
}
