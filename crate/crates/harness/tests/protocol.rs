use std::collections::BTreeSet;
use std::process::Command;

use psrom_core::LesionKind;
use psrom_harness::report::{read_records, RECORDS_FILE, REPORT_FILE};
use psrom_harness::{
    export_report, generate, run_batch, run_case, CaseOutcome, RunMetadata, SynthConfig, ValidationConfig,
};

#[test]
fn single_focal_lesion_matches_oracle() {
    let synth = SynthConfig { depth: (2, 2), lesions: (1, 1), narrowing: (0.5, 0.5), ..SynthConfig::default() };
    let patient = (0..)
        .map(|case_id| generate(3, case_id, &synth))
        .find(|p| p.labels.len() == 1 && p.labels[0].kind == LesionKind::Focal)
        .unwrap();
    let CaseOutcome::Completed(records) = run_case(&patient, &ValidationConfig::default()) else {
        panic!("case dropped");
    };
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r.lesion_index == 0));
    for r in &records {
        assert!(r.delta.abs() <= 0.02, "{r:?}");
        assert!(r.ffr_oracle >= r.ffr_pre_modification - 1e-9, "{r:?}");
    }
}

#[test]
fn generator_covers_every_lesion_kind() {
    let synth = SynthConfig::default();
    let kinds: BTreeSet<LesionKind> =
        (0..500).flat_map(|case_id| generate(11, case_id, &synth).labels).map(|l| l.kind).collect();
    assert_eq!(kinds, LesionKind::ALL.into_iter().collect());
}

#[test]
fn records_round_trip_through_csv() {
    let config = ValidationConfig::default();
    let batch = run_batch(5, 6, &SynthConfig::default(), &config, psrom_core::ExecutionMode::Parallel);
    assert!(!batch.records.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let meta = RunMetadata { seed: 5, cases: 6, oracle_kappa: 0.7, tol2: 0.02 };
    export_report(dir.path(), &meta, &batch).unwrap();
    let back = read_records(dir.path()).unwrap();
    assert_eq!(back, batch.records);
}

#[test]
fn cli_run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_psrom-harness"))
        .args(["run", "--seed", "2", "--cases", "4", "--stratify", "lesion", "--out"])
        .arg(dir.path())
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join(RECORDS_FILE).exists());
    let report = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    assert!(report.contains("By lesion kind") && report.contains("By FFR range"));

    let status = Command::new(env!("CARGO_BIN_EXE_psrom-harness"))
        .args(["stats", "--stratify", "ffr", "--out"])
        .arg(dir.path())
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
}

#[test]
fn cli_rejects_unknown_stratifier() {
    let output =
        Command::new(env!("CARGO_BIN_EXE_psrom-harness")).args(["stats", "--stratify", "vessel"]).output().unwrap();
    assert!(!output.status.success());
}
