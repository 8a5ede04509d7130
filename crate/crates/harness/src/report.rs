//! Report files. Everything except `runtimes.csv` and
//! `runtime_histogram.csv` is a pure function of the seed and configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use psrom_core::LesionKind;
use serde::{Deserialize, Serialize};

use crate::stats::{compute_stats, StatsSummary, Stratifier, BIAS_MARGIN, SD_MARGIN};
use crate::validation::{BatchResult, ComparisonRecord};
use crate::Result;

pub const RECORDS_FILE: &str = "records.csv";
pub const DROPPED_FILE: &str = "dropped.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const RUNTIMES_FILE: &str = "runtimes.csv";
pub const HISTOGRAM_FILE: &str = "runtime_histogram.csv";

/// Histogram bin edges, milliseconds; the last bin is open.
pub const RUNTIME_BINS_MS: [f64; 11] = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 250.0];

pub fn summary_file(stratifier: Stratifier) -> String {
    format!("summary_{stratifier}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    case_id: usize,
    lesion_index: usize,
    lesion_kind: LesionKind,
    point_id: usize,
    ffr_oracle: f64,
    ffr_psrom: f64,
    delta: f64,
    ffr_pre_modification: f64,
    overshoot: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuntimeRow {
    case_id: usize,
    lesion_index: usize,
    runtime_s: f64,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    stratum: &'a str,
    n: usize,
    bias: f64,
    sd: f64,
    bias_ci_low: f64,
    bias_ci_high: f64,
    pearson_r: f64,
    r_ci_low: f64,
    r_ci_high: f64,
    loa_low: f64,
    loa_high: f64,
    tost_p: f64,
    chisq_p: f64,
    slope: f64,
    intercept: f64,
    equivalent: bool,
}

impl<'a> From<&'a StatsSummary> for SummaryRow<'a> {
    fn from(s: &'a StatsSummary) -> Self {
        SummaryRow {
            stratum: &s.stratum,
            n: s.n,
            bias: s.bias,
            sd: s.standard_deviation,
            bias_ci_low: s.bias_ci95.0,
            bias_ci_high: s.bias_ci95.1,
            pearson_r: s.pearson_r,
            r_ci_low: s.pearson_ci95.0,
            r_ci_high: s.pearson_ci95.1,
            loa_low: s.limits_of_agreement.0,
            loa_high: s.limits_of_agreement.1,
            tost_p: s.tost_p,
            chisq_p: s.chisq_p,
            slope: s.slope,
            intercept: s.intercept,
            equivalent: s.equivalent(),
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

const RECORD_HEADER: [&str; 9] = [
    "case_id",
    "lesion_index",
    "lesion_kind",
    "point_id",
    "ffr_oracle",
    "ffr_psrom",
    "delta",
    "ffr_pre_modification",
    "overshoot",
];

const SUMMARY_HEADER: [&str; 16] = [
    "stratum",
    "n",
    "bias",
    "sd",
    "bias_ci_low",
    "bias_ci_high",
    "pearson_r",
    "r_ci_low",
    "r_ci_high",
    "loa_low",
    "loa_high",
    "tost_p",
    "chisq_p",
    "slope",
    "intercept",
    "equivalent",
];

pub fn write_records(dir: &Path, records: &[ComparisonRecord]) -> Result<PathBuf> {
    let path = dir.join(RECORDS_FILE);
    let rows = records.iter().map(|r| RecordRow {
        case_id: r.case_id,
        lesion_index: r.lesion_index,
        lesion_kind: r.lesion_kind,
        point_id: r.point_id,
        ffr_oracle: r.ffr_oracle,
        ffr_psrom: r.ffr_psrom,
        delta: r.delta,
        ffr_pre_modification: r.ffr_pre_modification,
        overshoot: r.overshoot,
    });
    write_rows(&path, rows, &RECORD_HEADER)?;
    Ok(path)
}

/// Records with runtimes joined back in from `runtimes.csv` when present.
pub fn read_records(dir: &Path) -> Result<Vec<ComparisonRecord>> {
    let mut runtimes = BTreeMap::new();
    let runtime_path = dir.join(RUNTIMES_FILE);
    if runtime_path.exists() {
        for row in csv::Reader::from_path(&runtime_path)?.deserialize() {
            let row: RuntimeRow = row?;
            runtimes.insert((row.case_id, row.lesion_index), row.runtime_s);
        }
    }
    let mut records = Vec::new();
    for row in csv::Reader::from_path(dir.join(RECORDS_FILE))?.deserialize() {
        let r: RecordRow = row?;
        records.push(ComparisonRecord {
            case_id: r.case_id,
            lesion_index: r.lesion_index,
            lesion_kind: r.lesion_kind,
            point_id: r.point_id,
            ffr_oracle: r.ffr_oracle,
            ffr_psrom: r.ffr_psrom,
            delta: r.delta,
            ffr_pre_modification: r.ffr_pre_modification,
            psrom_runtime: runtimes.get(&(r.case_id, r.lesion_index)).copied().unwrap_or(f64::NAN),
            overshoot: r.overshoot,
        });
    }
    Ok(records)
}

pub fn write_summaries(dir: &Path, stratifier: Stratifier, summaries: &[StatsSummary]) -> Result<PathBuf> {
    let path = dir.join(summary_file(stratifier));
    write_rows(&path, summaries.iter().map(SummaryRow::from), &SUMMARY_HEADER)?;
    Ok(path)
}

pub fn write_dropped(dir: &Path, dropped: &[(usize, String)]) -> Result<PathBuf> {
    let path = dir.join(DROPPED_FILE);
    write_rows(&path, dropped.iter(), &["case_id", "reason"])?;
    Ok(path)
}

/// One runtime per reduced-model solve (records share the solve of their lesion).
pub fn solve_runtimes(records: &[ComparisonRecord]) -> Vec<((usize, usize), f64)> {
    let unique: BTreeMap<(usize, usize), f64> =
        records.iter().map(|r| ((r.case_id, r.lesion_index), r.psrom_runtime)).collect();
    unique.into_iter().collect()
}

pub fn runtime_histogram(runtimes_s: &[f64]) -> Vec<(f64, f64, usize)> {
    let edges = RUNTIME_BINS_MS;
    (0..edges.len())
        .map(|i| {
            let lo = edges[i];
            let hi = edges.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let count = runtimes_s.iter().filter(|&&t| t * 1e3 >= lo && t * 1e3 < hi).count();
            (lo, hi, count)
        })
        .collect()
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn write_timing(dir: &Path, records: &[ComparisonRecord]) -> Result<Vec<PathBuf>> {
    let runtimes = solve_runtimes(records);
    let runtime_path = dir.join(RUNTIMES_FILE);
    write_rows(
        &runtime_path,
        runtimes.iter().map(|&((case_id, lesion_index), runtime_s)| RuntimeRow { case_id, lesion_index, runtime_s }),
        &["case_id", "lesion_index", "runtime_s"],
    )?;
    let values: Vec<f64> = runtimes.iter().map(|(_, t)| *t).collect();
    let histogram_path = dir.join(HISTOGRAM_FILE);
    write_rows(&histogram_path, runtime_histogram(&values), &["bin_low_ms", "bin_high_ms", "count"])?;
    Ok(vec![runtime_path, histogram_path])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub cases: usize,
    pub oracle_kappa: f64,
    pub tol2: f64,
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "n/a".into()
    }
}

fn table(out: &mut String, title: &str, summaries: &[StatsSummary], notes: &[String]) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:<14} {:>5} {:>8} {:>8} {:>19} {:>8} {:>17} {:>8} {:>8} {:>5}",
        "stratum", "n", "bias", "sd", "bias 95% CI", "r", "limits", "tost_p", "chisq_p", "equiv"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>8.4} {:>8.4} {:>19} {:>8} {:>17} {:>8.4} {:>8.4} {:>5}",
            s.stratum,
            s.n,
            s.bias,
            s.standard_deviation,
            format!("[{:.4}, {:.4}]", s.bias_ci95.0, s.bias_ci95.1),
            fmt_opt(s.pearson_r),
            format!("[{:.4}, {:.4}]", s.limits_of_agreement.0, s.limits_of_agreement.1),
            s.tost_p,
            s.chisq_p,
            if s.equivalent() { "yes" } else { "no" },
        );
    }
    for note in notes {
        let _ = writeln!(out, "  note: {note}");
    }
    let _ = writeln!(out);
}

pub fn render_report(meta: &RunMetadata, batch: &BatchResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "PSROM desk-scale validation report");
    let _ = writeln!(
        out,
        "Ground truth: steady nonlinear 1D network oracle (viscous and convective segment losses, passive \
         resistance outlets). This replaces 3D CFD; agreement is measured within one model family."
    );
    let _ = writeln!(
        out,
        "seed {}  cases {}  oracle kappa {}  tol2 {}  completed {}  dropped {}  records {}",
        meta.seed,
        meta.cases,
        meta.oracle_kappa,
        meta.tol2,
        meta.cases - batch.dropped.len(),
        batch.dropped.len(),
        batch.records.len()
    );
    let _ = writeln!(out, "equivalence margins: |bias| <= {BIAS_MARGIN}, sd <= {SD_MARGIN}, alpha 0.05");
    let overshoot = batch.records.iter().filter(|r| r.overshoot).count();
    let _ = writeln!(out, "records flagged for FFR > 1 (pressure recovery): {overshoot}");
    let _ = writeln!(out);
    for (stratifier, title) in [
        (Stratifier::None, "Overall"),
        (Stratifier::Lesion, "By lesion kind"),
        (Stratifier::Ffr, "By FFR range (reduced model)"),
    ] {
        let (summaries, notes) = compute_stats(&batch.records, stratifier);
        table(&mut out, title, &summaries, &notes);
    }
    for (case_id, reason) in &batch.dropped {
        let _ = writeln!(out, "dropped case {case_id}: {reason}");
    }
    out
}

/// All report files: records, the three summaries, dropped cases, the text
/// report, and (separately, not reproducible) the runtime tables.
pub fn export_report(dir: &Path, meta: &RunMetadata, batch: &BatchResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = vec![write_records(dir, &batch.records)?];
    for stratifier in Stratifier::ALL {
        let (summaries, _) = compute_stats(&batch.records, stratifier);
        written.push(write_summaries(dir, stratifier, &summaries)?);
    }
    written.push(write_dropped(dir, &batch.dropped)?);
    let report_path = dir.join(REPORT_FILE);
    fs::write(&report_path, render_report(meta, batch))?;
    written.push(report_path);
    written.extend(write_timing(dir, &batch.records)?);
    Ok(written)
}
