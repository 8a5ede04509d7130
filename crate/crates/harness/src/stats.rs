//! Agreement statistics between reduced-model and ground-truth FFR.

use std::fmt;

use psrom_core::LesionKind;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use statrs::statistics::Statistics;

use crate::validation::ComparisonRecord;

/// Equivalence margin on the mean difference.
pub const BIAS_MARGIN: f64 = 0.01;
/// Null-hypothesis standard deviation for the variance test.
pub const SD_MARGIN: f64 = 0.02;
pub const SIGNIFICANCE: f64 = 0.05;

/// `[lower, upper)` edges; the last bucket is closed.
pub const FFR_BUCKETS: [(f64, f64); 6] = [(0.0, 0.7), (0.7, 0.75), (0.75, 0.8), (0.8, 0.85), (0.85, 0.9), (0.9, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratifier {
    None,
    Lesion,
    Ffr,
}

impl Stratifier {
    pub const ALL: [Stratifier; 3] = [Stratifier::None, Stratifier::Lesion, Stratifier::Ffr];

    pub fn as_str(self) -> &'static str {
        match self {
            Stratifier::None => "none",
            Stratifier::Lesion => "lesion",
            Stratifier::Ffr => "ffr",
        }
    }

    /// Stratum labels in report order.
    pub fn strata(self) -> Vec<String> {
        match self {
            Stratifier::None => vec!["all".into()],
            Stratifier::Lesion => LesionKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            Stratifier::Ffr => FFR_BUCKETS.iter().map(|&b| bucket_label(b)).collect(),
        }
    }

    pub fn stratum_of(self, record: &ComparisonRecord) -> Option<String> {
        match self {
            Stratifier::None => Some("all".into()),
            Stratifier::Lesion => Some(record.lesion_kind.as_str().into()),
            Stratifier::Ffr => ffr_bucket(record.ffr_psrom).map(bucket_label),
        }
    }
}

impl fmt::Display for Stratifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stratifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stratifier::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown stratifier {s}"))
    }
}

fn bucket_label((lo, hi): (f64, f64)) -> String {
    if hi >= 1.0 {
        format!("[{lo:.2},{hi:.2}]")
    } else {
        format!("[{lo:.2},{hi:.2})")
    }
}

/// Values above 1 are clamped into the top bucket.
pub fn ffr_bucket(ffr: f64) -> Option<(f64, f64)> {
    let ffr = ffr.min(1.0);
    FFR_BUCKETS.iter().copied().find(|&(lo, hi)| ffr >= lo && (ffr < hi || hi >= 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub stratum: String,
    pub n: usize,
    pub bias: f64,
    pub standard_deviation: f64,
    pub bias_ci95: (f64, f64),
    pub pearson_r: f64,
    pub pearson_ci95: (f64, f64),
    pub limits_of_agreement: (f64, f64),
    pub tost_p: f64,
    pub chisq_p: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl StatsSummary {
    /// Both margins met and both tests significant.
    pub fn equivalent(&self) -> bool {
        self.bias.abs() <= BIAS_MARGIN
            && self.standard_deviation <= SD_MARGIN
            && self.tost_p < SIGNIFICANCE
            && self.chisq_p < SIGNIFICANCE
    }
}

/// Two one-sided t-tests on the mean against `±margin`; the larger p.
pub fn tost_p(mean: f64, sd: f64, n: usize, margin: f64) -> f64 {
    if sd == 0.0 {
        return if mean.abs() < margin { 0.0 } else { 1.0 };
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n ≥ 2");
    let se = sd / (n as f64).sqrt();
    let p_lower = 1.0 - t.cdf((mean + margin) / se);
    let p_upper = t.cdf((mean - margin) / se);
    p_lower.max(p_upper)
}

/// Lower-tail test of H₀: σ ≥ `sigma0`.
pub fn chisq_p(sd: f64, n: usize, sigma0: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let stat = (n - 1) as f64 * sd * sd / (sigma0 * sigma0);
    ChiSquared::new((n - 1) as f64).expect("n ≥ 2").cdf(stat)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (x.mean(), y.mean());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Fisher-z interval; undefined below four pairs.
fn pearson_ci(r: f64, n: usize) -> (f64, f64) {
    if n < 4 || !r.is_finite() || r.abs() >= 1.0 {
        return (f64::NAN, f64::NAN);
    }
    let z = r.atanh();
    let half = Normal::standard().inverse_cdf(1.0 - SIGNIFICANCE / 2.0) / ((n - 3) as f64).sqrt();
    ((z - half).tanh(), (z + half).tanh())
}

/// `None` below two records.
pub fn summarize(stratum: impl Into<String>, records: &[&ComparisonRecord]) -> Option<StatsSummary> {
    let n = records.len();
    if n < 2 {
        return None;
    }
    let delta: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let oracle: Vec<f64> = records.iter().map(|r| r.ffr_oracle).collect();
    let psrom: Vec<f64> = records.iter().map(|r| r.ffr_psrom).collect();
    let bias = delta.iter().mean();
    let sd = delta.iter().std_dev();
    let t_crit = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n ≥ 2").inverse_cdf(1.0 - SIGNIFICANCE / 2.0);
    let half = t_crit * sd / (n as f64).sqrt();
    let r = pearson(&oracle, &psrom);
    let var_oracle = oracle.iter().variance();
    let slope = oracle.iter().covariance(psrom.iter()) / var_oracle;
    let intercept = psrom.iter().mean() - slope * oracle.iter().mean();
    Some(StatsSummary {
        stratum: stratum.into(),
        n,
        bias,
        standard_deviation: sd,
        bias_ci95: (bias - half, bias + half),
        pearson_r: r,
        pearson_ci95: pearson_ci(r, n),
        limits_of_agreement: (bias - 1.96 * sd, bias + 1.96 * sd),
        tost_p: tost_p(bias, sd, n, BIAS_MARGIN),
        chisq_p: chisq_p(sd, n, SD_MARGIN),
        slope,
        intercept,
    })
}

/// One summary per stratum with at least two records; notes for the rest.
pub fn compute_stats(records: &[ComparisonRecord], stratifier: Stratifier) -> (Vec<StatsSummary>, Vec<String>) {
    let mut summaries = Vec::new();
    let mut notes = Vec::new();
    for stratum in stratifier.strata() {
        let members: Vec<&ComparisonRecord> =
            records.iter().filter(|r| stratifier.stratum_of(r).as_deref() == Some(stratum.as_str())).collect();
        match summarize(stratum.clone(), &members) {
            Some(s) => summaries.push(s),
            None => notes.push(format!("{stratifier} stratum {stratum}: {} record(s), omitted", members.len())),
        }
    }
    (summaries, notes)
}
