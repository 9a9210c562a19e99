//! Validation report: per-cycle error rows and the summary built from them.

use gaitradar::events::{EventKind, MatchReport};
use gaitradar::params::{Parameter, StrideRecord};
use gaitradar::stats::{self, AgreementSummary, Factor, GroupComparison};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrialConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Error of one parameter on one paired gait cycle; a row of `errors.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleError {
    pub test: String,
    pub configuration: String,
    pub parameter: String,
    pub foot: String,
    pub cycle_start_s: f64,
    pub reference: f64,
    pub estimate: f64,
    pub abs_error: f64,
    pub rel_error: Option<f64>,
}

/// Error rows of every parameter for a test's (reference, estimate) pairs.
pub fn cycle_errors(test: &str, configuration: &str, pairs: &[(StrideRecord, StrideRecord)]) -> Vec<CycleError> {
    let mut rows = Vec::new();
    for p in Parameter::ALL {
        for (reference, estimate) in pairs {
            let (Some(r), Some(e)) = (reference.get(p), estimate.get(p)) else {
                continue;
            };
            let (abs_error, rel_error) = stats::error_metrics(r, e);
            rows.push(CycleError {
                test: test.into(),
                configuration: configuration.into(),
                parameter: p.name().into(),
                foot: foot_label(reference.foot),
                cycle_start_s: reference.start,
                reference: r,
                estimate: e,
                abs_error,
                rel_error,
            });
        }
    }
    rows
}

pub fn foot_label(foot: gaitradar::events::Foot) -> String {
    serde_json::to_value(foot)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical configuration (local paths removed).
    pub config_sha256: String,
    pub seed: u64,
    pub gaitradar_version: String,
    pub report_schema: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub name: String,
    pub cycles: usize,
    pub paired_cycles: usize,
    pub truth_hs: usize,
    pub matched_hs: usize,
    pub hs_detection_ratio: f64,
    pub false_detections: usize,
    pub low_snr_segments: usize,
    pub mean_hs_offset_s: Option<f64>,
    pub mean_to_offset_s: Option<f64>,
}

impl TestSummary {
    pub fn new(name: &str, cycles: usize, paired_cycles: usize, low_snr: usize, m: &MatchReport) -> Self {
        Self {
            name: name.into(),
            cycles,
            paired_cycles,
            truth_hs: m.truth_hs,
            matched_hs: m.matched_hs,
            hs_detection_ratio: m.hs_detection_ratio,
            false_detections: m.false_detections.len(),
            low_snr_segments: low_snr,
            mean_hs_offset_s: m.mean_dt(EventKind::HeelStrike),
            mean_to_offset_s: m.mean_dt(EventKind::ToeOff),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrors {
    /// Test name, or absent for the pooled row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
    pub parameter: String,
    pub unit: String,
    pub n: usize,
    pub mean_abs_error: f64,
    pub mean_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterComparison {
    pub parameter: String,
    pub tests: Vec<String>,
    #[serde(flatten)]
    pub comparison: GroupComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterAgreement {
    pub parameter: String,
    pub unit: String,
    #[serde(flatten)]
    pub summary: AgreementSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub configuration: String,
    pub snr_db: f64,
    pub tests: Vec<TestSummary>,
    /// Pooled over every test.
    pub errors: Vec<ParameterErrors>,
    pub per_test_errors: Vec<ParameterErrors>,
    /// Kruskal-Wallis of the absolute errors across tests.
    pub group_comparisons: Vec<ParameterComparison>,
    pub agreement: Vec<ParameterAgreement>,
}

pub fn config_hash(cfg: &TrialConfig) -> String {
    let json = serde_json::to_vec(&cfg.canonical()).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

/// Mean absolute and relative error of `rows`, summed in row order.
pub fn summarize(test: Option<&str>, p: Parameter, rows: &[&CycleError]) -> Option<ParameterErrors> {
    if rows.is_empty() {
        return None;
    }
    let abs: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    let rel: Vec<f64> = rows.iter().filter_map(|r| r.rel_error).collect();
    Some(ParameterErrors {
        test: test.map(str::to_owned),
        parameter: p.name().into(),
        unit: p.unit().into(),
        n: rows.len(),
        mean_abs_error: stats::mean(&abs)?,
        mean_rel_error: stats::mean(&rel),
    })
}

impl TrialReport {
    /// Builds every table from the per-cycle rows, so each reported mean can
    /// be recomputed from `errors.csv`.
    pub fn build(cfg: &TrialConfig, tests: Vec<TestSummary>, rows: &[CycleError]) -> Self {
        let names: Vec<String> = tests.iter().map(|t| t.name.clone()).collect();
        let mut errors = Vec::new();
        let mut per_test_errors = Vec::new();
        let mut group_comparisons = Vec::new();
        let mut agreement = Vec::new();
        for p in Parameter::ALL {
            let of_param: Vec<&CycleError> = rows.iter().filter(|r| r.parameter == p.name()).collect();
            errors.extend(summarize(None, p, &of_param));

            let mut groups = Vec::new();
            let mut group_names = Vec::new();
            for name in &names {
                let of_test: Vec<&CycleError> = of_param.iter().copied().filter(|r| &r.test == name).collect();
                if let Some(summary) = summarize(Some(name), p, &of_test) {
                    per_test_errors.push(summary);
                    groups.push(of_test.iter().map(|r| r.abs_error).collect::<Vec<_>>());
                    group_names.push(name.clone());
                }
            }
            if groups.len() >= 2 {
                if let Ok(comparison) = stats::kruskal_wallis(&groups, Factor::Group) {
                    group_comparisons.push(ParameterComparison {
                        parameter: p.name().into(),
                        tests: group_names,
                        comparison,
                    });
                }
            }

            let pairs: Vec<(f64, f64)> = of_param.iter().map(|r| (r.reference, r.estimate)).collect();
            if let Ok(summary) = stats::bland_altman(&pairs) {
                agreement.push(ParameterAgreement {
                    parameter: p.name().into(),
                    unit: p.unit().into(),
                    summary,
                });
            }
        }
        TrialReport {
            schema_version: REPORT_SCHEMA_VERSION,
            provenance: Provenance {
                config_sha256: config_hash(cfg),
                seed: cfg.seed,
                gaitradar_version: env!("CARGO_PKG_VERSION").into(),
                report_schema: REPORT_SCHEMA_VERSION,
            },
            configuration: cfg.configuration.name().into(),
            snr_db: cfg.snr_db,
            tests,
            errors,
            per_test_errors,
            group_comparisons,
            agreement,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text table of the pooled errors and detection ratios.
    pub fn summary_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "configuration {}  snr {} dB  seed {}", self.configuration, self.snr_db, self.provenance.seed);
        let _ = writeln!(out, "{:<14} {:>7} {:>9} {:>7}", "test", "cycles", "HS ratio", "false");
        for t in &self.tests {
            let _ = writeln!(
                out,
                "{:<14} {:>7} {:>9.3} {:>7}",
                t.name, t.cycles, t.hs_detection_ratio, t.false_detections
            );
        }
        let _ = writeln!(out, "{:<20} {:>5} {:>12} {:>10}", "parameter", "n", "mean |e|", "mean |e_r|");
        for e in &self.errors {
            let rel = e.mean_rel_error.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                out,
                "{:<20} {:>5} {:>8.4} {:<3} {:>10}",
                e.parameter, e.n, e.mean_abs_error, e.unit, rel
            );
        }
        out
    }
}
