//! Certification report: constants, per-`t` verdicts, diagnostics and
//! provenance. See `schemas/report.schema.json`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bound::BetaResult;
use crate::diagnostics::Lemma1Batch;
use crate::ergodicity::ErgodicityCertificate;
use crate::error::{Error, Result};
use crate::hitting::DriftCertificate;
use crate::kernel::H1Report;
use crate::montecarlo::SampleSpec;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Absolute slack when comparing an exact tail probability to a bound.
pub const VERDICT_SLACK: f64 = 1e-12;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSUMPTION: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Holds,
    Inconclusive,
    Violated,
}

impl Verdict {
    pub fn exact(tail: f64, bound: f64) -> Self {
        if tail <= bound + VERDICT_SLACK {
            Verdict::Holds
        } else {
            Verdict::Violated
        }
    }

    pub fn interval(ci_low: f64, ci_high: f64, bound: f64) -> Self {
        if ci_high <= bound {
            Verdict::Holds
        } else if ci_low <= bound {
            Verdict::Inconclusive
        } else {
            Verdict::Violated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub markov_bound: f64,
    pub iid_bound: f64,
    pub method: TailMethod,
    /// Exact probability or Monte Carlo point estimate.
    pub tail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
    pub verdict: Verdict,
    /// Same comparison against the independent-case bound; informational.
    pub iid_verdict: Verdict,
}

/// Monte Carlo settings used for the tail rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub sampling: SampleSpec,
    pub centering: f64,
    pub centering_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub spec_hash: String,
    pub seed: u64,
    pub rng: String,
    /// Seconds since the Unix epoch; the only non-deterministic field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub kind: String,
    pub c: Vec<f64>,
    pub c_sum: f64,
    pub c_norm_sq: f64,
}

/// A failed hypothesis of the certified bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub assumption: Assumption,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    IrreducibleAperiodic,
    GeometricErgodicity,
    ReturnTimeMoment,
    StartInSmallSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    /// Smallest `bound - value` seen; negative on failure.
    pub worst_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    pub all_passed: bool,
    pub checks: Vec<CheckEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma1_batch: Option<Lemma1Batch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    AssumptionFailure,
    Violated,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => EXIT_OK,
            Outcome::AssumptionFailure => EXIT_ASSUMPTION,
            Outcome::Violated => EXIT_VIOLATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub schema_version: u32,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub provenance: Provenance,
    pub states: Vec<String>,
    pub small_set: Vec<String>,
    pub start: String,
    pub horizon: usize,
    pub functional: FunctionalSummary,
    pub h1: H1Report,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicityCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaResult>,
    pub issues: Vec<Issue>,
    pub warnings: Vec<String>,
    pub tail_rows: Vec<TailRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    pub outcome: Outcome,
}

impl CertificationReport {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Copy with the timestamp removed, for reproducibility comparisons.
    pub fn without_timestamp(&self) -> Self {
        let mut out = self.clone();
        out.provenance.generated_at_unix = None;
        out
    }

    /// Columns `t,markov_bound,iid_bound,tail,ci_low,ci_high`; the interval
    /// columns are empty for exact rows.
    pub fn tail_csv(&self) -> String {
        let mut out = String::from("t,markov_bound,iid_bound,tail,ci_low,ci_high\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for row in &self.tail_rows {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{},{}",
                row.t,
                row.markov_bound,
                row.iid_bound,
                row.tail,
                opt(row.ci_low),
                opt(row.ci_high)
            );
        }
        out
    }
}
