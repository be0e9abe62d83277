//! Experiment reports: per-entry verdicts, CSV and JSON output.

use std::io::Write;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Family-wise two-sided error rate of the 3σ rule.
pub const FAMILY_ERROR: f64 = 0.0027;

/// Prefix of panel keys that carry diagnostics rather than checks.
pub const DIAGNOSTIC: &str = "diagnostic:";

/// Bonferroni critical value for a panel of `n` two-sided comparisons at
/// family-wise level [`FAMILY_ERROR`]; equals 3 (to four digits) for `n = 1`.
pub fn z_crit(n: usize) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(1.0 - FAMILY_ERROR / (2.0 * n.max(1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
    /// Reported for information; carries no tolerance and never fails.
    Diagnostic,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
            Verdict::Diagnostic => "diagnostic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub panel_key: String,
    pub estimate: f64,
    pub se: f64,
    pub reference: f64,
    pub reference_se: f64,
    /// Deterministic bias allowance added to the statistical tolerance.
    pub budget: f64,
    /// `(estimate - reference)` in units of the combined standard error.
    pub z: f64,
    /// Multiplier of the combined standard error in the tolerance.
    pub threshold: f64,
    pub verdict: Verdict,
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

impl Entry {
    /// Two-sided agreement: `|est - ref| ≤ threshold·√(se² + ref_se²) + budget`.
    pub fn agreement(
        panel_key: impl Into<String>,
        (estimate, se): (f64, f64),
        (reference, reference_se): (f64, f64),
        budget: f64,
        threshold: f64,
    ) -> Self {
        let combined = se.hypot(reference_se);
        let diff = estimate - reference;
        let ok = diff.abs() <= threshold * combined + budget;
        Self {
            panel_key: panel_key.into(),
            estimate,
            se,
            reference,
            reference_se,
            budget,
            z: z_score(diff, combined),
            threshold,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }

    /// One-sided: `estimate ≤ bound + threshold·se + budget`.
    pub fn at_most(panel_key: impl Into<String>, (estimate, se): (f64, f64), bound: f64, budget: f64, threshold: f64) -> Self {
        let ok = estimate <= bound + threshold * se + budget;
        Self {
            panel_key: panel_key.into(),
            estimate,
            se,
            reference: bound,
            reference_se: 0.0,
            budget,
            z: z_score(estimate - bound, se),
            threshold,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }

    /// One-sided: `estimate ≥ bound - threshold·se - budget`.
    pub fn at_least(panel_key: impl Into<String>, (estimate, se): (f64, f64), bound: f64, budget: f64, threshold: f64) -> Self {
        let ok = estimate >= bound - threshold * se - budget;
        Self {
            panel_key: panel_key.into(),
            estimate,
            se,
            reference: bound,
            reference_se: 0.0,
            budget,
            z: z_score(estimate - bound, se),
            threshold,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }

    pub fn diagnostic(panel_key: impl AsRef<str>, (estimate, se): (f64, f64), (reference, reference_se): (f64, f64)) -> Self {
        Self {
            panel_key: format!("{DIAGNOSTIC}{}", panel_key.as_ref()),
            estimate,
            se,
            reference,
            reference_se,
            budget: 0.0,
            z: z_score(estimate - reference, se.hypot(reference_se)),
            threshold: 0.0,
            verdict: Verdict::Diagnostic,
        }
    }

    pub fn mark_inconclusive(mut self) -> Self {
        if self.verdict == Verdict::Fail || self.verdict == Verdict::Pass {
            self.verdict = Verdict::Inconclusive;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub entries: Vec<Entry>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            entries: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: Entry) {
        self.entries.push(entry);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Worst verdict over the checked entries: any failure fails, otherwise
    /// any inconclusive entry makes the report inconclusive.
    pub fn verdict(&self) -> Verdict {
        self.entries
            .iter()
            .map(|e| e.verdict)
            .filter(|v| *v != Verdict::Diagnostic)
            .max()
            .unwrap_or(Verdict::Pass)
    }

    pub fn checks(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| e.verdict != Verdict::Diagnostic)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "experiment,panel_key,estimate,se,reference,verdict")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.experiment,
                e.panel_key,
                e.estimate,
                e.se,
                e.reference,
                e.verdict.as_str()
            )?;
        }
        Ok(())
    }

    pub fn csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub verdict: Verdict,
    pub master_seed: u64,
    pub experiments: Vec<ExperimentSummary<'a>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary<'a> {
    pub experiment: &'a str,
    pub verdict: Verdict,
    pub entries: &'a [Entry],
    pub notes: &'a [String],
}

impl<'a> Summary<'a> {
    pub fn new(master_seed: u64, reports: &'a [Report]) -> Self {
        Self {
            verdict: reports.iter().map(Report::verdict).max().unwrap_or(Verdict::Pass),
            master_seed,
            experiments: reports
                .iter()
                .map(|r| ExperimentSummary {
                    experiment: &r.experiment,
                    verdict: r.verdict(),
                    entries: &r.entries,
                    notes: &r.notes,
                })
                .collect(),
        }
    }
}
