use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Estimate;

/// How an estimate is compared with its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|estimate - predicted| <= max(level * se, budget)`.
    TwoSided,
    /// `estimate <= predicted + max(level * se, budget)`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    /// Test family, as accepted by the selector (`sigma`, `cf`, ...).
    pub test: String,
    pub block: String,
    pub statistic: String,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub theta: Option<f64>,
    pub time: Option<f64>,
    pub predicted: f64,
    pub estimate: f64,
    pub se: f64,
    /// Absolute bias allowance; the acceptance band is `max(level * se, budget)`.
    pub budget: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub replicas: usize,
    pub seed: u64,
}

impl TestRow {
    pub fn new(test: &str, block: &str, statistic: String, predicted: f64, est: Estimate) -> Self {
        TestRow {
            test: test.into(),
            block: block.into(),
            statistic,
            tau1: None,
            tau2: None,
            theta: None,
            time: None,
            predicted,
            estimate: est.mean,
            se: est.se,
            budget: 0.0,
            comparison: Comparison::TwoSided,
            pass: false,
            replicas: est.count,
            seed: 0,
        }
    }

    pub fn taus(mut self, tau1: f64, tau2: f64) -> Self {
        self.tau1 = Some(tau1);
        self.tau2 = Some(tau2);
        self
    }

    pub fn theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn time(mut self, time: f64) -> Self {
        self.time = Some(time);
        self
    }

    pub fn budget(mut self, budget: f64) -> Self {
        self.budget = budget.abs();
        self
    }

    pub fn at_most(mut self) -> Self {
        self.comparison = Comparison::AtMost;
        self
    }

    /// Band half-width at the given SE multiple.
    pub fn band(&self, level: f64) -> f64 {
        (level * self.se).max(self.budget)
    }

    /// Set `pass` from the current numbers.
    pub fn judge(mut self, level: f64) -> Self {
        let band = self.band(level);
        let diff = self.estimate - self.predicted;
        self.pass = match self.comparison {
            Comparison::TwoSided => diff.abs() <= band,
            Comparison::AtMost => diff <= band,
        } && self.estimate.is_finite();
        self
    }

    fn key(&self) -> (String, String, String) {
        (self.test.clone(), self.block.clone(), self.statistic.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub model: Option<String>,
    pub t: f64,
    pub taus: Vec<f64>,
    pub q: f64,
    pub level: f64,
    pub replicas: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<TestRow>,
    pub notes: Vec<String>,
}

/// Above this many rows a multiple-comparison note is attached.
pub const MULTIPLE_COMPARISON_ROWS: usize = 20;

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn add_multiple_comparison_note(&mut self) {
        let n = self.rows.len();
        if n > MULTIPLE_COMPARISON_ROWS {
            // two-sided normal tail at `level`
            let p = erfc(self.level / std::f64::consts::SQRT_2);
            self.notes.push(format!(
                "{n} comparisons at {} SE: about {:.2} false failures expected under the null",
                self.level,
                p * n as f64
            ));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("verification report: {e}")))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<13} {:<6} {:<40} {:>13} {:>13} {:>11} {:>11}  result",
            "test", "block", "statistic", "predicted", "estimate", "se", "band"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<13} {:<6} {:<40} {:>13.6e} {:>13.6e} {:>11.3e} {:>11.3e}  {}",
                r.test,
                r.block,
                r.statistic,
                r.predicted,
                r.estimate,
                r.se,
                r.band(self.level),
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(
            out,
            "{} rows, {} failed, R = {}, level = {} SE",
            self.rows.len(),
            failed,
            self.replicas,
            self.level
        );
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "test,block,statistic,tau1,tau2,theta,time,predicted,estimate,se,budget,pass\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},\"{}\",{},{},{},{},{},{},{},{},{}",
                r.test,
                r.block,
                r.statistic,
                opt(r.tau1),
                opt(r.tau2),
                opt(r.theta),
                opt(r.time),
                r.predicted,
                r.estimate,
                r.se,
                r.budget,
                r.pass
            );
        }
        out
    }
}

/// Pool reports from independent runs of one configuration: estimates are
/// replica-weighted means and SEs combine as independent batches.
pub fn merge_reports(reports: &[VerificationReport]) -> Result<Option<VerificationReport>> {
    let Some(first) = reports.first() else {
        return Ok(None);
    };
    for r in &reports[1..] {
        if r.rows.len() != first.rows.len()
            || r.rows.iter().zip(&first.rows).any(|(a, b)| a.key() != b.key())
        {
            return Err(Error::ManifestMismatch(
                "reports do not contain the same tests".into(),
            ));
        }
        if r.level != first.level || r.t != first.t || r.taus != first.taus || r.q != first.q {
            return Err(Error::ManifestMismatch(
                "reports were produced with different verification settings".into(),
            ));
        }
    }
    let mut seen = BTreeMap::new();
    for seed in reports.iter().flat_map(|r| &r.seeds) {
        if seen.insert(*seed, ()).is_some() {
            return Err(Error::ManifestMismatch(format!(
                "seed {seed} appears in more than one report; runs are not independent"
            )));
        }
    }
    let total: usize = reports.iter().map(|r| r.replicas).sum();
    let rows = (0..first.rows.len())
        .map(|i| {
            let parts: Vec<&TestRow> = reports.iter().map(|r| &r.rows[i]).collect();
            let weight = |row: &TestRow| row.replicas as f64 / parts.iter().map(|p| p.replicas).sum::<usize>() as f64;
            let estimate = parts.iter().map(|p| weight(p) * p.estimate).sum();
            let predicted = parts.iter().map(|p| weight(p) * p.predicted).sum();
            let se = parts
                .iter()
                .map(|p| (weight(p) * p.se).powi(2))
                .sum::<f64>()
                .sqrt();
            let mut row = parts[0].clone();
            row.estimate = estimate;
            row.predicted = predicted;
            row.se = se;
            row.replicas = parts.iter().map(|p| p.replicas).sum();
            row.judge(first.level)
        })
        .collect();
    let mut merged = VerificationReport {
        model: first.model.clone(),
        t: first.t,
        taus: first.taus.clone(),
        q: first.q,
        level: first.level,
        replicas: total,
        seeds: seen.into_keys().collect(),
        rows,
        notes: Vec::new(),
    };
    merged.add_multiple_comparison_note();
    Ok(Some(merged))
}

/// Complementary error function, Chebyshev fit with |err| < 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
