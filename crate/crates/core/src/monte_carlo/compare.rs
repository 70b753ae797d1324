use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use super::{McError, McTally, StreamCounters};
use crate::enumeration::{Analysis, StreamTally};

/// Largest accepted `|z|` for counters with a large expectation.
pub const Z_LIMIT: f64 = 4.0;
/// Expectations below this are checked against an interval instead of a
/// z-score.
pub const Z_MIN_EXPECTED: f64 = 25.0;

/// One counter compared against its analytic expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterCheck {
    pub counter: String,
    pub expected: f64,
    pub observed: u64,
    /// `(observed − expected)/√expected`; `None` for small expectations.
    pub z: Option<f64>,
    pub pass: bool,
}

impl CounterCheck {
    fn new(counter: String, expected: f64, observed: u64) -> Self {
        let obs = observed as f64;
        if expected >= Z_MIN_EXPECTED {
            let z = (obs - expected) / expected.sqrt();
            Self {
                counter,
                expected,
                observed,
                z: Some(z),
                pass: z.abs() <= Z_LIMIT,
            }
        } else {
            let upper = expected + 6.0 * (expected + 1.0).sqrt();
            Self {
                counter,
                expected,
                observed,
                z: None,
                pass: obs <= upper,
            }
        }
    }
}

/// Agreement between one replication and the enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub replication: u32,
    pub checks: Vec<CounterCheck>,
}

impl AgreementReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CounterCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, counter: &str) -> Option<&CounterCheck> {
        self.checks.iter().find(|c| c.counter == counter)
    }

    /// Writes `replication,counter,expected,observed,z,pass` rows for a set
    /// of reports under one header.
    pub fn write_csv<W: io::Write>(reports: &[AgreementReport], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replication", "counter", "expected", "observed", "z", "pass"])?;
        for r in reports {
            for c in &r.checks {
                w.write_record([
                    r.replication.to_string(),
                    c.counter.clone(),
                    c.expected.to_string(),
                    c.observed.to_string(),
                    c.z.map(|z| z.to_string()).unwrap_or_default(),
                    c.pass.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let passed = self.checks.iter().filter(|c| c.pass).count();
        writeln!(
            f,
            "replication {}: {}/{} counters agree{}",
            self.replication,
            passed,
            self.checks.len(),
            if self.passed() { "" } else { "  FAIL" }
        )?;
        for c in self.failures() {
            match c.z {
                Some(z) => writeln!(
                    f,
                    "  {:<28} expected {:>12.2} observed {:>10} z = {z:+.2}",
                    c.counter, c.expected, c.observed
                )?,
                None => writeln!(
                    f,
                    "  {:<28} expected {:>12.2} observed {:>10} (above interval)",
                    c.counter, c.expected, c.observed
                )?,
            }
        }
        Ok(())
    }
}

fn stream_checks(
    out: &mut Vec<CounterCheck>,
    name: &str,
    expected: &StreamTally,
    eve_two: f64,
    observed: &StreamCounters,
    scale: f64,
) {
    out.push(CounterCheck::new(
        format!("{name}.eve_two_photon"),
        eve_two * scale,
        observed.eve_two_photon,
    ));
    for (i, e) in expected.optical.by_eve_count.iter().enumerate() {
        let k = i as u32 + 2;
        out.push(CounterCheck::new(
            format!("{name}.optical.k{k}"),
            e * scale,
            observed.optical_from_eve_count(k),
        ));
    }
    out.push(CounterCheck::new(
        format!("{name}.optical"),
        expected.optical.total * scale,
        observed.optical_total,
    ));
    for (i, e) in expected.photodetected.by_eve_count.iter().enumerate() {
        let k = i as u32 + 2;
        out.push(CounterCheck::new(
            format!("{name}.photodetected.k{k}"),
            e * scale,
            observed.photodetected_from_eve_count(k),
        ));
    }
    out.push(CounterCheck::new(
        format!("{name}.photodetected"),
        expected.photodetected.total * scale,
        observed.photodetected_total,
    ));
}

/// Tests every tallied counter against the enumeration's expectation, scaled
/// by the tally's `slots_scale`.
///
/// Counters expected at 25 or more must satisfy `|z| ≤ 4`; smaller ones pass
/// when the observation lies in `[0, μ + 6√(μ+1)]`.
pub fn compare(analysis: &Analysis, tally: &McTally) -> Result<AgreementReport, McError> {
    if analysis.scenario != tally.scenario {
        return Err(McError::ScenarioMismatch);
    }
    let scale = tally.slots_scale as f64;
    let counts = &analysis.eve.counts;
    let mut checks = Vec::new();
    stream_checks(
        &mut checks,
        "signal",
        &analysis.bob.signal,
        counts.n_es_2,
        &tally.signal,
        scale,
    );
    stream_checks(
        &mut checks,
        "decoy",
        &analysis.bob.decoy,
        counts.n_ed_2,
        &tally.decoy,
        scale,
    );
    checks.push(CounterCheck::new(
        "signal.post_processed".to_string(),
        analysis.metrics.n_err_sift * scale,
        tally.signal.post_processed,
    ));
    Ok(AgreementReport {
        replication: tally.replication,
        checks,
    })
}
