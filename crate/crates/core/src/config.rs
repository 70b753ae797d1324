//! Scenario parameters and their validation.
//!
//! A [`Scenario`] is the complete description of one experiment: the source
//! (signal/decoy means and the slot mix), the fiber link with Eve's tap point,
//! and Bob's receiver chain. Every quantity the rest of the crate computes is a
//! pure function of a validated scenario.
//!
//! Scenarios round-trip through JSON with exactly the field names used here.
//! Unknown keys are rejected and no field has a serde default, so a scenario
//! file always states every parameter explicitly.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Default number of photons per pulse retained by the analytic model.
pub const DEFAULT_TRUNCATION_ORDER: u32 = 4;

/// Optical source and slot plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Mean photon count per signal slot.
    pub lambda_s: f64,
    /// Mean photon count per decoy slot.
    pub lambda_d: f64,
    /// Number of signal slots.
    pub m_s: u64,
    /// Number of decoy slots.
    pub m_d: u64,
    /// Number of vacuum slots.
    pub m_v: u64,
}

impl SourceParams {
    /// Total slot count `m_s + m_d + m_v`.
    ///
    /// Saturates instead of wrapping; validation rejects plans where the sum
    /// does not fit in a `u64`.
    pub fn total_slots(&self) -> u64 {
        self.m_s.saturating_add(self.m_d).saturating_add(self.m_v)
    }
}

/// Fiber plant between Alice and Bob, with Eve spliced in part way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    /// Fiber attenuation in dB/km.
    pub alpha: f64,
    /// Alice-to-Bob fiber length in km.
    pub l_total: f64,
    /// Fraction of `l_total` lying between Alice and Eve.
    pub eve_fraction: f64,
}

impl LinkGeometry {
    /// Length of the Alice→Eve segment in km.
    pub fn l_ae(&self) -> f64 {
        self.eve_fraction * self.l_total
    }

    /// Length of the Eve→Bob segment in km.
    ///
    /// Computed as the remainder so that `l_ae() + l_eb() == l_total`.
    pub fn l_eb(&self) -> f64 {
        self.l_total - self.l_ae()
    }
}

/// Receiver-side loss factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverParams {
    /// Per-photon polarization-mismatch loss probability.
    pub p_pl: f64,
    /// Photodetector quantum efficiency.
    pub eta_pd: f64,
    /// Fraction of bits lost to sifting.
    pub alpha_sift: f64,
    /// Fraction of bits lost to bit detection and FEC.
    pub alpha_err: f64,
}

impl Default for ReceiverParams {
    fn default() -> Self {
        Self {
            p_pl: 0.5,
            eta_pd: 0.3,
            alpha_sift: 0.2,
            alpha_err: 0.2,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub source: SourceParams,
    pub link: LinkGeometry,
    pub receiver: ReceiverParams,
    /// Largest photon count per pulse kept by the analytic model.
    pub truncation_order: u32,
}

impl Scenario {
    /// The reference operating point: 50 km of 0.2 dB/km fiber with Eve at
    /// the midpoint, `λ_s = 0.5`, `λ_d = 0.2`, 10⁶ signal, 5·10⁵ decoy and
    /// 10⁴ vacuum slots, and the default receiver.
    pub fn baseline() -> Self {
        Self {
            source: SourceParams {
                lambda_s: 0.5,
                lambda_d: 0.2,
                m_s: 1_000_000,
                m_d: 500_000,
                m_v: 10_000,
            },
            link: LinkGeometry {
                alpha: 0.2,
                l_total: 50.0,
                eve_fraction: 0.5,
            },
            receiver: ReceiverParams::default(),
            truncation_order: DEFAULT_TRUNCATION_ORDER,
        }
    }

    /// Parses a scenario from JSON and validates it.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        Ok(scenario.validated()?)
    }

    /// Canonical JSON rendering: fixed key order, independent of the order
    /// keys appeared in the file the scenario was read from.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario always serializes")
    }

    /// Returns `self` if every invariant holds, or the full list of
    /// violations otherwise.
    pub fn validated(self) -> Result<Self, ValidationErrors> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ValidationErrors(violations))
        }
    }

    /// Every violated invariant, in field order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let s = &self.source;
        let l = &self.link;
        let r = &self.receiver;

        check(&mut out, "lambda_s", s.lambda_s, s.lambda_s > 0.0, "must be > 0");
        check(&mut out, "lambda_d", s.lambda_d, s.lambda_d >= 0.0, "must be >= 0");
        if s.lambda_s.is_finite() && s.lambda_d.is_finite() && s.lambda_d > s.lambda_s {
            out.push(Violation::new(
                "lambda_d",
                "must be <= lambda_s",
                s.lambda_d.to_string(),
            ));
        }
        if s.m_s == 0 {
            out.push(Violation::new("m_s", "must be >= 1", "0"));
        }
        if s.m_d == 0 {
            out.push(Violation::new("m_d", "must be >= 1", "0"));
        }
        if s.m_s.checked_add(s.m_d).and_then(|x| x.checked_add(s.m_v)).is_none() {
            out.push(Violation::new(
                "m_v",
                "m_s + m_d + m_v must fit in 64 bits",
                s.m_v.to_string(),
            ));
        }

        check(&mut out, "alpha", l.alpha, l.alpha > 0.0, "must be > 0");
        check(&mut out, "l_total", l.l_total, l.l_total > 0.0, "must be > 0");
        check(
            &mut out,
            "eve_fraction",
            l.eve_fraction,
            l.eve_fraction > 0.0 && l.eve_fraction < 1.0,
            "must be in (0,1)",
        );

        check(
            &mut out,
            "p_pl",
            r.p_pl,
            (0.0..=1.0).contains(&r.p_pl),
            "must be in [0,1]",
        );
        check(
            &mut out,
            "eta_pd",
            r.eta_pd,
            r.eta_pd > 0.0 && r.eta_pd <= 1.0,
            "must be in (0,1]",
        );
        check(
            &mut out,
            "alpha_sift",
            r.alpha_sift,
            (0.0..1.0).contains(&r.alpha_sift),
            "must be in [0,1)",
        );
        check(
            &mut out,
            "alpha_err",
            r.alpha_err,
            (0.0..1.0).contains(&r.alpha_err),
            "must be in [0,1)",
        );

        if self.truncation_order < 2 {
            out.push(Violation::new(
                "truncation_order",
                "must be >= 2",
                self.truncation_order.to_string(),
            ));
        }
        out
    }

    /// Conditions that are valid but leave some outputs undefined.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.source.lambda_d == 0.0 {
            out.push("lambda_d = 0: decoy slots are empty, so rho_y_sd and rho_e_sd are undefined".to_string());
        }
        out
    }
}

// NaN fails every comparison, so `ok` is false for non-finite inputs except
// +inf on open upper bounds; reject those explicitly.
fn check(out: &mut Vec<Violation>, field: &'static str, value: f64, ok: bool, constraint: &'static str) {
    if !ok || !value.is_finite() {
        out.push(Violation::new(field, constraint, value.to_string()));
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub constraint: String,
    pub value: String,
}

impl Violation {
    fn new(field: &'static str, constraint: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            field,
            constraint: constraint.into(),
            value: value.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} (got {})", self.field, self.constraint, self.value)
    }
}

/// Every invariant a scenario violated.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationErrors(pub Vec<Violation>);

impl ValidationErrors {
    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario ({} violation", self.0.len())?;
        if self.0.len() != 1 {
            f.write_str("s")?;
        }
        f.write_str(")")?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(err: &ValidationErrors) -> Vec<&'static str> {
        err.iter().map(|v| v.field).collect()
    }

    #[test]
    fn baseline_is_valid() {
        let s = Scenario::baseline();
        assert_eq!(s.validated(), Ok(s));
        assert_eq!(s.source.total_slots(), 1_510_000);
        assert!(s.warnings().is_empty());
    }

    #[test]
    fn eta_pd_zero_is_rejected() {
        let mut s = Scenario::baseline();
        s.receiver.eta_pd = 0.0;
        let err = s.validated().unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err.0[0].to_string(), "eta_pd must be in (0,1] (got 0)");
    }

    #[test]
    fn eve_fraction_one_is_rejected() {
        let mut s = Scenario::baseline();
        s.link.eve_fraction = 1.0;
        let err = s.validated().unwrap_err();
        assert_eq!(err.0[0].to_string(), "eve_fraction must be in (0,1) (got 1)");
    }

    #[test]
    fn all_violations_are_reported() {
        let mut s = Scenario::baseline();
        s.source.lambda_s = -1.0;
        s.source.m_d = 0;
        s.link.alpha = f64::NAN;
        s.receiver.alpha_err = 1.0;
        s.truncation_order = 1;
        let err = s.validated().unwrap_err();
        assert_eq!(
            fields(&err),
            vec!["lambda_s", "lambda_d", "m_d", "alpha", "alpha_err", "truncation_order"]
        );
    }

    #[test]
    fn lambda_d_may_equal_lambda_s_but_not_exceed_it() {
        let mut s = Scenario::baseline();
        s.source.lambda_d = 0.5;
        assert!(s.validated().is_ok());
        s.source.lambda_d = 0.6;
        assert_eq!(fields(&s.validated().unwrap_err()), vec!["lambda_d"]);
    }

    #[test]
    fn empty_decoys_are_valid_but_flagged() {
        let mut s = Scenario::baseline();
        s.source.lambda_d = 0.0;
        assert!(s.validated().is_ok());
        assert_eq!(s.warnings().len(), 1);
    }

    #[test]
    fn slot_overflow_is_rejected() {
        let mut s = Scenario::baseline();
        s.source.m_v = u64::MAX;
        assert_eq!(fields(&s.validated().unwrap_err()), vec!["m_v"]);
    }

    #[test]
    fn segment_lengths_partition_the_link() {
        let link = LinkGeometry {
            alpha: 0.2,
            l_total: 37.3,
            eve_fraction: 0.31,
        };
        assert_eq!(link.l_ae() + link.l_eb(), link.l_total);
        assert!(link.l_ae() > 0.0 && link.l_eb() > 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(Scenario::baseline()).unwrap();
        v["receiver"]["eta_eve"] = serde_json::json!(0.5);
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{err}");
        assert!(err.to_string().contains("eta_eve"));
    }

    #[test]
    fn missing_keys_are_rejected() {
        let mut v = serde_json::to_value(Scenario::baseline()).unwrap();
        v.as_object_mut().unwrap().remove("truncation_order");
        assert!(matches!(
            Scenario::from_json(&v.to_string()),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let s = Scenario::baseline();
        let text = s.to_canonical_json();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_canonical_json(), text);
    }
}
