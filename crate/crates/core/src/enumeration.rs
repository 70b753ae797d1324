//! Analytic enumeration of every impairment between Alice and Bob.
//!
//! Walking with a pulse from the source: Alice emits `j` photons (Poisson),
//! each survives the Alice→Eve fiber and Eve's polarization choice with
//! probability `ψ_ae`, Eve applies the photon-number-splitting rule to the `k`
//! photons she holds, each forwarded photon survives the Eve→Bob span and
//! Bob's polarization choice with probability `ψ_eb`, and finally Bob's
//! photodetector, sifting and FEC thin what is left.
//!
//! Eve's rule on `k` received photons:
//!
//! | `k`  | action                         | photons forwarded |
//! |------|--------------------------------|-------------------|
//! | 0, 1 | block                          | 0                 |
//! | 2    | keep one, forward the other    | 1                 |
//! | ≥ 3  | forward all                    | `k`               |
//!
//! Pulses with more than `J` photons at emission are outside the model. All
//! counts here are expectations and stay real-valued.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{Scenario, ValidationErrors};
use crate::photon_stats::{binomial_coefficient, emission_profile, fiber_segment, DomainError, FiberSegment};

/// Photons Eve sends on to Bob after receiving `k` of them.
pub fn forwarded_photons(k: u32) -> u32 {
    match k {
        0 | 1 => 0,
        2 => 1,
        k => k,
    }
}

/// Per-photon optical-domain survival on each side of Eve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalProbs {
    pub psi_ae: f64,
    pub psi_eb: f64,
    pub p_fl_ae: f64,
    pub p_fl_eb: f64,
}

impl SurvivalProbs {
    /// `ψ = (1 − p_fl)(1 − p_pl)` on each segment.
    pub fn from_losses(p_fl_ae: f64, p_fl_eb: f64, p_pl: f64) -> Self {
        Self {
            psi_ae: (1.0 - p_fl_ae) * (1.0 - p_pl),
            psi_eb: (1.0 - p_fl_eb) * (1.0 - p_pl),
            p_fl_ae,
            p_fl_eb,
        }
    }

    /// Same as [`from_losses`](Self::from_losses), taking `1 − p_fl` from the
    /// spans directly so long links keep their precision.
    pub fn from_segments(ae: &FiberSegment, eb: &FiberSegment, p_pl: f64) -> Self {
        Self {
            psi_ae: ae.transmittance() * (1.0 - p_pl),
            psi_eb: eb.transmittance() * (1.0 - p_pl),
            p_fl_ae: ae.p_fl,
            p_fl_eb: eb.p_fl,
        }
    }
}

pub fn survival_probs(scenario: &Scenario) -> Result<SurvivalProbs, DomainError> {
    let link = &scenario.link;
    let ae = fiber_segment(link.alpha, link.l_ae())?;
    let eb = fiber_segment(link.alpha, link.l_eb())?;
    Ok(SurvivalProbs::from_segments(&ae, &eb, scenario.receiver.p_pl))
}

/// Probabilities that Eve holds exactly `k` photons of one pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptionProbs {
    pub mean: f64,
    pub psi_ae: f64,
    /// `probs[k]` for `k = 0..=J`.
    pub probs: Vec<f64>,
}

impl ReceptionProbs {
    /// `p_rx(k)`; zero above the truncation order.
    pub fn p_rx(&self, k: u32) -> f64 {
        self.probs.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn truncation_order(&self) -> u32 {
        (self.probs.len() - 1) as u32
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), DomainError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(DomainError::Probability { name, value })
    }
}

/// `p_rx(k) = Σ_{j=k..J} P_λ(j)·C(j,k)·ψ^k·(1−ψ)^{j−k}`.
///
/// The same function serves the signal and decoy streams; only the mean
/// differs.
pub fn reception_probs_at_eve(mean: f64, psi_ae: f64, truncation_order: u32) -> Result<ReceptionProbs, DomainError> {
    check_probability("psi_ae", psi_ae)?;
    let emitted = emission_profile(mean, truncation_order)?;
    let probs = (0..=truncation_order)
        .map(|k| {
            (k..=truncation_order)
                .map(|j| {
                    emitted.probs[j as usize]
                        * binomial_coefficient(j, k)
                        * psi_ae.powi(k as i32)
                        * (1.0 - psi_ae).powi((j - k) as i32)
                })
                .sum()
        })
        .collect();
    Ok(ReceptionProbs { mean, psi_ae, probs })
}

/// Expected two-photon pulses held by Eve, by stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonCounts {
    pub n_es_2: f64,
    pub n_ed_2: f64,
    pub n_e_2: f64,
}

pub fn eve_two_photon_counts(m_s: u64, m_d: u64, signal: &ReceptionProbs, decoy: &ReceptionProbs) -> TwoPhotonCounts {
    let n_es_2 = m_s as f64 * signal.p_rx(2);
    let n_ed_2 = m_d as f64 * decoy.p_rx(2);
    TwoPhotonCounts {
        n_es_2,
        n_ed_2,
        n_e_2: n_es_2 + n_ed_2,
    }
}

/// Everything Eve receives from both streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveReception {
    pub signal: ReceptionProbs,
    pub decoy: ReceptionProbs,
    pub counts: TwoPhotonCounts,
}

/// Expected Bob-side counts for one stream, split by how many photons Eve
/// held for the pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    /// Entry `i` belongs to pulses Eve received with `k = i + 2` photons.
    pub by_eve_count: Vec<f64>,
    pub total: f64,
}

impl ClassCounts {
    fn from_classes(by_eve_count: Vec<f64>) -> Self {
        let total = by_eve_count.iter().sum();
        Self { by_eve_count, total }
    }

    /// Contribution of pulses Eve received with `k ≥ 2` photons.
    pub fn from_eve_count(&self, k: u32) -> f64 {
        k.checked_sub(2)
            .and_then(|i| self.by_eve_count.get(i as usize))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Probability that a pulse of `f` forwarded photons reaches Bob with at
/// least one photon, each photon also detected with probability `eta`
/// (`eta = 1` gives the optical-arrival probability). Summed over the
/// number `i ≥ 1` of arriving photons; every arrival must be detected.
fn arrival_weight(f: u32, psi_eb: f64, eta: f64) -> f64 {
    (1..=f)
        .map(|i| {
            binomial_coefficient(f, i)
                * psi_eb.powi(i as i32)
                * (1.0 - psi_eb).powi((f - i) as i32)
                * eta.powi(i as i32)
        })
        .sum()
}

fn bob_counts(m: u64, eve: &ReceptionProbs, psi_eb: f64, eta: f64) -> ClassCounts {
    let m = m as f64;
    let classes = (2..=eve.truncation_order())
        .map(|k| m * eve.p_rx(k) * arrival_weight(forwarded_photons(k), psi_eb, eta))
        .collect();
    ClassCounts::from_classes(classes)
}

/// Expected optical pulses reaching Bob from one stream of `m` slots.
pub fn bob_optical_counts(m: u64, eve: &ReceptionProbs, psi_eb: f64) -> Result<ClassCounts, DomainError> {
    check_probability("psi_eb", psi_eb)?;
    Ok(bob_counts(m, eve, psi_eb, 1.0))
}

/// Expected photodetected bits at Bob from one stream of `m` slots.
pub fn bob_photodetected_counts(
    m: u64,
    eve: &ReceptionProbs,
    psi_eb: f64,
    eta_pd: f64,
) -> Result<ClassCounts, DomainError> {
    check_probability("psi_eb", psi_eb)?;
    check_probability("eta_pd", eta_pd)?;
    Ok(bob_counts(m, eve, psi_eb, eta_pd))
}

/// Sifting and FEC losses applied to photodetected signal bits.
pub fn post_process(n_pd_bs: f64, alpha_err: f64, alpha_sift: f64) -> f64 {
    n_pd_bs * (1.0 - alpha_err) * (1.0 - alpha_sift)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamTally {
    pub optical: ClassCounts,
    pub photodetected: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BobTally {
    pub signal: StreamTally,
    pub decoy: StreamTally,
}

/// A ratio that is undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ratio {
    Defined(f64),
    #[default]
    Undefined,
}

impl Ratio {
    pub fn of(numerator: f64, denominator: f64) -> Self {
        if denominator == 0.0 {
            Ratio::Undefined
        } else {
            Ratio::Defined(numerator / denominator)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Defined(v) => Some(v),
            Ratio::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Ratio::Defined(_))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match (self, f.precision()) {
            (Ratio::Defined(v), Some(p)) => format!("{v:.p$}"),
            (Ratio::Defined(v), None) => v.to_string(),
            (Ratio::Undefined, _) => "undef".to_string(),
        };
        f.pad_integral(true, "", &text)
    }
}

// JSON: a number, or null when undefined.
impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match Option::<f64>::deserialize(deserializer)? {
            Some(v) => Ratio::Defined(v),
            None => Ratio::Undefined,
        })
    }
}

/// Scalar figures of merit for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Signal bits surviving photodetection, sifting and FEC.
    pub n_err_sift: f64,
    /// Key bits per transmitted slot (signal, decoy and vacuum).
    pub r_k: f64,
    pub y_bs: f64,
    pub y_bd: f64,
    /// Bob's signal-to-decoy yield ratio.
    pub rho_y_sd: Ratio,
    /// Eve's signal-to-decoy two-photon pulse ratio.
    pub rho_e_sd: Ratio,
}

/// The full pipeline for one scenario, with every intermediate kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub scenario: Scenario,
    pub survival: SurvivalProbs,
    pub eve: EveReception,
    pub bob: BobTally,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Runs the enumeration for a scenario with the survival probabilities
/// derived from its link.
pub fn analyze(scenario: &Scenario) -> Result<Analysis, AnalysisError> {
    let scenario = scenario.validated()?;
    let survival = survival_probs(&scenario)?;
    Ok(analyze_with(&scenario, survival)?)
}

/// As [`analyze`], with the per-photon survival probabilities supplied
/// directly rather than derived from the link geometry.
pub fn analyze_with(scenario: &Scenario, survival: SurvivalProbs) -> Result<Analysis, DomainError> {
    let src = &scenario.source;
    let rx = &scenario.receiver;
    let order = scenario.truncation_order;

    let eve_s = reception_probs_at_eve(src.lambda_s, survival.psi_ae, order)?;
    let eve_d = reception_probs_at_eve(src.lambda_d, survival.psi_ae, order)?;
    let counts = eve_two_photon_counts(src.m_s, src.m_d, &eve_s, &eve_d);

    let stream = |m: u64, eve: &ReceptionProbs| -> Result<StreamTally, DomainError> {
        Ok(StreamTally {
            optical: bob_optical_counts(m, eve, survival.psi_eb)?,
            photodetected: bob_photodetected_counts(m, eve, survival.psi_eb, rx.eta_pd)?,
        })
    };
    let bob = BobTally {
        signal: stream(src.m_s, &eve_s)?,
        decoy: stream(src.m_d, &eve_d)?,
    };

    let n_err_sift = post_process(bob.signal.photodetected.total, rx.alpha_err, rx.alpha_sift);
    let y_bs = bob.signal.optical.total / src.m_s as f64;
    let y_bd = bob.decoy.optical.total / src.m_d as f64;
    let metrics = Metrics {
        n_err_sift,
        r_k: n_err_sift / src.total_slots() as f64,
        y_bs,
        y_bd,
        rho_y_sd: Ratio::of(y_bs, y_bd),
        rho_e_sd: Ratio::of(counts.n_es_2, counts.n_ed_2),
    };

    Ok(Analysis {
        scenario: *scenario,
        survival,
        eve: EveReception {
            signal: eve_s,
            decoy: eve_d,
            counts,
        },
        bob,
        metrics,
    })
}

pub fn metrics(scenario: &Scenario) -> Result<Metrics, AnalysisError> {
    analyze(scenario).map(|a| a.metrics)
}
