//! Poisson photon statistics and fiber loss.
//!
//! A laser source emits a Poisson-distributed number of photons per slot.
//! Fiber attenuation is a power ratio `ρ = 10^(αl/10)`; because photons are
//! lost independently, the same ratio fixes a per-photon loss probability
//! `p_fl = 1 − 1/ρ`. [`solve_photon_loss_prob`] recovers `p_fl` the long way,
//! from the expected number of lost photons over the whole emission
//! distribution, which is what lets the two be checked against each other.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("mean photon count must be finite and >= 0 (got {0})")]
    NegativeMean(f64),
    #[error("truncation order must be >= 2 (got {0})")]
    TruncationOrder(u32),
    #[error("fiber attenuation must be finite and > 0 dB/km (got {0})")]
    Attenuation(f64),
    #[error("fiber length must be finite and >= 0 km (got {0})")]
    Length(f64),
    #[error("loss ratio must be >= 1, fiber cannot amplify (got {0})")]
    Amplifying(f64),
    #[error("received mean {received} must be in (0, {transmitted}]")]
    ReceivedMean { transmitted: f64, received: f64 },
    #[error("probability {name} must be in [0,1] (got {value})")]
    Probability { name: &'static str, value: f64 },
}

fn check_mean(mean: f64) -> Result<(), DomainError> {
    if mean >= 0.0 && mean.is_finite() {
        Ok(())
    } else {
        Err(DomainError::NegativeMean(mean))
    }
}

/// `P_λ(j) = λ^j e^{−λ} / j!`.
///
/// Uses the product recurrence `P(j) = P(j−1)·λ/j`, whose partial products
/// are themselves probabilities and so never overflow; switches to log space
/// once `e^{−λ}` would underflow.
pub fn poisson_pmf(mean: f64, j: u32) -> Result<f64, DomainError> {
    check_mean(mean)?;
    Ok(pmf_unchecked(mean, j))
}

fn pmf_unchecked(mean: f64, j: u32) -> f64 {
    if mean == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if mean < 700.0 {
        let mut p = (-mean).exp();
        for i in 1..=j {
            p *= mean / f64::from(i);
        }
        p
    } else {
        let ln_fact: f64 = (1..=j).map(|i| f64::from(i).ln()).sum();
        (f64::from(j) * mean.ln() - mean - ln_fact).exp()
    }
}

/// `P(j > k)` for a Poisson variable, summed upward rather than as
/// `1 − CDF` so small tails keep their relative precision.
pub fn poisson_tail_above(mean: f64, k: u32) -> Result<f64, DomainError> {
    check_mean(mean)?;
    Ok(tail_unchecked(mean, k))
}

fn tail_unchecked(mean: f64, k: u32) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    // Once j+1 > 2λ the terms shrink at least geometrically by 1/2.
    let mut term = pmf_unchecked(mean, k + 1);
    let mut sum = 0.0;
    let mut j = k + 1;
    loop {
        sum += term;
        if term <= sum * 1e-17 && f64::from(j) > 2.0 * mean {
            break;
        }
        j += 1;
        term *= mean / f64::from(j);
        if term == 0.0 && f64::from(j) > mean {
            break;
        }
    }
    // The upward sum can slightly exceed 1 − CDF for large means.
    sum.min(1.0)
}

/// Truncated emission distribution for one source mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionProfile {
    pub mean: f64,
    /// `probs[j] = P_λ(j)` for `j = 0..=J`.
    pub probs: Vec<f64>,
    /// `P(j > J)`.
    pub tail: f64,
}

impl EmissionProfile {
    pub fn truncation_order(&self) -> u32 {
        (self.probs.len() - 1) as u32
    }

    /// `P(j > k)`, for any `k`; values above the truncation order fall back
    /// to the untruncated Poisson tail.
    pub fn mass_above(&self, k: u32) -> f64 {
        let order = self.truncation_order();
        if k >= order {
            return tail_unchecked(self.mean, k);
        }
        self.probs[(k + 1) as usize..].iter().sum::<f64>() + self.tail
    }
}

/// Emission probabilities `φ_0..φ_J` and the residual mass above `J`.
pub fn emission_profile(mean: f64, truncation_order: u32) -> Result<EmissionProfile, DomainError> {
    check_mean(mean)?;
    if truncation_order < 2 {
        return Err(DomainError::TruncationOrder(truncation_order));
    }
    let probs = (0..=truncation_order).map(|j| pmf_unchecked(mean, j)).collect();
    Ok(EmissionProfile {
        mean,
        probs,
        tail: tail_unchecked(mean, truncation_order),
    })
}

/// Loss budget of one fiber span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSegment {
    /// dB/km
    pub alpha: f64,
    /// km
    pub length: f64,
    pub loss_db: f64,
    /// Linear power-loss ratio `P_T / P_R`.
    pub rho: f64,
    /// Per-photon loss probability.
    pub p_fl: f64,
}

impl FiberSegment {
    /// Per-photon transmission probability `1/ρ`, accurate even where
    /// `p_fl` has rounded to 1.
    pub fn transmittance(&self) -> f64 {
        (-self.loss_db / 10.0 * std::f64::consts::LN_10).exp()
    }
}

pub fn fiber_segment(alpha: f64, length: f64) -> Result<FiberSegment, DomainError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DomainError::Attenuation(alpha));
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(DomainError::Length(length));
    }
    let loss_db = alpha * length;
    let exponent = loss_db / 10.0;
    Ok(FiberSegment {
        alpha,
        length,
        loss_db,
        rho: 10f64.powf(exponent),
        // 1 − 10^(−x) without cancellation at short lengths.
        p_fl: -(-exponent * std::f64::consts::LN_10).exp_m1(),
    })
}

/// Mean received photon count `n = λ/ρ`.
pub fn arrival_mean(lambda: f64, rho: f64) -> Result<f64, DomainError> {
    check_mean(lambda)?;
    if rho.is_nan() || rho < 1.0 {
        return Err(DomainError::Amplifying(rho));
    }
    Ok(lambda / rho)
}

const SOLVER_TOLERANCE: f64 = 1e-12;
const POISSON_CUTOFF: f64 = 1e-15;

/// Finds the per-photon loss probability that turns a transmitted mean
/// `lambda` into a received mean `n`.
///
/// Solves `n = λ − Σ_μ P_λ(μ) Σ_κ κ·C(μ,κ)·p^κ(1−p)^{μ−κ}` for `p` by
/// bisection on `[0, 1]`. The right-hand side is strictly decreasing in `p`,
/// so bisection always converges; the outer sum stops once the remaining
/// Poisson mass is below 10⁻¹⁵.
pub fn solve_photon_loss_prob(lambda: f64, n: f64) -> Result<f64, DomainError> {
    check_mean(lambda)?;
    if !(n > 0.0 && n <= lambda) {
        return Err(DomainError::ReceivedMean {
            transmitted: lambda,
            received: n,
        });
    }
    let weights = poisson_weights(lambda);
    let ln_fact = ln_factorials(weights.len());
    let residual = |p: f64| lambda - expected_lost(&weights, &ln_fact, p) - n;

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > SOLVER_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P_λ(μ)` for `μ = 0, 1, …` until the bound on the remaining mass,
/// `P(μ)/(1 − λ/(μ+1))`, drops under the cutoff.
fn poisson_weights(lambda: f64) -> Vec<f64> {
    let mut weights = Vec::new();
    let mut p = pmf_unchecked(lambda, 0);
    let mut mu = 0u32;
    loop {
        weights.push(p);
        mu += 1;
        p = pmf_unchecked(lambda, mu);
        let ratio = lambda / f64::from(mu + 1);
        if ratio < 1.0 && p / (1.0 - ratio) < POISSON_CUTOFF {
            break;
        }
    }
    weights
}

/// `Σ_μ w_μ Σ_κ κ·C(μ,κ)·p^κ(1−p)^{μ−κ}`, expanded term by term.
fn expected_lost(weights: &[f64], ln_fact: &[f64], p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    weights
        .iter()
        .enumerate()
        .skip(1)
        .map(|(mu, &w)| {
            let inner: f64 = (1..=mu)
                .map(|k| {
                    let ln_c = ln_fact[mu] - ln_fact[k] - ln_fact[mu - k];
                    let ln_term = ln_c + k as f64 * ln_p + (mu - k) as f64 * ln_q;
                    k as f64 * ln_term.exp()
                })
                .sum();
            w * inner
        })
        .sum()
}

/// `ln k!` for `k = 0..n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n.max(1));
    let mut acc = 0.0;
    out.push(acc);
    for k in 1..n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Exact for the small arguments the enumeration needs.
pub(crate) fn binomial_coefficient(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pmf_of_empty_source() {
        assert_eq!(poisson_pmf(0.0, 0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(0.0, 3).unwrap(), 0.0);
    }

    #[test]
    fn pmf_reference_values() {
        assert!(close(poisson_pmf(0.5, 1).unwrap(), 0.3033, 5e-5));
        // 0.02·e^{−0.2}
        assert!(close(poisson_pmf(0.2, 2).unwrap(), 0.02 * (-0.2f64).exp(), 1e-15));
        assert!(close(poisson_pmf(0.2, 2).unwrap(), 0.016375, 1e-6));
    }

    #[test]
    fn pmf_rejects_negative_mean() {
        assert_eq!(poisson_pmf(-0.1, 0), Err(DomainError::NegativeMean(-0.1)));
        assert!(poisson_pmf(f64::NAN, 0).is_err());
    }

    #[test]
    fn pmf_high_order_does_not_overflow() {
        let p = poisson_pmf(100.0, 170).unwrap();
        assert!(p.is_finite() && p > 0.0);
        let p = poisson_pmf(800.0, 170).unwrap();
        assert!(p.is_finite() && p >= 0.0);
        let p = poisson_pmf(800.0, 800).unwrap();
        // Stirling: 1/sqrt(2π·800)
        assert!(close(p, 1.0 / (2.0 * std::f64::consts::PI * 800.0).sqrt(), 1e-5));
    }

    #[test]
    fn profile_for_half_photon_mean() {
        let p = emission_profile(0.5, 4).unwrap();
        let expect = [0.6065, 0.3033, 0.0758, 0.0126, 0.0016];
        for (got, want) in p.probs.iter().zip(expect) {
            assert!(close(*got, want, 5e-5), "{got} vs {want}");
        }
        assert!(close(p.mass_above(1), 0.0902, 5e-5));
    }

    #[test]
    fn profile_rejects_low_truncation() {
        assert_eq!(emission_profile(0.5, 1), Err(DomainError::TruncationOrder(1)));
    }

    #[test]
    fn profile_tail_matches_complement() {
        let p = emission_profile(1.0, 4).unwrap();
        let sum: f64 = p.probs.iter().sum();
        assert!(close(sum + p.tail, 1.0, 1e-15));
        assert!(close(
            p.mass_above(6),
            1.0 - (0..=6).map(|j| pmf_unchecked(1.0, j)).sum::<f64>(),
            1e-15
        ));
    }

    #[test]
    fn fiber_reference_spans() {
        let f = fiber_segment(0.2, 15.0).unwrap();
        assert!(close(f.loss_db, 3.0, 1e-12));
        assert!(close(f.rho, 1.9953, 1e-4));
        assert!(close(f.p_fl, 0.4988, 1e-4));

        let f = fiber_segment(0.2, 0.0).unwrap();
        assert_eq!(f.rho, 1.0);
        assert_eq!(f.p_fl, 0.0);

        let f = fiber_segment(0.2, 50.0).unwrap();
        assert!(close(f.rho, 10.0, 1e-12));
        assert!(close(f.p_fl, 0.9, 1e-12));
    }

    #[test]
    fn fiber_rejects_bad_inputs() {
        assert!(fiber_segment(0.0, 1.0).is_err());
        assert!(fiber_segment(0.2, -1.0).is_err());
        assert!(fiber_segment(0.2, f64::INFINITY).is_err());
    }

    #[test]
    fn arrival_mean_reference() {
        assert_eq!(arrival_mean(100.0, 10.0).unwrap(), 10.0);
        assert_eq!(arrival_mean(100.0, 1.0).unwrap(), 100.0);
        assert_eq!(arrival_mean(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(arrival_mean(100.0, 0.5), Err(DomainError::Amplifying(0.5)));
    }

    #[test]
    fn solver_reference_spans() {
        assert!(close(solve_photon_loss_prob(100.0, 50.0).unwrap(), 0.50, 1e-9));
        assert!(close(solve_photon_loss_prob(100.0, 10.0).unwrap(), 0.90, 1e-9));
        assert!(close(solve_photon_loss_prob(100.0, 1.0).unwrap(), 0.99, 1e-9));
    }

    #[test]
    fn solver_domain() {
        assert!(solve_photon_loss_prob(10.0, 11.0).is_err());
        assert!(solve_photon_loss_prob(10.0, 0.0).is_err());
        assert!(close(solve_photon_loss_prob(10.0, 10.0).unwrap(), 0.0, 1e-11));
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial_coefficient(4, 0), 1.0);
        assert_eq!(binomial_coefficient(4, 3), 4.0);
        assert_eq!(binomial_coefficient(4, 2), 6.0);
        assert_eq!(binomial_coefficient(3, 4), 0.0);
    }

    #[test]
    fn long_spans_keep_their_transmittance() {
        let seg = fiber_segment(1.0, 200.0).unwrap();
        assert_eq!(seg.p_fl, 1.0);
        assert!((seg.transmittance() / 1e-20 - 1.0).abs() < 1e-12);
        assert!((seg.transmittance() * seg.rho - 1.0).abs() < 1e-12);
    }
}
