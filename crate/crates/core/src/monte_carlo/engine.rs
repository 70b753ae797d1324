use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_distr::Poisson;

use super::{Engine, McOptions, StreamCounters, TruncationMode};
use crate::config::Scenario;
use crate::enumeration::{forwarded_photons, SurvivalProbs};
use crate::photon_stats::poisson_pmf;

/// Physical mode stops the photon-count table at the first term past the
/// mean below this; the terms after it shrink geometrically.
const TABLE_TAIL: f64 = 1e-18;

/// Failures before the first success of a Bernoulli(`p`) sequence, by
/// inversion: `⌊ln U / ln(1 − p)⌋` with `U` uniform on `(0, 1]`.
#[derive(Debug, Clone, Copy)]
struct Gap {
    inv_ln_miss: f64,
}

impl Gap {
    fn new(p: f64) -> Option<Self> {
        (p > 0.0 && p < 1.0).then(|| Self {
            inv_ln_miss: 1.0 / (-p).ln_1p(),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u = 1.0 - rng.random::<f64>();
        // Saturating float-to-int cast; huge gaps just end the shard.
        (u.ln() * self.inv_ln_miss) as u64
    }
}

fn bernoulli(p: f64) -> Bernoulli {
    Bernoulli::new(p.clamp(0.0, 1.0)).expect("clamped probability")
}

/// Everything needed to play out the slots of one stream.
pub(super) struct StreamPlan {
    signal: bool,
    truncation_order: u32,
    truncation: TruncationMode,
    engine: Engine,
    poisson: Option<Poisson<f64>>,
    /// Gap distribution between slots with at least two photons (that the
    /// truncation mode keeps); `None` if there are none.
    gap: Option<Gap>,
    /// `(j, P(count ≤ j | count ≥ 2))` for the skip-ahead engine.
    conditional_cdf: Vec<(u32, f64)>,
    to_eve: Bernoulli,
    to_bob: Bernoulli,
    detect: Bernoulli,
    survive_fec: Bernoulli,
    survive_sift: Bernoulli,
}

impl StreamPlan {
    pub(super) fn new(
        mean: f64,
        signal: bool,
        scenario: &Scenario,
        survival: SurvivalProbs,
        options: &McOptions,
    ) -> Self {
        let order = scenario.truncation_order;
        let rx = &scenario.receiver;

        // Counts kept by the truncation mode, starting at two photons.
        let mut weights: Vec<(u32, f64)> = Vec::new();
        if mean > 0.0 {
            let mut j = 2u32;
            loop {
                let w = poisson_pmf(mean, j).expect("validated mean");
                weights.push((j, w));
                let done = match options.truncation {
                    TruncationMode::MatchAnalytic => j >= order,
                    TruncationMode::Physical => w < TABLE_TAIL && f64::from(j) > 2.0 * mean,
                };
                if done {
                    break;
                }
                j += 1;
            }
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        let conditional_cdf = weights
            .iter()
            .map(|&(j, w)| {
                acc += w;
                (j, acc / total)
            })
            .collect();
        let gap = Gap::new(total);

        Self {
            signal,
            truncation_order: order,
            truncation: options.truncation,
            engine: options.engine,
            poisson: (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite mean")),
            gap,
            conditional_cdf,
            to_eve: bernoulli(survival.psi_ae),
            to_bob: bernoulli(survival.psi_eb),
            detect: bernoulli(rx.eta_pd),
            survive_fec: bernoulli(1.0 - rx.alpha_err),
            survive_sift: bernoulli(1.0 - rx.alpha_sift),
        }
    }

    /// Plays out `slots` consecutive slots.
    pub(super) fn run<R: Rng>(&self, rng: &mut R, slots: u64) -> StreamCounters {
        let mut c = StreamCounters::new(self.truncation_order);
        c.slots = slots;
        match self.engine {
            Engine::Exhaustive => {
                let Some(poisson) = &self.poisson else {
                    return c;
                };
                for _ in 0..slots {
                    let j = poisson.sample(rng) as u32;
                    if j >= 2 {
                        self.play(j, rng, &mut c);
                    }
                }
            }
            Engine::SkipAhead => {
                let Some(gap) = &self.gap else {
                    return c;
                };
                let mut pos = 0u64;
                loop {
                    pos = match pos.checked_add(gap.sample(rng)) {
                        Some(p) if p < slots => p,
                        _ => break,
                    };
                    let j = self.conditional_count(rng);
                    self.play(j, rng, &mut c);
                    pos += 1;
                }
            }
        }
        c
    }

    fn conditional_count<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        self.conditional_cdf
            .iter()
            .find(|&&(_, cdf)| u < cdf)
            .or(self.conditional_cdf.last())
            .map(|&(j, _)| j)
            .expect("non-empty table when a gap distribution exists")
    }

    /// One pulse of `j` emitted photons.
    fn play<R: Rng>(&self, j: u32, rng: &mut R, c: &mut StreamCounters) {
        if self.truncation == TruncationMode::MatchAnalytic && j > self.truncation_order {
            return;
        }
        let k = (0..j).filter(|_| self.to_eve.sample(rng)).count() as u32;
        if k == 2 {
            c.eve_two_photon += 1;
        }
        let forwarded = forwarded_photons(k);
        if forwarded == 0 {
            return;
        }
        let arrived = (0..forwarded).filter(|_| self.to_bob.sample(rng)).count();
        if arrived == 0 {
            return;
        }
        let class = (k - 2) as usize;
        match c.optical.get_mut(class) {
            Some(n) => *n += 1,
            None => c.optical_beyond_order += 1,
        }
        c.optical_total += 1;

        if !(0..arrived).all(|_| self.detect.sample(rng)) {
            return;
        }
        match c.photodetected.get_mut(class) {
            Some(n) => *n += 1,
            None => c.photodetected_beyond_order += 1,
        }
        c.photodetected_total += 1;

        if self.signal && self.survive_fec.sample(rng) && self.survive_sift.sample(rng) {
            c.post_processed += 1;
        }
    }
}
