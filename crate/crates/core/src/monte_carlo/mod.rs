//! Event-by-event Monte Carlo oracle for the analytic enumeration.
//!
//! Every signal and decoy slot is played out as discrete random events:
//! Alice draws a Poisson photon count, each photon independently survives to
//! Eve, Eve applies the PNS rule to what she holds, each forwarded photon
//! independently survives to Bob, Bob's detector must register every arriving
//! photon, and each detected signal bit must survive FEC and sifting. The
//! counters mirror the analytic [`enumeration`](crate::enumeration) quantities,
//! so [`compare`] can test the closed forms against realized counts.
//!
//! # Reproducibility
//!
//! Each stream of a replication is cut into shards of [`SHARD_SLOTS`] slots.
//! Shard `i` of stream `s` (0 = signal, 1 = decoy) in replication `r` draws
//! from `ChaCha8Rng::seed_from_u64(seed)` with its stream id set to
//! `r << 24 | s << 23 | i`. The shard plan depends only on the scenario and
//! the options, never on the thread count, and shard counters merge by
//! summation, so a given `(scenario, options)` always produces bit-identical
//! tallies.

mod compare;
mod engine;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Scenario, ValidationErrors};
use crate::enumeration::{survival_probs, Ratio, SurvivalProbs};
use crate::photon_stats::DomainError;

pub use compare::{compare, AgreementReport, CounterCheck, Z_LIMIT};
use engine::StreamPlan;

/// Slots simulated by one shard.
pub const SHARD_SLOTS: u64 = 1 << 22;
const MAX_SHARDS: u64 = 1 << 23;
const MAX_REPLICATIONS: u32 = 1 << 31;

/// What happens to pulses emitted with more photons than the truncation
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    /// Dropped at the source, as in the analytic model.
    #[default]
    MatchAnalytic,
    /// Sent like any other pulse; Eve forwards all of them.
    Physical,
}

/// How slots are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Jump straight between slots carrying two or more photons with
    /// geometric gaps. Slots with fewer photons can never reach Bob, so the
    /// tallies have exactly the per-slot distribution.
    #[default]
    SkipAhead,
    /// Draw a photon count for every single slot.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub seed: u64,
    pub replications: u32,
    pub truncation: TruncationMode,
    /// Multiplier on `m_s` and `m_d`.
    pub slots_scale: u64,
    pub engine: Engine,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            replications: 1,
            truncation: TruncationMode::MatchAnalytic,
            slots_scale: 1,
            engine: Engine::SkipAhead,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("replications must be in 1..={MAX_REPLICATIONS} (got {0})")]
    Replications(u32),
    #[error("slots_scale must be >= 1 (got {0})")]
    Scale(u64),
    #[error("{stream} stream needs {shards} shards, more than the {MAX_SHARDS} the seed plan allows")]
    TooManySlots { stream: &'static str, shards: u64 },
    #[error("tally was simulated from a different scenario or scale than the analysis")]
    ScenarioMismatch,
}

/// Realized counters for one stream.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StreamCounters {
    pub slots: u64,
    /// Pulses Eve received with exactly two photons.
    pub eve_two_photon: u64,
    /// Bob optical pulses; entry `i` for Eve count `k = i + 2`.
    pub optical: Vec<u64>,
    /// Bob optical pulses from Eve counts above the truncation order
    /// (physical mode only).
    pub optical_beyond_order: u64,
    pub optical_total: u64,
    /// Photodetected bits, indexed like `optical`.
    pub photodetected: Vec<u64>,
    pub photodetected_beyond_order: u64,
    pub photodetected_total: u64,
    /// Bits surviving FEC and sifting (signal stream only).
    pub post_processed: u64,
}

impl StreamCounters {
    fn new(truncation_order: u32) -> Self {
        let classes = truncation_order as usize - 1;
        Self {
            optical: vec![0; classes],
            photodetected: vec![0; classes],
            ..Self::default()
        }
    }

    fn merge(&mut self, other: &StreamCounters) {
        self.slots += other.slots;
        self.eve_two_photon += other.eve_two_photon;
        for (a, b) in self.optical.iter_mut().zip(&other.optical) {
            *a += b;
        }
        for (a, b) in self.photodetected.iter_mut().zip(&other.photodetected) {
            *a += b;
        }
        self.optical_beyond_order += other.optical_beyond_order;
        self.optical_total += other.optical_total;
        self.photodetected_beyond_order += other.photodetected_beyond_order;
        self.photodetected_total += other.photodetected_total;
        self.post_processed += other.post_processed;
    }

    /// Optical pulses Bob received from Eve count `k`.
    pub fn optical_from_eve_count(&self, k: u32) -> u64 {
        class(&self.optical, k)
    }

    pub fn photodetected_from_eve_count(&self, k: u32) -> u64 {
        class(&self.photodetected, k)
    }
}

fn class(v: &[u64], k: u32) -> u64 {
    k.checked_sub(2).and_then(|i| v.get(i as usize)).copied().unwrap_or(0)
}

/// Metrics computed from one replication's counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedMetrics {
    pub r_k: f64,
    pub y_bs: f64,
    pub y_bd: f64,
    pub rho_y_sd: Ratio,
    pub rho_e_sd: Ratio,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTally {
    pub scenario: Scenario,
    pub replication: u32,
    pub slots_scale: u64,
    pub signal: StreamCounters,
    pub decoy: StreamCounters,
    pub metrics: RealizedMetrics,
}

impl McTally {
    /// Signal bits that survived every stage.
    pub fn post_processed_bits(&self) -> u64 {
        self.signal.post_processed
    }

    fn finish(
        scenario: &Scenario,
        replication: u32,
        slots_scale: u64,
        signal: StreamCounters,
        decoy: StreamCounters,
    ) -> Self {
        let src = &scenario.source;
        let scale = slots_scale as f64;
        let y_bs = signal.optical_total as f64 / (src.m_s as f64 * scale);
        let y_bd = decoy.optical_total as f64 / (src.m_d as f64 * scale);
        let metrics = RealizedMetrics {
            r_k: signal.post_processed as f64 / (src.total_slots() as f64 * scale),
            y_bs,
            y_bd,
            rho_y_sd: Ratio::of(y_bs, y_bd),
            rho_e_sd: Ratio::of(signal.eve_two_photon as f64, decoy.eve_two_photon as f64),
        };
        Self {
            scenario: *scenario,
            replication,
            slots_scale,
            signal,
            decoy,
            metrics,
        }
    }
}

/// Simulates `options.replications` independent replications of a scenario.
pub fn simulate(scenario: &Scenario, options: &McOptions) -> Result<Vec<McTally>, McError> {
    let scenario = scenario.validated()?;
    let survival = survival_probs(&scenario)?;
    simulate_with(&scenario, survival, options)
}

/// As [`simulate`], with the per-photon survival probabilities supplied
/// directly.
pub fn simulate_with(
    scenario: &Scenario,
    survival: SurvivalProbs,
    options: &McOptions,
) -> Result<Vec<McTally>, McError> {
    let scenario = scenario.validated()?;
    check_inputs(survival, options)?;
    let signal = run_stream(&scenario, survival, options, Stream::Signal)?;
    let decoy = run_stream(&scenario, survival, options, Stream::Decoy)?;
    Ok(assemble(&scenario, options, signal, decoy))
}

/// Simulates the base scenario at each decoy mean in `lambda_d`.
///
/// Returns exactly what calling [`simulate`] once per decoy mean would,
/// but plays the signal stream only once: its shard generators depend on
/// the seed, replication and shard index alone, so every point of the
/// sweep would draw the same signal tally anyway.
pub fn simulate_decoy_sweep(
    base: &Scenario,
    lambda_d: &[f64],
    options: &McOptions,
) -> Result<Vec<Vec<McTally>>, McError> {
    let scenarios = lambda_d
        .iter()
        .map(|&l| {
            let mut s = *base;
            s.source.lambda_d = l;
            s.validated()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let Some(first) = scenarios.first() else {
        return Ok(Vec::new());
    };
    let survival = survival_probs(first)?;
    check_inputs(survival, options)?;
    let signal = run_stream(first, survival, options, Stream::Signal)?;
    scenarios
        .iter()
        .map(|s| {
            let decoy = run_stream(s, survival, options, Stream::Decoy)?;
            Ok(assemble(s, options, signal.clone(), decoy))
        })
        .collect()
}

fn check_inputs(survival: SurvivalProbs, options: &McOptions) -> Result<(), McError> {
    if options.replications == 0 || options.replications > MAX_REPLICATIONS {
        return Err(McError::Replications(options.replications));
    }
    if options.slots_scale == 0 {
        return Err(McError::Scale(0));
    }
    for (p, name) in [(survival.psi_ae, "psi_ae"), (survival.psi_eb, "psi_eb")] {
        if !(0.0..=1.0).contains(&p) {
            return Err(DomainError::Probability { name, value: p }.into());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Signal = 0,
    Decoy = 1,
}

impl Stream {
    fn name(self) -> &'static str {
        match self {
            Stream::Signal => "signal",
            Stream::Decoy => "decoy",
        }
    }
}

/// One stream of every replication; returns the merged counters per
/// replication.
fn run_stream(
    scenario: &Scenario,
    survival: SurvivalProbs,
    options: &McOptions,
    stream: Stream,
) -> Result<Vec<StreamCounters>, McError> {
    let src = &scenario.source;
    let (mean, m) = match stream {
        Stream::Signal => (src.lambda_s, src.m_s),
        Stream::Decoy => (src.lambda_d, src.m_d),
    };
    let plan = StreamPlan::new(mean, stream == Stream::Signal, scenario, survival, options);
    let slots = m.checked_mul(options.slots_scale).ok_or(McError::TooManySlots {
        stream: stream.name(),
        shards: u64::MAX,
    })?;
    let shards = slots.div_ceil(SHARD_SLOTS);
    if shards > MAX_SHARDS {
        return Err(McError::TooManySlots {
            stream: stream.name(),
            shards,
        });
    }

    let jobs: Vec<(u32, u64)> = (0..options.replications)
        .flat_map(|r| (0..shards).map(move |i| (r, i)))
        .collect();
    let results: Vec<(u32, StreamCounters)> = jobs
        .into_par_iter()
        .map(|(replication, shard)| {
            let len = SHARD_SLOTS.min(slots - shard * SHARD_SLOTS);
            let mut rng = shard_rng(options.seed, replication, stream as u64, shard);
            (replication, plan.run(&mut rng, len))
        })
        .collect();

    let mut per_rep = vec![StreamCounters::new(scenario.truncation_order); options.replications as usize];
    for (replication, counters) in &results {
        per_rep[*replication as usize].merge(counters);
    }
    Ok(per_rep)
}

fn assemble(
    scenario: &Scenario,
    options: &McOptions,
    signal: Vec<StreamCounters>,
    decoy: Vec<StreamCounters>,
) -> Vec<McTally> {
    signal
        .into_iter()
        .zip(decoy)
        .enumerate()
        .map(|(r, (s, d))| McTally::finish(scenario, r as u32, options.slots_scale, s, d))
        .collect()
}

/// The generator for one shard; see the module docs for the mapping.
pub fn shard_rng(seed: u64, replication: u32, stream: u64, shard: u64) -> ChaCha8Rng {
    debug_assert!(stream < 2 && shard < MAX_SHARDS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(replication) << 24 | stream << 23 | shard);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        let mut s = Scenario::baseline();
        s.source.m_s = 20_000;
        s.source.m_d = 10_000;
        s.link.l_total = 4.0;
        s.source.lambda_s = 1.2;
        s.source.lambda_d = 0.6;
        s
    }

    #[test]
    fn same_seed_same_tally() {
        let opts = McOptions {
            seed: 9,
            replications: 2,
            ..McOptions::default()
        };
        let a = simulate(&small(), &opts).unwrap();
        let b = simulate(&small(), &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].signal, a[1].signal);
    }

    #[test]
    fn thread_count_does_not_change_tallies() {
        let mut s = small();
        s.source.m_s = 3 * SHARD_SLOTS / 2;
        let opts = McOptions {
            seed: 3,
            ..McOptions::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate(&s, &opts)).unwrap();
        let b = four.install(|| simulate(&s, &opts)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn opaque_first_segment_counts_nothing() {
        let s = small();
        let survival = SurvivalProbs {
            psi_ae: 0.0,
            psi_eb: 0.5,
            p_fl_ae: 1.0,
            p_fl_eb: 0.0,
        };
        for engine in [Engine::SkipAhead, Engine::Exhaustive] {
            let opts = McOptions {
                engine,
                ..McOptions::default()
            };
            let t = &simulate_with(&s, survival, &opts).unwrap()[0];
            for c in [&t.signal, &t.decoy] {
                assert_eq!(c.eve_two_photon, 0);
                assert_eq!(c.optical_total, 0);
                assert_eq!(c.photodetected_total, 0);
                assert_eq!(c.post_processed, 0);
            }
            assert_eq!(t.metrics.rho_e_sd, Ratio::Undefined);
        }
    }

    #[test]
    fn counters_are_ordered() {
        let opts = McOptions {
            truncation: TruncationMode::Physical,
            ..McOptions::default()
        };
        let t = &simulate(&small(), &opts).unwrap()[0];
        for c in [&t.signal, &t.decoy] {
            assert!(c.photodetected_total <= c.optical_total);
            assert!(c.optical_total <= c.slots);
            for (pd, op) in c.photodetected.iter().zip(&c.optical) {
                assert!(pd <= op);
            }
            let classes: u64 = c.optical.iter().sum::<u64>() + c.optical_beyond_order;
            assert_eq!(classes, c.optical_total);
        }
        assert!(t.signal.post_processed <= t.signal.photodetected_total);
        assert_eq!(t.decoy.post_processed, 0);
        assert_eq!(t.signal.slots, 20_000);
    }

    #[test]
    fn decoy_sweep_matches_independent_runs() {
        let opts = McOptions {
            seed: 17,
            replications: 2,
            ..McOptions::default()
        };
        let grid = [0.1, 0.6];
        let swept = simulate_decoy_sweep(&small(), &grid, &opts).unwrap();
        for (l, tallies) in grid.iter().zip(&swept) {
            let mut s = small();
            s.source.lambda_d = *l;
            assert_eq!(&simulate(&s, &opts).unwrap(), tallies);
        }
        assert!(simulate_decoy_sweep(&small(), &[], &opts).unwrap().is_empty());
        assert!(matches!(
            simulate_decoy_sweep(&small(), &[2.0], &opts),
            Err(McError::Invalid(_))
        ));
    }

    #[test]
    fn rejects_bad_options() {
        let s = small();
        let bad = McOptions {
            replications: 0,
            ..McOptions::default()
        };
        assert_eq!(simulate(&s, &bad), Err(McError::Replications(0)));
        let bad = McOptions {
            slots_scale: 0,
            ..McOptions::default()
        };
        assert_eq!(simulate(&s, &bad), Err(McError::Scale(0)));
        let bad = McOptions {
            slots_scale: u64::MAX,
            ..McOptions::default()
        };
        assert!(matches!(simulate(&s, &bad), Err(McError::TooManySlots { .. })));
    }

    #[test]
    fn shard_streams_differ() {
        use rand::RngCore;
        let a = shard_rng(1, 0, 0, 0).next_u64();
        let b = shard_rng(1, 0, 0, 1).next_u64();
        let c = shard_rng(1, 0, 1, 0).next_u64();
        let d = shard_rng(1, 1, 0, 0).next_u64();
        let e = shard_rng(2, 0, 0, 0).next_u64();
        let all = [a, b, c, d, e];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
