//! Deterministic discrete-event simulation of Happy Eyeballs connection
//! racing over a ranked candidate list.
//!
//! Attempt `k` starts at `k * connection_attempt_delay` unless some earlier
//! attempt has already connected. A failed attempt does not pull the next
//! one forward. The first successful connection, by absolute time, wins;
//! simultaneous connections go to the earlier list position. Time is an
//! integer number of microseconds on a virtual clock.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{Family, IpEndpoint};
use crate::policy::CandidatePair;

/// RFC 8305 recommended connection attempt delay.
pub const DEFAULT_ATTEMPT_DELAY_MS: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RaceError {
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("network model has no entry for {0}")]
    MissingNetworkEntry(IpEndpoint),
    #[error("invalid race configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid latency `{0}`")]
    InvalidLatency(String),
    #[error("trials must be at least 1")]
    ZeroTrials,
}

/// Connect latency of one destination, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Latency {
    Constant { ms: f64 },
    Exponential { mean_ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
}

impl Latency {
    pub fn constant(ms: f64) -> Self {
        Latency::Constant { ms }
    }

    pub fn exponential(mean_ms: f64) -> Self {
        Latency::Exponential { mean_ms }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Latency::Constant { .. })
    }

    pub fn validate(&self) -> Result<(), RaceError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match *self {
            Latency::Constant { ms } => ok(ms),
            Latency::Exponential { mean_ms } => ok(mean_ms) && mean_ms > 0.0,
            Latency::Uniform { min_ms, max_ms } => ok(min_ms) && ok(max_ms) && min_ms <= max_ms,
        };
        if valid {
            Ok(())
        } else {
            Err(RaceError::InvalidLatency(self.to_string()))
        }
    }

    /// Draws one latency in microseconds.
    pub fn sample_us<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let ms = match *self {
            Latency::Constant { ms } => ms,
            Latency::Exponential { mean_ms } => {
                Exp::new(1.0 / mean_ms).expect("validated mean").sample(rng)
            }
            Latency::Uniform { min_ms, max_ms } => Uniform::new_inclusive(min_ms, max_ms)
                .expect("validated bounds")
                .sample(rng),
        };
        ms_to_us(ms)
    }
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round().max(0.0) as u64
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Latency::Constant { ms } => write!(f, "const {ms}"),
            Latency::Exponential { mean_ms } => write!(f, "exp {mean_ms}"),
            Latency::Uniform { min_ms, max_ms } => write!(f, "uniform {min_ms} {max_ms}"),
        }
    }
}

impl FromStr for Latency {
    type Err = RaceError;

    /// `const <ms>`, `exp <mean-ms>`, `uniform <min-ms> <max-ms>`, or a bare
    /// number for a constant.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RaceError::InvalidLatency(s.trim().to_string());
        let fields: Vec<&str> = s.split_whitespace().collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let latency = match fields[..] {
            [v] => Latency::Constant { ms: num(v)? },
            ["const", v] => Latency::Constant { ms: num(v)? },
            ["exp", m] => Latency::Exponential { mean_ms: num(m)? },
            ["uniform", lo, hi] => Latency::Uniform {
                min_ms: num(lo)?,
                max_ms: num(hi)?,
            },
            _ => return Err(bad()),
        };
        latency.validate()?;
        Ok(latency)
    }
}

/// Network behaviour towards one destination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBehavior {
    pub latency: Latency,
    #[serde(default)]
    pub fails: bool,
}

impl LinkBehavior {
    pub fn up(latency: Latency) -> Self {
        LinkBehavior {
            latency,
            fails: false,
        }
    }

    pub fn failing(latency: Latency) -> Self {
        LinkBehavior {
            latency,
            fails: true,
        }
    }
}

/// Per-destination connect behaviour plus the seed used by [`run_race`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkModel {
    pub entries: BTreeMap<IpEndpoint, LinkBehavior>,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, dest: IpEndpoint, behavior: LinkBehavior) -> Self {
        self.entries.insert(dest, behavior);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn get(&self, dest: &IpEndpoint) -> Option<&LinkBehavior> {
        self.entries.get(dest)
    }

    pub fn is_deterministic(&self) -> bool {
        self.entries.values().all(|b| b.latency.is_deterministic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaceConfig {
    pub connection_attempt_delay_ms: f64,
    /// Upper bound on attempts started; `None` races every candidate.
    pub max_attempts: Option<usize>,
}

impl Default for RaceConfig {
    fn default() -> Self {
        RaceConfig {
            connection_attempt_delay_ms: DEFAULT_ATTEMPT_DELAY_MS,
            max_attempts: None,
        }
    }
}

impl RaceConfig {
    pub fn with_delay_ms(delay: f64) -> Self {
        RaceConfig {
            connection_attempt_delay_ms: delay,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RaceError> {
        let d = self.connection_attempt_delay_ms;
        if !(d.is_finite() && d > 0.0) || ms_to_us(d) == 0 {
            return Err(RaceError::InvalidConfig(format!(
                "connection attempt delay must be positive, got {d}"
            )));
        }
        if self.max_attempts == Some(0) {
            return Err(RaceError::InvalidConfig(
                "max_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn delay_us(&self) -> u64 {
        ms_to_us(self.connection_attempt_delay_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AttemptStarted,
    Connected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub at_us: u64,
    /// Position in the candidate list.
    pub candidate: usize,
    pub dest: IpEndpoint,
    pub event: EventKind,
}

impl TimelineEvent {
    pub fn at_ms(&self) -> f64 {
        self.at_us as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceOutcome {
    pub winner: Option<CandidatePair>,
    pub winner_index: Option<usize>,
    pub winner_family: Option<Family>,
    pub connected_at_us: Option<u64>,
    pub timeline: Vec<TimelineEvent>,
}

/// Realised behaviour of one candidate in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Realized {
    pub latency_us: u64,
    pub fails: bool,
}

/// Runs the race over already-sampled latencies, one per candidate.
pub fn race_realized(
    candidates: &[CandidatePair],
    realized: &[Realized],
    cfg: &RaceConfig,
) -> Result<RaceOutcome, RaceError> {
    if candidates.is_empty() {
        return Err(RaceError::NoCandidates);
    }
    cfg.validate()?;
    assert_eq!(
        candidates.len(),
        realized.len(),
        "one realisation per candidate"
    );

    // Completions sort before starts at the same instant, and lower list
    // positions first, so a connection at t ends the race before an
    // attempt scheduled for t begins.
    const COMPLETE: u8 = 0;
    const START: u8 = 1;
    let mut queue: BinaryHeap<Reverse<(u64, u8, usize)>> = BinaryHeap::new();
    queue.push(Reverse((0, START, 0)));

    let limit = cfg.max_attempts.unwrap_or(usize::MAX).min(candidates.len());
    let delay = cfg.delay_us();
    let mut timeline = Vec::new();

    while let Some(Reverse((now, kind, idx))) = queue.pop() {
        let dest = candidates[idx].dest;
        if kind == START {
            timeline.push(TimelineEvent {
                at_us: now,
                candidate: idx,
                dest,
                event: EventKind::AttemptStarted,
            });
            let done_at = now.saturating_add(realized[idx].latency_us);
            queue.push(Reverse((done_at, COMPLETE, idx)));
            if idx + 1 < limit {
                queue.push(Reverse((now.saturating_add(delay), START, idx + 1)));
            }
        } else if realized[idx].fails {
            timeline.push(TimelineEvent {
                at_us: now,
                candidate: idx,
                dest,
                event: EventKind::Failed,
            });
        } else {
            timeline.push(TimelineEvent {
                at_us: now,
                candidate: idx,
                dest,
                event: EventKind::Connected,
            });
            return Ok(RaceOutcome {
                winner: Some(candidates[idx].clone()),
                winner_index: Some(idx),
                winner_family: Some(candidates[idx].family()),
                connected_at_us: Some(now),
                timeline,
            });
        }
    }

    Ok(RaceOutcome {
        winner: None,
        winner_index: None,
        winner_family: None,
        connected_at_us: None,
        timeline,
    })
}

fn behaviors<'a>(
    candidates: &[CandidatePair],
    net: &'a NetworkModel,
) -> Result<Vec<&'a LinkBehavior>, RaceError> {
    candidates
        .iter()
        .map(|c| {
            let b = net
                .get(&c.dest)
                .ok_or(RaceError::MissingNetworkEntry(c.dest))?;
            b.latency.validate()?;
            Ok(b)
        })
        .collect()
}

fn realize<R: Rng + ?Sized>(links: &[&LinkBehavior], rng: &mut R) -> Vec<Realized> {
    links
        .iter()
        .map(|b| Realized {
            latency_us: b.latency.sample_us(rng),
            fails: b.fails,
        })
        .collect()
}

/// One race, sampling stochastic latencies from the model's seed.
pub fn run_race(
    candidates: &[CandidatePair],
    net: &NetworkModel,
    cfg: &RaceConfig,
) -> Result<RaceOutcome, RaceError> {
    if candidates.is_empty() {
        return Err(RaceError::NoCandidates);
    }
    let links = behaviors(candidates, net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(net.seed);
    race_realized(candidates, &realize(&links, &mut rng), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: u64,
    pub v4_wins: f64,
    pub v6_wins: f64,
    pub failures: f64,
}

/// Runs `trials` independent races with latencies drawn from one seeded
/// stream.
pub fn run_monte_carlo(
    candidates: &[CandidatePair],
    net: &NetworkModel,
    cfg: &RaceConfig,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloSummary, RaceError> {
    run_monte_carlo_with(candidates, net, cfg, trials, seed, |_| ())
}

/// Like [`run_monte_carlo`], handing every outcome to `observe`.
pub fn run_monte_carlo_with<F: FnMut(&RaceOutcome)>(
    candidates: &[CandidatePair],
    net: &NetworkModel,
    cfg: &RaceConfig,
    trials: u64,
    seed: u64,
    mut observe: F,
) -> Result<MonteCarloSummary, RaceError> {
    if trials == 0 {
        return Err(RaceError::ZeroTrials);
    }
    if candidates.is_empty() {
        return Err(RaceError::NoCandidates);
    }
    cfg.validate()?;
    let links = behaviors(candidates, net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut v4, mut v6, mut failed) = (0u64, 0u64, 0u64);
    for _ in 0..trials {
        let outcome = race_realized(candidates, &realize(&links, &mut rng), cfg)?;
        match outcome.winner_family {
            Some(Family::V4) => v4 += 1,
            Some(Family::V6) => v6 += 1,
            None => failed += 1,
        }
        observe(&outcome);
    }
    let n = trials as f64;
    Ok(MonteCarloSummary {
        trials,
        v4_wins: v4 as f64 / n,
        v6_wins: v6 as f64 / n,
        failures: failed as f64 / n,
    })
}
