//! Scenario files: a tunnel addressing setup, a destination set, a network
//! model and race parameters, evaluated end to end (sort, then race or
//! Monte Carlo).
//!
//! The format is line oriented. Top-level `key = value` lines come first,
//! then `[sources]`, `[destinations]`, `[network]` and `[race]` sections.
//! `#` starts a comment.
//!
//! ```text
//! name = vpn-ula
//! policy = default            # default | tla | file:<path>
//! trials = 1
//! seed = 7
//!
//! [sources]
//! fd00::2 = ula iface=tun0    # class annotation is checked; flags: deprecated temporary home
//! 10.0.0.2 = private-v4
//!
//! [destinations]
//! 2001:db8::10
//! 203.0.113.10
//!
//! [network]
//! 2001:db8::10 = const 50     # const <ms> | exp <mean> | uniform <lo> <hi>, optional `fail`
//! 203.0.113.10 = const 50
//!
//! [race]
//! connection_attempt_delay = 250
//! max_attempts = 8
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{parse_ip, AddressClass, Family, IpEndpoint};
use crate::policy::{
    default_policy, parse_policy_config, sort_destinations_explained, tla_policy, CandidatePair,
    DestRule, DroppedDestination, PolicyTable, SourceCandidate,
};
use crate::race::{
    run_monte_carlo, run_race, LinkBehavior, MonteCarloSummary, NetworkModel, RaceConfig,
    RaceError, RaceOutcome,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{0}")]
    Race(#[from] RaceError),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Which policy table a scenario uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyChoice {
    Default,
    Tla,
    File(PathBuf),
}

impl PolicyChoice {
    pub fn parse(text: &str) -> Result<Self, String> {
        match text.trim() {
            "default" => Ok(PolicyChoice::Default),
            "tla" => Ok(PolicyChoice::Tla),
            t => match t.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(PolicyChoice::File(PathBuf::from(p))),
                _ => Err(format!("expected default, tla or file:<path>, got `{t}`")),
            },
        }
    }

    /// Resolves a relative file path against `base`.
    pub fn resolved(&self, base: Option<&Path>) -> PolicyChoice {
        match (self, base) {
            (PolicyChoice::File(p), Some(base)) if p.is_relative() => {
                PolicyChoice::File(base.join(p))
            }
            _ => self.clone(),
        }
    }

    pub fn load(&self) -> Result<PolicyTable, String> {
        match self {
            PolicyChoice::Default => Ok(default_policy()),
            PolicyChoice::Tla => Ok(tla_policy()),
            PolicyChoice::File(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                parse_policy_config(&text).map_err(|e| format!("{}: {e}", path.display()))
            }
        }
    }
}

impl fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyChoice::Default => f.write_str("default"),
            PolicyChoice::Tla => f.write_str("tla"),
            PolicyChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSource {
    pub source: SourceCandidate,
    pub class: AddressClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub policy: PolicyChoice,
    pub sources: Vec<ScenarioSource>,
    pub destinations: Vec<IpEndpoint>,
    pub network: NetworkModel,
    pub race: RaceConfig,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Top,
    Sources,
    Destinations,
    Network,
    Race,
}

fn split_kv<'a>(line: &'a str, path: &str) -> Result<(&'a str, &'a str), ScenarioError> {
    line.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| invalid(path, format!("expected `key = value`, got `{line}`")))
}

fn parse_source(key: &str, value: &str, path: &str) -> Result<ScenarioSource, ScenarioError> {
    let addr = parse_ip(key).map_err(|e| invalid(path, e.to_string()))?;
    let actual = addr.class();
    let mut iface = "tun0".to_string();
    let mut source_attrs = crate::policy::SourceAttrs::default();
    let mut annotated = None;
    for token in value.split_whitespace() {
        if let Some(name) = token.strip_prefix("iface=") {
            iface = name.to_string();
        } else if token == "deprecated" {
            source_attrs.deprecated = true;
        } else if token == "temporary" {
            source_attrs.temporary = true;
        } else if token == "home" {
            source_attrs.home = true;
        } else if annotated.is_none() {
            annotated = Some(
                token
                    .parse::<AddressClass>()
                    .map_err(|e| invalid(path, e.to_string()))?,
            );
        } else {
            return Err(invalid(path, format!("unexpected token `{token}`")));
        }
    }
    if let Some(class) = annotated {
        if class != actual {
            return Err(invalid(
                path,
                format!("{addr} is annotated `{class}` but classifies as `{actual}`"),
            ));
        }
    }
    let mut source = SourceCandidate::new(addr, iface).map_err(|e| invalid(path, e.to_string()))?;
    source.attrs = source_attrs;
    Ok(ScenarioSource {
        source,
        class: actual,
    })
}

fn parse_link(value: &str, path: &str) -> Result<LinkBehavior, ScenarioError> {
    let mut tokens: Vec<&str> = value.split_whitespace().collect();
    let fails = tokens.contains(&"fail");
    tokens.retain(|t| *t != "fail");
    if tokens.is_empty() {
        return Err(invalid(path, "missing latency"));
    }
    let latency = tokens
        .join(" ")
        .parse()
        .map_err(|e: RaceError| invalid(path, e.to_string()))?;
    Ok(LinkBehavior { latency, fails })
}

impl Scenario {
    /// Parses scenario text. Relative `file:` policies resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let mut name = None;
        let mut description = None;
        let mut policy = PolicyChoice::Default;
        let mut trials = 1u64;
        let mut seed = 0u64;
        let mut sources = Vec::new();
        let mut destinations = Vec::new();
        let mut network = NetworkModel::new();
        let mut race = RaceConfig::default();
        let mut section = Section::Top;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = match &line[1..line.len() - 1] {
                    "sources" => Section::Sources,
                    "destinations" => Section::Destinations,
                    "network" => Section::Network,
                    "race" => Section::Race,
                    other => {
                        return Err(invalid(
                            format!("line {line_no}"),
                            format!("unknown section `[{other}]`"),
                        ))
                    }
                };
                continue;
            }
            match section {
                Section::Top => {
                    let (key, value) = split_kv(line, &format!("line {line_no}"))?;
                    let num = |v: &str| {
                        v.parse::<u64>().map_err(|_| {
                            invalid(key, format!("`{v}` is not a non-negative integer"))
                        })
                    };
                    match key {
                        "name" => name = Some(value.to_string()),
                        "description" => description = Some(value.to_string()),
                        "policy" => {
                            policy = PolicyChoice::parse(value).map_err(|m| invalid("policy", m))?
                        }
                        "trials" => trials = num(value)?,
                        "seed" => seed = num(value)?,
                        other => return Err(invalid(other, "unknown key")),
                    }
                }
                Section::Sources => {
                    let path = format!("sources[{}]", sources.len());
                    let (key, value) = match line.split_once('=') {
                        Some((k, v)) => (k.trim(), v.trim()),
                        None => (line, ""),
                    };
                    sources.push(parse_source(key, value, &path)?);
                }
                Section::Destinations => {
                    let path = format!("destinations[{}]", destinations.len());
                    let addr = parse_ip(line).map_err(|e| invalid(&path, e.to_string()))?;
                    if destinations.contains(&addr) {
                        return Err(invalid(path, format!("duplicate destination {addr}")));
                    }
                    destinations.push(addr);
                }
                Section::Network => {
                    let (key, value) = split_kv(line, &format!("network (line {line_no})"))?;
                    let path = format!("network.{key}");
                    let addr = parse_ip(key).map_err(|e| invalid(&path, e.to_string()))?;
                    network.entries.insert(addr, parse_link(value, &path)?);
                }
                Section::Race => {
                    let (key, value) = split_kv(line, &format!("race (line {line_no})"))?;
                    let path = format!("race.{key}");
                    match key {
                        "connection_attempt_delay" => {
                            race.connection_attempt_delay_ms = value
                                .parse()
                                .map_err(|_| invalid(&path, format!("`{value}` is not a number")))?
                        }
                        "max_attempts" => {
                            race.max_attempts = Some(value.parse().map_err(|_| {
                                invalid(&path, format!("`{value}` is not an integer"))
                            })?)
                        }
                        _ => return Err(invalid(path, "unknown key")),
                    }
                }
            }
        }

        let scenario = Scenario {
            name: name.ok_or_else(|| invalid("name", "missing"))?,
            description,
            policy: policy.resolved(base_dir),
            sources,
            destinations,
            network: network.with_seed(seed),
            race,
            trials,
            seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(path.display().to_string(), e.to_string()))?;
        Scenario::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.sources.is_empty() {
            return Err(invalid("sources", "at least one source is required"));
        }
        if self.destinations.is_empty() {
            return Err(invalid(
                "destinations",
                "at least one destination is required",
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        for (i, d) in self.destinations.iter().enumerate() {
            if self.network.get(d).is_none() {
                return Err(invalid(
                    format!("network.{d}"),
                    format!("destinations[{i}] has no network entry"),
                ));
            }
        }
        self.race
            .validate()
            .map_err(|e| invalid("race", e.to_string()))?;
        if let PolicyChoice::File(p) = &self.policy {
            if !p.exists() {
                return Err(invalid("policy", format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn with_policy(mut self, policy: PolicyChoice) -> Scenario {
        self.policy = policy;
        self
    }

    /// Replaces the source list, keeping the interface of the first
    /// original source.
    pub fn with_source_addrs(mut self, addrs: &[IpEndpoint]) -> Scenario {
        let iface = self
            .sources
            .first()
            .map(|s| s.source.interface_id.clone())
            .unwrap_or_else(|| "tun0".into());
        self.sources = addrs
            .iter()
            .map(|a| ScenarioSource {
                source: SourceCandidate::new(*a, iface.clone()).expect("non-empty iface"),
                class: a.class(),
            })
            .collect();
        self
    }

    pub fn source_candidates(&self) -> Vec<SourceCandidate> {
        self.sources.iter().map(|s| s.source.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PrefersV4,
    PrefersV6,
    Mixed,
}

impl Verdict {
    pub fn from_fractions(v4_wins: f64, v6_wins: f64) -> Verdict {
        if v4_wins > v6_wins {
            Verdict::PrefersV4
        } else if v6_wins > v4_wins {
            Verdict::PrefersV6
        } else {
            Verdict::Mixed
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::PrefersV4 => "prefers_v4",
            Verdict::PrefersV6 => "prefers_v6",
            Verdict::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPair {
    pub rank: usize,
    pub pair: CandidatePair,
    pub source_class: AddressClass,
    pub dest_class: AddressClass,
    /// Rule that placed this pair ahead of the next one.
    pub decided_by: Option<DestRule>,
}

/// Ranked pairs with the rule trace between neighbours.
pub fn rank_with_trace(
    dests: &[IpEndpoint],
    sources: &[SourceCandidate],
    table: &PolicyTable,
) -> (Vec<RankedPair>, Vec<DroppedDestination>) {
    let outcome = sort_destinations_explained(dests, sources, table);
    let ranked = outcome
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| RankedPair {
            rank: i + 1,
            pair: p.clone(),
            source_class: p.source.addr.class(),
            dest_class: p.dest.class(),
            decided_by: outcome.decisions.get(i).copied(),
        })
        .collect();
    (ranked, outcome.dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub policy: String,
    pub ranked: Vec<RankedPair>,
    pub dropped: Vec<String>,
    pub race: Option<RaceOutcome>,
    pub monte_carlo: Option<MonteCarloSummary>,
    pub v4_wins: f64,
    pub v6_wins: f64,
    pub failures: f64,
    pub verdict: Verdict,
}

/// Sorts the scenario's candidates under `table` and races them.
pub fn evaluate_with(
    scenario: &Scenario,
    table: &PolicyTable,
) -> Result<ScenarioResult, ScenarioError> {
    let sources = scenario.source_candidates();
    let (ranked, dropped) = rank_with_trace(&scenario.destinations, &sources, table);
    let candidates: Vec<CandidatePair> = ranked.iter().map(|r| r.pair.clone()).collect();

    let mut race = None;
    let mut monte_carlo = None;
    let (v4_wins, v6_wins, failures) = if candidates.is_empty() {
        (0.0, 0.0, 1.0)
    } else if scenario.trials > 1 {
        let mc = run_monte_carlo(
            &candidates,
            &scenario.network,
            &scenario.race,
            scenario.trials,
            scenario.seed,
        )?;
        monte_carlo = Some(mc);
        (mc.v4_wins, mc.v6_wins, mc.failures)
    } else {
        let outcome = run_race(&candidates, &scenario.network, &scenario.race)?;
        let fractions = match outcome.winner_family {
            Some(Family::V4) => (1.0, 0.0, 0.0),
            Some(Family::V6) => (0.0, 1.0, 0.0),
            None => (0.0, 0.0, 1.0),
        };
        race = Some(outcome);
        fractions
    };

    Ok(ScenarioResult {
        name: scenario.name.clone(),
        policy: scenario.policy.to_string(),
        ranked,
        dropped: dropped
            .into_iter()
            .map(|d| format!("{}: {}", d.dest, d.reason))
            .collect(),
        race,
        monte_carlo,
        v4_wins,
        v6_wins,
        failures,
        verdict: Verdict::from_fractions(v4_wins, v6_wins),
    })
}

pub fn evaluate(scenario: &Scenario) -> Result<ScenarioResult, ScenarioError> {
    let table = scenario.policy.load().map_err(|m| invalid("policy", m))?;
    evaluate_with(scenario, &table)
}
