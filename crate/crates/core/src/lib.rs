//! Dual-stack connection pipeline and VPN IPv6 leak analysis.
//!
//! * [`addr`]: address parsing, classification and prefixes.
//! * [`policy`]: RFC 6724 policy tables, source selection and destination
//!   sorting.
//! * [`race`]: deterministic Happy Eyeballs race simulation.
//! * [`leak`]: session log classification and per-provider reports.
//! * [`scenario`]: scenario files tying sorting and racing together.
//! * [`fixture`]: synthetic session logs with planted ground truth.

pub mod addr;
pub mod fixture;
pub mod leak;
pub mod policy;
pub mod prefix_map;
pub mod race;
pub mod scenario;

pub use addr::{
    classify, common_prefix_len, parse_ip, prefix_contains, AddrError, AddressClass, Family,
    IpEndpoint, Prefix, Scope,
};
pub use policy::{
    default_policy, parse_policy_config, rank_pair_class, select_source, sort_destinations,
    tla_policy, CandidatePair, PolicyError, PolicyRow, PolicyTable, SourceCandidate,
};
pub use prefix_map::PrefixMap;
pub use race::{
    run_monte_carlo, run_race, Latency, LinkBehavior, MonteCarloSummary, NetworkModel, RaceConfig,
    RaceError, RaceOutcome,
};
pub use scenario::{
    evaluate, evaluate_with, PolicyChoice, Scenario, ScenarioError, ScenarioResult, Verdict,
};
