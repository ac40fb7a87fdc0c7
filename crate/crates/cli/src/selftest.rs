//! Built-in checks of the ranking and racing pipeline.
//!
//! `DUALSTACK_SELFTEST_POLICY` (default, tla or file:PATH) swaps the table
//! the default-policy checks run against. Pointing it at a modified table
//! is a negative control: the checks should then fail.

use serde::Serialize;

use dualstack_core::addr::{parse_ip, Family};
use dualstack_core::policy::{
    rank_pair_class, sort_destinations, tla_policy, PolicyTable, SourceCandidate,
    RANKED_PAIR_CLASSES,
};
use dualstack_core::race::{
    run_monte_carlo, run_race, Latency, LinkBehavior, NetworkModel, RaceConfig,
};

pub const POLICY_ENV: &str = "DUALSTACK_SELFTEST_POLICY";

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const GOLDEN_RANKS: [u8; 6] = [1, 2, 3, 4, 5, 6];

fn srcs(addrs: &[&str]) -> Vec<SourceCandidate> {
    addrs
        .iter()
        .map(|a| SourceCandidate::new(parse_ip(a).unwrap(), "tun0").unwrap())
        .collect()
}

fn dests() -> Vec<dualstack_core::IpEndpoint> {
    ["2001:db8::10", "203.0.113.10"]
        .iter()
        .map(|a| parse_ip(a).unwrap())
        .collect()
}

fn symmetric_net() -> NetworkModel {
    dests().into_iter().fold(NetworkModel::new(), |n, d| {
        n.with(d, LinkBehavior::up(Latency::constant(40.0)))
    })
}

fn rank_golden(table: &PolicyTable) -> Check {
    let got: Vec<String> = RANKED_PAIR_CLASSES
        .iter()
        .map(|&(s, d)| match rank_pair_class(s, d, table) {
            Ok(r) => r.to_string(),
            Err(e) => e.to_string(),
        })
        .collect();
    let want: Vec<String> = GOLDEN_RANKS.iter().map(u8::to_string).collect();
    let names: Vec<String> = RANKED_PAIR_CLASSES
        .iter()
        .zip(&got)
        .map(|((s, d), r)| format!("({s},{d})={r}"))
        .collect();
    Check {
        name: "rank-golden",
        passed: got == want,
        detail: names.join(" "),
    }
}

fn race_winner(sources: &[SourceCandidate], table: &PolicyTable) -> Option<Family> {
    let pairs = sort_destinations(&dests(), sources, table);
    run_race(&pairs, &symmetric_net(), &RaceConfig::default())
        .ok()
        .and_then(|o| o.winner_family)
}

fn ula_prefers_v4(table: &PolicyTable) -> Check {
    let winner = race_winner(&srcs(&["fd00::2", "10.0.0.2"]), table);
    Check {
        name: "ula-prefers-v4",
        passed: winner == Some(Family::V4),
        detail: format!(
            "winner family {}",
            winner.map_or("none".into(), |f| f.to_string())
        ),
    }
}

fn gua_prefers_v6(table: &PolicyTable) -> Check {
    let winner = race_winner(&srcs(&["2001:db8:ffff::2", "10.0.0.2"]), table);
    Check {
        name: "gua-prefers-v6",
        passed: winner == Some(Family::V6),
        detail: format!(
            "winner family {}",
            winner.map_or("none".into(), |f| f.to_string())
        ),
    }
}

fn tla_flip() -> Check {
    let winner = race_winner(&srcs(&["fc00::2", "10.0.0.2"]), &tla_policy());
    Check {
        name: "tla-flip",
        passed: winner == Some(Family::V6),
        detail: format!(
            "winner family {}",
            winner.map_or("none".into(), |f| f.to_string())
        ),
    }
}

/// v4 sorted first with Exp(200 ms) latency, v6 fixed at 10 ms behind a
/// 250 ms delay: v6 wins exactly when v4 exceeds 260 ms.
fn monte_carlo(table: &PolicyTable, seed: u64) -> Check {
    let expected = (-260.0f64 / 200.0).exp();
    let d = dests();
    let net = NetworkModel::new()
        .with(d[0], LinkBehavior::up(Latency::constant(10.0)))
        .with(d[1], LinkBehavior::up(Latency::exponential(200.0)));
    let pairs = sort_destinations(&d, &srcs(&["fd00::2", "10.0.0.2"]), table);
    let v4_first = pairs.first().map(|p| p.family()) == Some(Family::V4);
    match run_monte_carlo(&pairs, &net, &RaceConfig::default(), 10_000, seed) {
        Ok(mc) => Check {
            name: "monte-carlo",
            passed: v4_first && (mc.v6_wins - expected).abs() <= 0.02,
            detail: format!(
                "v6_wins {:.4} expected {:.4} +/- 0.02{}",
                mc.v6_wins,
                expected,
                if v4_first {
                    ""
                } else {
                    " (v4 not sorted first)"
                }
            ),
        },
        Err(e) => Check {
            name: "monte-carlo",
            passed: false,
            detail: e.to_string(),
        },
    }
}

pub fn run(table: &PolicyTable, seed: u64) -> Vec<Check> {
    vec![
        rank_golden(table),
        ula_prefers_v4(table),
        gua_prefers_v6(table),
        tla_flip(),
        monte_carlo(table, seed),
    ]
}
