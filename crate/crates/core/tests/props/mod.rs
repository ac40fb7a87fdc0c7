//! Randomised property checks shared by the `properties` test target and
//! the acceptance suite. Each check runs `cases` deterministic cases and
//! reports the first counterexample as an error string.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use dualstack_core::addr::{common_prefix_len, parse_ip, AddressClass, Family, IpEndpoint, Prefix};
use dualstack_core::leak::{
    classify_session, dedupe, AggregateOptions, Aggregator, AsCategory, ClassifiedSession,
    Directory, Session, SessionCategory,
};
use dualstack_core::policy::{
    default_policy, parse_policy_config, sort_destinations, tla_policy, PolicyRow, PolicyTable,
    SourceCandidate,
};
use dualstack_core::prefix_map::PrefixMap;
use dualstack_core::race::{
    race_realized, run_monte_carlo, run_race, Latency, LinkBehavior, NetworkModel, RaceConfig,
    Realized,
};

pub type Check = fn(u32) -> Result<(), String>;

/// Every suite, by name.
pub const SUITES: [(&str, Check); 14] = [
    ("policy-config round-trip", policy_config_round_trip),
    ("classification totality", classification_totality),
    ("cpl symmetry", cpl_matches_bit_oracle),
    ("prefix monotonicity", prefix_monotonicity),
    ("longest-prefix lookup", longest_prefix_lookup),
    ("sort determinism", sort_determinism),
    ("tla flip", tla_flip),
    ("race determinism", race_determinism),
    ("race winner optimality", race_winner_optimality),
    ("race monotonicity", race_monotonicity),
    ("race order sensitivity", race_order_sensitivity),
    ("dedupe idempotence", dedupe_idempotence),
    (
        "partition-independent aggregation",
        partition_independent_aggregation,
    ),
    ("prefetch precedence", prefetch_precedence),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn any_addr() -> impl Strategy<Value = IpEndpoint> {
    prop_oneof![
        any::<u32>().prop_map(|v| IpEndpoint::from_v4(v.into())),
        any::<u128>().prop_map(IpEndpoint::from_raw),
        // Dense corners: fc00::/7, the mapped block, loopback, link-local.
        (0xfcu128..=0xfd, any::<u128>())
            .prop_map(|(hi, lo)| IpEndpoint::from_raw((hi << 120) | (lo >> 8))),
        prop::sample::select(vec![
            "::1",
            "127.0.0.1",
            "fe80::1",
            "169.254.1.1",
            "2002::1",
            "2001::1",
            "fec0::1",
            "3ffe::1",
            "::"
        ])
        .prop_map(|s| parse_ip(s).unwrap()),
    ]
}

fn any_prefix() -> impl Strategy<Value = Prefix> {
    (any_addr(), 0u8..=128).prop_map(|(a, len)| Prefix::truncating(&a, len))
}

// ---------------------------------------------------------------- policy

pub fn policy_config_round_trip(cases: u32) -> Result<(), String> {
    let rows = prop::collection::vec((any_prefix(), 0u32..200, 0u32..64), 0..12);
    check(
        cases,
        (
            rows,
            0u32..200,
            0u32..64,
            prop::collection::vec(any_addr(), 8),
        ),
        |(rows, p0, l0, probes)| {
            let mut seen = HashSet::new();
            let mut table_rows = vec![PolicyRow {
                prefix: Prefix::ANY,
                precedence: p0,
                label: l0,
            }];
            seen.insert(Prefix::ANY);
            for (prefix, precedence, label) in rows {
                if seen.insert(prefix) {
                    table_rows.push(PolicyRow {
                        prefix,
                        precedence,
                        label,
                    });
                }
            }
            let table =
                PolicyTable::new(table_rows).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let text = table.to_config();
            let back = parse_policy_config(&text)
                .map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(&back, &table);
            for a in probes {
                prop_assert_eq!(back.lookup(&a), table.lookup(&a));
            }
            Ok(())
        },
    )
}

pub fn classification_totality(cases: u32) -> Result<(), String> {
    let default = default_policy();
    let tla = tla_policy();
    check(cases, any_addr(), |a| {
        let class = a.class();
        prop_assert!(AddressClass::ALL.contains(&class));
        prop_assert_eq!(class.scope(), a.scope());
        prop_assert_eq!(parse_ip(&a.to_string()).unwrap(), a);
        let top = a.raw() >> 120;
        prop_assert_eq!(class == AddressClass::Tla, top == 0xfc);
        prop_assert_eq!(class == AddressClass::Ula, top == 0xfd);
        if class == AddressClass::Tla {
            prop_assert_eq!(tla.lookup(&a).label, 1);
            prop_assert_eq!(tla.lookup(&a).precedence, 35);
            prop_assert_eq!(default.lookup(&a).label, 13);
        }
        if class == AddressClass::Ula {
            prop_assert_eq!(tla.lookup(&a), default.lookup(&a));
        }
        prop_assert_eq!(a.family() == Family::V4, a.to_v4().is_some());
        Ok(())
    })
}

/// Leading equal bits of two bit strings.
fn bit_oracle(a: &IpEndpoint, b: &IpEndpoint) -> u8 {
    let bits = |e: &IpEndpoint| -> String {
        match e.to_v4() {
            Some(v4) => format!("{:032b}", u32::from(v4)),
            None => format!("{:0128b}", e.raw()),
        }
    };
    bits(a)
        .chars()
        .zip(bits(b).chars())
        .take_while(|(x, y)| x == y)
        .count() as u8
}

pub fn cpl_matches_bit_oracle(cases: u32) -> Result<(), String> {
    let pair = any_addr().prop_flat_map(|a| {
        // Mostly same-family partners sharing a random number of bits.
        let near = (0u32..=128, any::<u128>()).prop_map(move |(keep, noise)| {
            let mask = if keep == 0 {
                0
            } else {
                u128::MAX << (128 - keep)
            };
            let raw = (a.raw() & mask) | (noise & !mask);
            IpEndpoint::from_raw(raw)
        });
        (Just(a), prop_oneof![near, any_addr()])
    });
    check(cases, pair, |(a, b)| {
        match (common_prefix_len(&a, &b), common_prefix_len(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert_eq!(a.family(), b.family());
                prop_assert_eq!(x, bit_oracle(&a, &b));
                prop_assert_eq!(
                    common_prefix_len(&a, &a).unwrap(),
                    if a.is_v4() { 32 } else { 128 }
                );
            }
            (Err(_), Err(_)) => prop_assert_ne!(a.family(), b.family()),
            _ => prop_assert!(false, "asymmetric result"),
        }
        Ok(())
    })
}

pub fn prefix_monotonicity(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any_addr(), 0u8..=128, 0u8..=128, any_addr()),
        |(a, l1, l2, other)| {
            let (short, long) = (l1.min(l2), l1.max(l2));
            let ps = Prefix::truncating(&a, short);
            let pl = Prefix::truncating(&a, long);
            prop_assert!(ps.contains(&a) && pl.contains(&a));
            prop_assert!(ps.covers(&pl));
            if pl.contains(&other) {
                prop_assert!(ps.contains(&other));
            }
            prop_assert_eq!(ps.to_string().parse::<Prefix>().unwrap(), ps);
            Ok(())
        },
    )
}

pub fn longest_prefix_lookup(cases: u32) -> Result<(), String> {
    // Prefixes clustered in a small space so lookups actually hit.
    let base = 0x2001_0db8u128 << 96;
    let clustered = (any::<u16>(), 16u8..=48).prop_map(move |(bits, len)| {
        Prefix::truncating(&IpEndpoint::from_raw(base | (u128::from(bits) << 80)), len)
    });
    let prefixes = prop::collection::vec(prop_oneof![clustered, any_prefix()], 0..24);
    let probes = prop::collection::vec(
        prop_oneof![
            any::<u32>().prop_map(move |b| IpEndpoint::from_raw(base | (u128::from(b) << 64))),
            any_addr(),
        ],
        16,
    );
    check(cases, (prefixes, probes), |(prefixes, probes)| {
        let map: PrefixMap<usize> = prefixes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        // Later inserts of the same prefix overwrite earlier ones.
        let mut last: HashMap<Prefix, usize> = HashMap::new();
        for (i, p) in prefixes.iter().enumerate() {
            last.insert(*p, i);
        }
        for a in probes {
            let brute = last
                .iter()
                .filter(|(p, _)| p.contains(&a))
                .max_by_key(|(p, _)| p.len())
                .map(|(p, i)| (*p, *i));
            let got = map.longest_match(&a).map(|(p, i)| (p, *i));
            prop_assert_eq!(got, brute);
        }
        Ok(())
    })
}

// ------------------------------------------------------------------ sort

fn source_pool() -> Vec<IpEndpoint> {
    [
        "fd00::2",
        "fc00::2",
        "2001:db8:ffff::2",
        "10.0.0.2",
        "192.168.1.2",
        "198.51.100.2",
        "fe80::2",
        "::1",
        "127.0.0.1",
    ]
    .iter()
    .map(|s| parse_ip(s).unwrap())
    .collect()
}

fn dest_pool() -> Vec<IpEndpoint> {
    [
        "2001:db8::10",
        "2001:db8:ffff::10",
        "203.0.113.10",
        "10.0.0.9",
        "fd00::9",
        "fc00::9",
        "::1",
        "fe80::9",
        "2002::1",
        "64:ff9b::1",
    ]
    .iter()
    .map(|s| parse_ip(s).unwrap())
    .collect()
}

fn endpoints() -> impl Strategy<Value = (Vec<SourceCandidate>, Vec<IpEndpoint>)> {
    let srcs = prop::sample::subsequence(source_pool(), 1..=5).prop_shuffle();
    let dsts = prop::sample::subsequence(dest_pool(), 1..=6).prop_shuffle();
    (srcs, dsts).prop_map(|(s, d)| {
        let s = s
            .into_iter()
            .map(|a| SourceCandidate::new(a, "tun0").unwrap())
            .collect();
        (s, d)
    })
}

pub fn sort_determinism(cases: u32) -> Result<(), String> {
    check(
        cases,
        (endpoints(), any::<bool>()),
        |((srcs, dsts), tla)| {
            let table = if tla { tla_policy() } else { default_policy() };
            let a = sort_destinations(&dsts, &srcs, &table);
            let b = sort_destinations(&dsts, &srcs, &table);
            prop_assert_eq!(&a, &b);
            let got: BTreeSet<_> = a.iter().map(|p| p.dest).collect();
            prop_assert!(got.iter().all(|d| dsts.contains(d)));
            prop_assert_eq!(got.len(), a.len());
            // Unusable pairs never precede usable ones.
            let first_unusable = a.iter().position(|p| !p.usable).unwrap_or(a.len());
            prop_assert!(a[first_unusable..].iter().all(|p| !p.usable));
            Ok(())
        },
    )
}

pub fn tla_flip(cases: u32) -> Result<(), String> {
    let v4_src = prop_oneof![Just("10.0.0.2"), Just("172.16.5.5"), Just("192.168.9.9")];
    let v6_dst = (any::<u64>())
        .prop_map(|lo| IpEndpoint::from_raw((0x2001_0db8u128 << 96) | u128::from(lo)));
    let v4_dst = any::<u8>().prop_map(|h| parse_ip(&format!("203.0.113.{h}")).unwrap());
    let tla_src =
        any::<u64>().prop_map(|lo| IpEndpoint::from_raw((0xfc00u128 << 112) | u128::from(lo)));
    check(
        cases,
        (v4_src, tla_src, v6_dst, v4_dst, any::<bool>()),
        |(v4s, tla, v6d, v4d, v4_listed_first)| {
            let srcs = vec![
                SourceCandidate::new(tla, "tun0").unwrap(),
                SourceCandidate::new(parse_ip(v4s).unwrap(), "tun0").unwrap(),
            ];
            let dsts = if v4_listed_first {
                vec![v4d, v6d]
            } else {
                vec![v6d, v4d]
            };
            let with_tla = sort_destinations(&dsts, &srcs, &tla_policy());
            let without = sort_destinations(&dsts, &srcs, &default_policy());
            prop_assert_eq!(with_tla[0].family(), Family::V6);
            prop_assert_eq!(without[0].family(), Family::V4);
            Ok(())
        },
    )
}

// ------------------------------------------------------------------ race

fn latency() -> impl Strategy<Value = Latency> {
    prop_oneof![
        (0.0f64..500.0).prop_map(Latency::constant),
        (1.0f64..400.0).prop_map(Latency::exponential),
        (0.0f64..200.0, 0.0f64..200.0).prop_map(|(a, b)| Latency::Uniform {
            min_ms: a,
            max_ms: a + b
        }),
    ]
}

fn candidates(n: usize) -> Vec<dualstack_core::CandidatePair> {
    let table = default_policy();
    let v6 = SourceCandidate::new(parse_ip("2001:db8:ffff::2").unwrap(), "tun0").unwrap();
    let v4 = SourceCandidate::new(parse_ip("10.0.0.2").unwrap(), "tun0").unwrap();
    (0..n)
        .map(|i| {
            let (src, dst) = if i % 2 == 0 {
                (v6.clone(), format!("2001:db8::{:x}", i + 1))
            } else {
                (v4.clone(), format!("203.0.113.{}", i + 1))
            };
            dualstack_core::CandidatePair::build(src, parse_ip(&dst).unwrap(), &table)
        })
        .collect()
}

pub fn race_determinism(cases: u32) -> Result<(), String> {
    let links = prop::collection::vec((latency(), prop::bool::weighted(0.2)), 1..6);
    check(
        cases,
        (links, any::<u64>(), 10u32..400),
        |(links, seed, delay)| {
            let cands = candidates(links.len());
            let net = cands.iter().zip(&links).fold(
                NetworkModel::new().with_seed(seed),
                |n, (c, (lat, fails))| {
                    n.with(
                        c.dest,
                        LinkBehavior {
                            latency: *lat,
                            fails: *fails,
                        },
                    )
                },
            );
            let cfg = RaceConfig::with_delay_ms(f64::from(delay));
            prop_assert_eq!(
                run_race(&cands, &net, &cfg).unwrap(),
                run_race(&cands, &net, &cfg).unwrap()
            );
            let a = run_monte_carlo(&cands, &net, &cfg, 5, seed).unwrap();
            let b = run_monte_carlo(&cands, &net, &cfg, 5, seed).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((a.v4_wins + a.v6_wins + a.failures - 1.0).abs() < 1e-12);
            Ok(())
        },
    )
}

fn realized() -> impl Strategy<Value = Vec<Realized>> {
    prop::collection::vec(
        (
            // Whole milliseconds half the time, so completions often land
            // exactly on a scheduled attempt start.
            prop_oneof![0u64..1_000_000, (0u64..1_000).prop_map(|ms| ms * 1000)],
            prop::bool::weighted(0.25),
        )
            .prop_map(|(latency_us, fails)| Realized { latency_us, fails }),
        1..7,
    )
}

/// Attempt i starts at i * delay; the winner is the earliest non-failing
/// completion among started attempts, ties to the lower position.
fn oracle(real: &[Realized], delay_us: u64, limit: usize) -> Option<(usize, u64)> {
    real.iter()
        .enumerate()
        .take(limit)
        .filter(|(_, r)| !r.fails)
        .map(|(i, r)| (i, i as u64 * delay_us + r.latency_us))
        .min_by_key(|&(i, t)| (t, i))
}

pub fn race_winner_optimality(cases: u32) -> Result<(), String> {
    check(
        cases,
        (
            realized(),
            prop_oneof![1u64..500, 1u64..20],
            prop::option::of(1usize..6),
        ),
        |(real, delay_ms, max)| {
            let cands = candidates(real.len());
            let cfg = RaceConfig {
                max_attempts: max,
                ..RaceConfig::with_delay_ms(delay_ms as f64)
            };
            let out = race_realized(&cands, &real, &cfg).unwrap();
            let limit = max.unwrap_or(usize::MAX).min(real.len());
            let want = oracle(&real, delay_ms * 1000, limit);
            prop_assert_eq!(out.winner_index.zip(out.connected_at_us), want);
            // Exactly the attempts scheduled strictly before the connection start.
            let end = want.map_or(u64::MAX, |(_, t)| t);
            let expected_starts: Vec<u64> = (0..limit as u64)
                .map(|i| i * delay_ms * 1000)
                .filter(|&t| t < end)
                .collect();
            let starts: Vec<u64> = out
                .timeline
                .iter()
                .filter(|e| e.event == dualstack_core::race::EventKind::AttemptStarted)
                .map(|e| e.at_us)
                .collect();
            prop_assert_eq!(starts, expected_starts);
            Ok(())
        },
    )
}

pub fn race_monotonicity(cases: u32) -> Result<(), String> {
    check(
        cases,
        (
            realized(),
            1u64..500,
            any::<prop::sample::Index>(),
            1u64..500_000,
        ),
        |(real, delay_ms, pick, bump)| {
            let cands = candidates(real.len());
            let cfg = RaceConfig::with_delay_ms(delay_ms as f64);
            let before = race_realized(&cands, &real, &cfg).unwrap();
            let i = pick.index(real.len());
            let mut slower = real.clone();
            slower[i].latency_us += bump;
            let after = race_realized(&cands, &slower, &cfg).unwrap();
            match before.winner_index {
                // Slowing a loser cannot change the winner.
                Some(w) if w != i => prop_assert_eq!(after.winner_index, Some(w)),
                // Slowing the winner never makes the connection earlier.
                Some(_) => {
                    prop_assert!(after.connected_at_us.unwrap() >= before.connected_at_us.unwrap())
                }
                None => prop_assert_eq!(after.winner_index, None),
            }
            Ok(())
        },
    )
}

pub fn race_order_sensitivity(cases: u32) -> Result<(), String> {
    check(
        cases,
        (2usize..7, 1u64..500, 0u64..1000),
        |(n, delay_ms, frac)| {
            // Equal latencies shorter than the delay: the first listed wins.
            let lat = delay_ms * 1000 * frac / 1000;
            let real = vec![
                Realized {
                    latency_us: lat,
                    fails: false
                };
                n
            ];
            let cands = candidates(n);
            let cfg = RaceConfig::with_delay_ms(delay_ms as f64);
            let out = race_realized(&cands, &real, &cfg).unwrap();
            prop_assert_eq!(out.winner_index, Some(0));
            let mut rev = cands.clone();
            rev.reverse();
            let out = race_realized(&rev, &real, &cfg).unwrap();
            prop_assert_eq!(out.winner.unwrap().dest, cands[n - 1].dest);
            Ok(())
        },
    )
}

// ------------------------------------------------------------------ leak

fn sessions() -> impl Strategy<Value = Vec<Session>> {
    let v4 = prop::option::of((0u8..4).prop_map(|h| IpEndpoint::from_v4([198, 51, 100, h].into())));
    let v6 = prop::option::of(
        (0u16..4).prop_map(|h| IpEndpoint::from_raw((0x2001_0db8u128 << 96) | u128::from(h))),
    );
    let one = (0i64..4 * 3600, v4, v6, any::<bool>(), 0u32..1000).prop_filter_map(
        "at least one address",
        |(ts, v4, v6, pref6, id)| {
            let preferred = match (v4, v6) {
                (Some(_), Some(_)) if pref6 => Family::V6,
                (Some(_), _) => Family::V4,
                (None, Some(_)) => Family::V6,
                (None, None) => return None,
            };
            Session::new(ts, format!("s{id}"), v4, v6, preferred).ok()
        },
    );
    prop::collection::vec(one, 0..40)
}

pub fn dedupe_idempotence(cases: u32) -> Result<(), String> {
    check(cases, sessions(), |log| {
        let once = dedupe(&log);
        prop_assert_eq!(dedupe(&once), once.clone());
        let mut keys = HashSet::new();
        for s in &once {
            prop_assert!(keys.insert((s.v4, s.v6, s.timestamp.div_euclid(3600))));
            prop_assert!(log.contains(s));
        }
        // Every dropped row has a kept row with the same key that is no later.
        for s in &log {
            let key = (s.v4, s.v6, s.timestamp.div_euclid(3600));
            let kept = once
                .iter()
                .find(|k| (k.v4, k.v6, k.timestamp.div_euclid(3600)) == key);
            prop_assert!(kept.is_some_and(|k| k.timestamp <= s.timestamp));
        }
        Ok(())
    })
}

fn classified() -> impl Strategy<Value = ClassifiedSession> {
    let cat = prop::sample::select(vec![
        SessionCategory::NonVpn,
        SessionCategory::V4OnlyVpn,
        SessionCategory::DualSafe,
        SessionCategory::DualSafePrefetch,
        SessionCategory::DualSafePartialDeployment,
        SessionCategory::Leak,
    ]);
    (
        0i64..20 * 86_400,
        cat,
        0usize..4,
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(
            |(timestamp, category, p, v4, dual, unknown)| ClassifiedSession {
                timestamp,
                session_id: format!("c{timestamp}"),
                provider: category
                    .is_vpn()
                    .then(|| ["P", "Q", "R", "S"][p].to_string()),
                category,
                preferred: if v4 { Family::V4 } else { Family::V6 },
                dual_stack: dual || (category.is_vpn() && category != SessionCategory::V4OnlyVpn),
                unknown_as: unknown && category == SessionCategory::DualSafe,
            },
        )
}

pub fn partition_independent_aggregation(cases: u32) -> Result<(), String> {
    let input = (
        prop::collection::vec((classified(), 0usize..4), 0..60),
        0.0f64..200.0,
        0.0f64..40.0,
    );
    check(cases, input, |(rows, min_mean, min_dual)| {
        let all: Vec<ClassifiedSession> = rows.iter().map(|(c, _)| c.clone()).collect();
        let whole: Aggregator = all.iter().collect();
        let mut shards = vec![Aggregator::new(); 4];
        for (c, shard) in &rows {
            shards[*shard].add(c);
        }
        let [a, b, c, d]: [Aggregator; 4] = shards.try_into().unwrap();
        let left = a.clone().merge(b.clone()).merge(c.clone().merge(d.clone()));
        let right = d.merge(c).merge(b).merge(a);
        prop_assert_eq!(&left, &whole);
        prop_assert_eq!(&right, &whole);
        let opts = AggregateOptions {
            min_mean_sessions_per_day: min_mean,
            min_dual_safe_per_day: min_dual,
        };
        prop_assert_eq!(left.finish(&opts), whole.finish(&opts));
        Ok(())
    })
}

pub fn prefetch_precedence(cases: u32) -> Result<(), String> {
    // Provider exits in 198.51.100.0/24 (AS64500). The prefetch block sits in
    // an AS of its own organisation with a random category, optionally also
    // inside another provider's VPN space.
    let input = (
        any::<u8>(),
        any::<u64>(),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
    );
    check(cases, input, |(host, lo, isp, listed_as_vpn, in_as_map)| {
        let prefetch: Prefix = "2001:db8:f00::/48".parse().unwrap();
        let mut vpn = PrefixMap::new();
        vpn.insert("198.51.100.0/24".parse().unwrap(), "P".to_string());
        if listed_as_vpn {
            vpn.insert("2001:db8::/32".parse().unwrap(), "Q".to_string());
        }
        let mut as_of = PrefixMap::new();
        as_of.insert("198.51.100.0/24".parse().unwrap(), 64500u32);
        if in_as_map {
            as_of.insert(prefetch, 64530);
        }
        let orgs = HashMap::from([
            (64500, "org-p".to_string()),
            (64530, "org-proxy".to_string()),
        ]);
        let cat = if isp {
            AsCategory::Isp
        } else {
            AsCategory::Other("Content".into())
        };
        let cats = HashMap::from([(64530, cat)]);
        let dir = Directory::new(vpn, as_of, orgs, cats, PrefixMap::new());
        let v4 = IpEndpoint::from_v4([198, 51, 100, host].into());
        let v6 = IpEndpoint::from_raw(prefetch.base() | u128::from(lo));
        let s = Session::new(0, "s", Some(v4), Some(v6), Family::V6).unwrap();
        prop_assert_eq!(
            classify_session(&s, &dir.with_prefetch(prefetch)),
            SessionCategory::DualSafePrefetch
        );
        let without = classify_session(&s, &dir);
        prop_assert_ne!(without, SessionCategory::DualSafePrefetch);
        prop_assert_eq!(
            without == SessionCategory::Leak,
            isp && in_as_map && !listed_as_vpn
        );
        Ok(())
    })
}
