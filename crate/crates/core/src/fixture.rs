//! Deterministic synthetic session logs with planted ground truth.
//!
//! Every provider gets fixed per-day counts for each category, so the
//! expected totals follow from the plan alone. The manifest records those
//! totals together with the threshold outcomes they imply.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{Family, IpEndpoint};
use crate::leak::io::write_sessions;
use crate::leak::Session;

/// 2025-03-01T00:00:00Z.
pub const FIXTURE_EPOCH: i64 = 1_740_787_200;

/// Per-day session counts for one provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub v4_only: u64,
    pub dual_safe: u64,
    pub prefetch: u64,
    pub partial: u64,
    pub leak: u64,
    /// How many of the dual-stack safe sessions (safe, prefetch, partial)
    /// prefer IPv4.
    pub dual_safe_prefers_v4: u64,
    /// How many of the `dual_safe` sessions use an IPv6 address outside
    /// every AS prefix.
    pub unknown_as: u64,
}

impl DailyCounts {
    pub fn dual_safe_total(&self) -> u64 {
        self.dual_safe + self.prefetch + self.partial
    }

    pub fn total(&self) -> u64 {
        self.v4_only + self.dual_safe_total() + self.leak
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderPlan {
    pub name: String,
    pub per_day: DailyCounts,
    /// Exit space split over two ASes of different organisations.
    pub multi_org: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonVpnPlan {
    pub dual_stack: u64,
    pub dual_stack_prefers_v4: u64,
    pub v4_only: u64,
    pub v6_only: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePlan {
    pub seed: u64,
    pub days: u64,
    pub providers: Vec<ProviderPlan>,
    pub non_vpn_per_day: NonVpnPlan,
    /// Extra rows repeating an earlier session within the same hour.
    pub duplicates: u64,
    pub min_mean_sessions_per_day: f64,
    pub min_dual_safe_per_day: f64,
}

fn provider(name: &str, c: [u64; 7], multi_org: bool) -> ProviderPlan {
    ProviderPlan {
        name: name.to_string(),
        per_day: DailyCounts {
            v4_only: c[0],
            dual_safe: c[1],
            prefetch: c[2],
            partial: c[3],
            leak: c[4],
            dual_safe_prefers_v4: c[5],
            unknown_as: c[6],
        },
        multi_org,
    }
}

impl Default for FixturePlan {
    /// About 50k rows over ten days and eight providers: one leaks 6.5% of
    /// its sessions, one sits exactly on the sampling threshold, one just
    /// under it, and two fall short of the dual-safe threshold.
    fn default() -> Self {
        FixturePlan {
            seed: 20250301,
            days: 10,
            providers: vec![
                //                       v4   safe pf part leak pv4 unk
                provider("AlphaShield", [880, 35, 15, 5, 65, 30, 0], false),
                provider("BravoTunnel", [300, 450, 20, 10, 20, 260, 0], true),
                provider("CharlieVPN", [500, 100, 10, 40, 50, 81, 10], false),
                provider("DeltaNet", [550, 40, 5, 0, 5, 45, 0], false),
                provider("EchoGuard", [300, 120, 0, 0, 80, 30, 0], false),
                provider("FoxtrotVPN", [350, 10, 3, 2, 35, 9, 2], false),
                provider("GolfProxy", [90, 5, 0, 0, 5, 3, 0], false),
                provider("HotelHide", [80, 5, 0, 0, 10, 2, 0], false),
            ],
            non_vpn_per_day: NonVpnPlan {
                dual_stack: 400,
                dual_stack_prefers_v4: 52,
                v4_only: 150,
                v6_only: 50,
            },
            duplicates: 2_000,
            min_mean_sessions_per_day: 100.0,
            min_dual_safe_per_day: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedProvider {
    pub name: String,
    pub sessions: u64,
    pub v4_only: u64,
    pub dual_safe: u64,
    pub dual_safe_prefetch: u64,
    pub dual_safe_partial: u64,
    pub leak: u64,
    pub dual_safe_prefers_v4: u64,
    pub unknown_as: u64,
    pub mean_sessions_per_day: f64,
    pub leak_rate_all: f64,
    /// Meets the sampling threshold.
    pub reported: bool,
    /// Meets the dual-safe threshold.
    pub depref_reported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedNonVpn {
    pub sessions: u64,
    pub dual_stack: u64,
    pub prefers_v4: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub days: u64,
    pub rows: u64,
    pub duplicates: u64,
    pub unique_sessions: u64,
    pub providers: Vec<PlantedProvider>,
    pub non_vpn: PlantedNonVpn,
    pub unknown_as_sessions: u64,
    pub prefetch_prefixes: Vec<String>,
    /// Ids of the planted prefetch sessions, sorted.
    pub prefetch_session_ids: Vec<String>,
}

impl Manifest {
    pub fn provider(&self, name: &str) -> Option<&PlantedProvider> {
        self.providers.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub sessions: Vec<Session>,
    pub vpn_csv: String,
    pub as_prefixes_csv: String,
    pub as_orgs_csv: String,
    pub as_categories_csv: String,
    pub prefetch_txt: String,
    pub manifest: Manifest,
}

const ISP_ASES: [(u32, &str, [u8; 2], u16); 2] = [
    (65001, "org-resi-one", [81, 20], 0x1000),
    (65002, "org-resi-two", [82, 30], 0x2000),
];
const CLOUD_AS: (u32, &str, u16) = (65300, "org-cloudhost", 0x0300);
const PREFETCH_AS: (u32, &str, u16) = (65400, "org-prefetch-proxy", 0x4000);
const UNKNOWN_V6: u16 = 0x9000;

fn v6_block(hi: u16, sub: u16) -> u128 {
    (u128::from(hi) << 112) | (u128::from(sub) << 96)
}

fn v6_prefix_text(base: u128) -> String {
    format!("{}/32", Ipv6Addr::from(base))
}

struct Alloc {
    next_v4: Vec<u32>,
    next_v6: u64,
}

impl Alloc {
    fn v4(&mut self, slot: usize, base: [u8; 2]) -> IpEndpoint {
        let n = self.next_v4[slot];
        self.next_v4[slot] += 1;
        assert!(n < 65_534, "v4 pool {base:?} exhausted");
        let host = n + 1;
        IpEndpoint::from_v4(Ipv4Addr::new(
            base[0],
            base[1],
            (host >> 8) as u8,
            host as u8,
        ))
    }

    fn v6(&mut self, block: u128) -> IpEndpoint {
        self.next_v6 += 1;
        IpEndpoint::from_v6(Ipv6Addr::from(block | u128::from(self.next_v6)))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    V4Only,
    Safe,
    SafeUnknown,
    Prefetch,
    Partial,
    Leak,
}

fn exit_v4(i: usize) -> [u8; 2] {
    [45, 10 + i as u8]
}

fn second_exit_v4(i: usize) -> [u8; 2] {
    [45, 110 + i as u8]
}

fn provider_asn(i: usize) -> u32 {
    64600 + i as u32
}

fn second_asn(i: usize) -> u32 {
    64650 + i as u32
}

fn slug(name: &str) -> String {
    name.to_ascii_lowercase()
}

pub fn generate(plan: &FixturePlan) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let n_prov = plan.providers.len();
    // v4 pools: one per provider exit, then the two residential ISPs.
    let mut alloc = Alloc {
        next_v4: vec![0; n_prov + ISP_ASES.len()],
        next_v6: 0,
    };
    let mut sessions: Vec<Session> = Vec::new();
    let mut prefetch_ids = Vec::new();
    let mut seq = 0u64;
    let mut next_id = |prefix: &str| {
        seq += 1;
        format!("{prefix}{seq:06}")
    };

    for day in 0..plan.days as i64 {
        let day_start = FIXTURE_EPOCH + day * 86_400;
        let stamp = |rng: &mut ChaCha8Rng| {
            day_start + rng.random_range(0..24i64) * 3_600 + rng.random_range(0..1_800i64)
        };

        for (i, p) in plan.providers.iter().enumerate() {
            let c = p.per_day;
            let mut kinds = Vec::with_capacity(c.total() as usize);
            kinds.extend(std::iter::repeat_n(Kind::V4Only, c.v4_only as usize));
            kinds.extend(std::iter::repeat_n(
                Kind::SafeUnknown,
                c.unknown_as as usize,
            ));
            kinds.extend(std::iter::repeat_n(
                Kind::Safe,
                (c.dual_safe - c.unknown_as) as usize,
            ));
            kinds.extend(std::iter::repeat_n(Kind::Prefetch, c.prefetch as usize));
            kinds.extend(std::iter::repeat_n(Kind::Partial, c.partial as usize));
            kinds.extend(std::iter::repeat_n(Kind::Leak, c.leak as usize));

            // Which dual-safe sessions prefer IPv4.
            let mut prefers = vec![false; c.dual_safe_total() as usize];
            prefers[..c.dual_safe_prefers_v4 as usize].fill(true);
            prefers.shuffle(&mut rng);
            let mut prefers = prefers.into_iter();

            for kind in kinds {
                let v4 = alloc.v4(i, exit_v4(i));
                let v6 = match kind {
                    Kind::V4Only => None,
                    Kind::Safe => Some(alloc.v6(v6_block(0x2a05, CLOUD_AS.2))),
                    Kind::SafeUnknown => Some(alloc.v6(v6_block(0x2a10, UNKNOWN_V6))),
                    Kind::Prefetch => Some(alloc.v6(v6_block(0x2a0f, PREFETCH_AS.2))),
                    Kind::Partial => Some(alloc.v6(v6_block(0x2a0e, i as u16 + 1))),
                    Kind::Leak => {
                        let isp = ISP_ASES[rng.random_range(0..ISP_ASES.len())];
                        Some(alloc.v6(v6_block(0x2a00, isp.3)))
                    }
                };
                let preferred = match kind {
                    Kind::V4Only => Family::V4,
                    Kind::Leak => {
                        if rng.random_bool(0.5) {
                            Family::V4
                        } else {
                            Family::V6
                        }
                    }
                    _ => {
                        if prefers.next().expect("one flag per dual-safe session") {
                            Family::V4
                        } else {
                            Family::V6
                        }
                    }
                };
                let id = next_id("s");
                if kind == Kind::Prefetch {
                    prefetch_ids.push(id.clone());
                }
                sessions.push(
                    Session::new(stamp(&mut rng), id, Some(v4), v6, preferred)
                        .expect("planted sessions are well formed"),
                );
            }
        }

        let nv = plan.non_vpn_per_day;
        let mut prefers = vec![false; nv.dual_stack as usize];
        prefers[..nv.dual_stack_prefers_v4 as usize].fill(true);
        prefers.shuffle(&mut rng);
        let isp = |rng: &mut ChaCha8Rng| rng.random_range(0..ISP_ASES.len());
        for prefers_v4 in prefers {
            let k = isp(&mut rng);
            let v4 = alloc.v4(n_prov + k, ISP_ASES[k].2);
            let v6 = alloc.v6(v6_block(0x2a00, ISP_ASES[k].3));
            let preferred = if prefers_v4 { Family::V4 } else { Family::V6 };
            sessions.push(
                Session::new(stamp(&mut rng), next_id("s"), Some(v4), Some(v6), preferred).unwrap(),
            );
        }
        for _ in 0..nv.v4_only {
            let k = isp(&mut rng);
            let v4 = alloc.v4(n_prov + k, ISP_ASES[k].2);
            sessions.push(
                Session::new(stamp(&mut rng), next_id("s"), Some(v4), None, Family::V4).unwrap(),
            );
        }
        for _ in 0..nv.v6_only {
            let k = isp(&mut rng);
            let v6 = alloc.v6(v6_block(0x2a00, ISP_ASES[k].3));
            sessions.push(
                Session::new(stamp(&mut rng), next_id("s"), None, Some(v6), Family::V6).unwrap(),
            );
        }
    }

    let unique = sessions.len() as u64;
    for _ in 0..plan.duplicates {
        let original = &sessions[rng.random_range(0..unique as usize)];
        let offset = rng.random_range(1..1_500i64);
        let dup = Session::new(
            original.timestamp + offset,
            next_id("d"),
            original.v4,
            original.v6,
            original.preferred,
        )
        .unwrap();
        sessions.push(dup);
    }
    sessions.shuffle(&mut rng);
    prefetch_ids.sort();

    let manifest = manifest(plan, unique, prefetch_ids);
    Fixture {
        sessions,
        vpn_csv: vpn_csv(plan),
        as_prefixes_csv: as_prefixes_csv(plan),
        as_orgs_csv: as_orgs_csv(plan),
        as_categories_csv: as_categories_csv(plan),
        prefetch_txt: format!("# prefetch proxy egress\n{}\n", prefetch_prefix()),
        manifest,
    }
}

fn prefetch_prefix() -> String {
    v6_prefix_text(v6_block(0x2a0f, PREFETCH_AS.2))
}

fn vpn_csv(plan: &FixturePlan) -> String {
    let mut out = String::from("prefix,provider\n");
    for (i, p) in plan.providers.iter().enumerate() {
        let [a, b] = exit_v4(i);
        let _ = writeln!(out, "{a}.{b}.0.0/16,{}", p.name);
        if p.multi_org {
            let [a, b] = second_exit_v4(i);
            let _ = writeln!(out, "{a}.{b}.0.0/16,{}", p.name);
        }
    }
    out
}

fn as_prefixes_csv(plan: &FixturePlan) -> String {
    let mut out = String::from("prefix,asn\n");
    for (i, p) in plan.providers.iter().enumerate() {
        let [a, b] = exit_v4(i);
        let _ = writeln!(out, "{a}.{b}.0.0/16,{}", provider_asn(i));
        let v6_owner = if p.multi_org {
            let [a, b] = second_exit_v4(i);
            let _ = writeln!(out, "{a}.{b}.0.0/16,{}", second_asn(i));
            second_asn(i)
        } else {
            provider_asn(i)
        };
        let _ = writeln!(
            out,
            "{},{v6_owner}",
            v6_prefix_text(v6_block(0x2a0e, i as u16 + 1))
        );
    }
    for (asn, _, [a, b], v6) in ISP_ASES {
        let _ = writeln!(out, "{a}.{b}.0.0/16,{asn}");
        let _ = writeln!(out, "{},{asn}", v6_prefix_text(v6_block(0x2a00, v6)));
    }
    let _ = writeln!(
        out,
        "{},{}",
        v6_prefix_text(v6_block(0x2a05, CLOUD_AS.2)),
        CLOUD_AS.0
    );
    let _ = writeln!(out, "{},{}", prefetch_prefix(), PREFETCH_AS.0);
    out
}

fn as_orgs_csv(plan: &FixturePlan) -> String {
    let mut out = String::from("asn,org_id\n");
    for (i, p) in plan.providers.iter().enumerate() {
        let _ = writeln!(out, "{},org-{}", provider_asn(i), slug(&p.name));
        if p.multi_org {
            let _ = writeln!(out, "{},org-{}-eu", second_asn(i), slug(&p.name));
        }
    }
    for (asn, org, _, _) in ISP_ASES {
        let _ = writeln!(out, "{asn},{org}");
    }
    let _ = writeln!(out, "{},{}", CLOUD_AS.0, CLOUD_AS.1);
    let _ = writeln!(out, "{},{}", PREFETCH_AS.0, PREFETCH_AS.1);
    out
}

fn as_categories_csv(plan: &FixturePlan) -> String {
    let mut out = String::from("asn,category\n");
    for (i, p) in plan.providers.iter().enumerate() {
        let _ = writeln!(out, "{},Hosting", provider_asn(i));
        if p.multi_org {
            let _ = writeln!(out, "{},Hosting", second_asn(i));
        }
    }
    for (asn, _, _, _) in ISP_ASES {
        let _ = writeln!(out, "{asn},ISP");
    }
    let _ = writeln!(out, "{},Hosting", CLOUD_AS.0);
    // Categorised as an ISP, so without the prefetch list these sessions
    // would be counted as leaks.
    let _ = writeln!(out, "{},ISP", PREFETCH_AS.0);
    out
}

fn manifest(plan: &FixturePlan, unique: u64, prefetch_session_ids: Vec<String>) -> Manifest {
    let days = plan.days;
    let providers = plan
        .providers
        .iter()
        .map(|p| {
            let c = p.per_day;
            let sessions = c.total() * days;
            let mean = c.total() as f64;
            PlantedProvider {
                name: p.name.clone(),
                sessions,
                v4_only: c.v4_only * days,
                dual_safe: c.dual_safe * days,
                dual_safe_prefetch: c.prefetch * days,
                dual_safe_partial: c.partial * days,
                leak: c.leak * days,
                dual_safe_prefers_v4: c.dual_safe_prefers_v4 * days,
                unknown_as: c.unknown_as * days,
                mean_sessions_per_day: mean,
                leak_rate_all: c.leak as f64 / c.total() as f64,
                reported: mean >= plan.min_mean_sessions_per_day,
                depref_reported: c.dual_safe_total() as f64 >= plan.min_dual_safe_per_day,
            }
        })
        .collect::<Vec<_>>();
    let nv = plan.non_vpn_per_day;
    Manifest {
        seed: plan.seed,
        days,
        rows: unique + plan.duplicates,
        duplicates: plan.duplicates,
        unique_sessions: unique,
        unknown_as_sessions: providers.iter().map(|p| p.unknown_as).sum(),
        providers,
        non_vpn: PlantedNonVpn {
            sessions: (nv.dual_stack + nv.v4_only + nv.v6_only) * days,
            dual_stack: nv.dual_stack * days,
            prefers_v4: nv.dual_stack_prefers_v4 * days,
        },
        prefetch_prefixes: vec![prefetch_prefix()],
        prefetch_session_ids,
    }
}

impl Fixture {
    /// Writes `sessions.csv`, the directory files and `manifest.json`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sessions.csv"), write_sessions(&self.sessions))?;
        fs::write(dir.join("vpn.csv"), &self.vpn_csv)?;
        fs::write(dir.join("as_prefixes.csv"), &self.as_prefixes_csv)?;
        fs::write(dir.join("as_orgs.csv"), &self.as_orgs_csv)?;
        fs::write(dir.join("as_categories.csv"), &self.as_categories_csv)?;
        fs::write(dir.join("prefetch.txt"), &self.prefetch_txt)?;
        let manifest = serde_json::to_string_pretty(&self.manifest).map_err(io::Error::other)?;
        fs::write(dir.join("manifest.json"), manifest + "\n")
    }
}
