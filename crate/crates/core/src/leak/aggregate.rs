use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::classify::{ClassifiedSession, SessionCategory};
use crate::addr::Family;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    /// Providers below this mean are reported as undersampled.
    pub min_mean_sessions_per_day: f64,
    /// Providers below this many dual-stack safe sessions per day get no
    /// de-preference rate.
    pub min_dual_safe_per_day: f64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            min_mean_sessions_per_day: 100.0,
            min_dual_safe_per_day: 20.0,
        }
    }
}

/// Per-provider session counts and rates. Field order is the CSV column
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReport {
    pub provider: String,
    pub days: u64,
    pub mean_sessions_per_day: f64,
    pub v4_only: u64,
    pub dual_safe: u64,
    pub dual_safe_prefetch: u64,
    pub dual_safe_partial: u64,
    pub leak: u64,
    pub total_vpn: u64,
    /// Leaks over all VPN sessions of the provider.
    pub leak_rate_all: f64,
    /// Leaks over dual-stack VPN sessions; 0 when there are none.
    pub leak_rate_dual: f64,
    /// Share of dual-stack safe sessions preferring IPv4, when the provider
    /// meets the dual-safe threshold.
    pub depref_rate: Option<f64>,
}

impl ProviderReport {
    pub fn count(&self, category: SessionCategory) -> u64 {
        match category {
            SessionCategory::NonVpn => 0,
            SessionCategory::V4OnlyVpn => self.v4_only,
            SessionCategory::DualSafe => self.dual_safe,
            SessionCategory::DualSafePrefetch => self.dual_safe_prefetch,
            SessionCategory::DualSafePartialDeployment => self.dual_safe_partial,
            SessionCategory::Leak => self.leak,
        }
    }

    pub fn dual_stack(&self) -> u64 {
        self.dual_safe + self.dual_safe_prefetch + self.dual_safe_partial + self.leak
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeprefEntry {
    pub provider: String,
    pub dual_safe_sessions: u64,
    pub dual_safe_per_day: f64,
    pub prefers_v4: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeprefSummary {
    pub qualifying: Vec<DeprefEntry>,
    /// Providers under the dual-safe threshold.
    pub omitted: Vec<DeprefEntry>,
    /// Session-weighted mean over qualifying providers.
    pub weighted_mean: Option<f64>,
}

/// Dual-stack sessions outside any VPN, the baseline for de-preference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonVpnSummary {
    pub sessions: u64,
    pub dual_stack: u64,
    pub prefers_v4: u64,
    pub depref_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub days: u64,
    pub reports: Vec<ProviderReport>,
    pub undersampled: Vec<ProviderReport>,
    pub depreference: DeprefSummary,
    pub non_vpn: NonVpnSummary,
    pub unknown_as_sessions: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    v4_only: u64,
    dual_safe: u64,
    prefetch: u64,
    partial: u64,
    leak: u64,
    dual_safe_prefers_v4: u64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.v4_only += other.v4_only;
        self.dual_safe += other.dual_safe;
        self.prefetch += other.prefetch;
        self.partial += other.partial;
        self.leak += other.leak;
        self.dual_safe_prefers_v4 += other.dual_safe_prefers_v4;
    }

    fn dual_safe_total(&self) -> u64 {
        self.dual_safe + self.prefetch + self.partial
    }

    fn total(&self) -> u64 {
        self.v4_only + self.dual_safe_total() + self.leak
    }
}

/// Integer accumulator behind the reports. `merge` is associative and
/// commutative, so shards can be folded in any grouping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Aggregator {
    providers: BTreeMap<String, Counts>,
    days: Option<(i64, i64)>,
    non_vpn_sessions: u64,
    non_vpn_dual: u64,
    non_vpn_dual_v4: u64,
    unknown_as: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn by_rate_then_name(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, s: &ClassifiedSession) {
        let day = s.day();
        self.days = Some(match self.days {
            None => (day, day),
            Some((lo, hi)) => (lo.min(day), hi.max(day)),
        });
        if s.unknown_as {
            self.unknown_as += 1;
        }
        let provider = match (&s.provider, s.category) {
            (Some(p), c) if c.is_vpn() => p,
            _ => {
                self.non_vpn_sessions += 1;
                if s.dual_stack {
                    self.non_vpn_dual += 1;
                    if s.preferred == Family::V4 {
                        self.non_vpn_dual_v4 += 1;
                    }
                }
                return;
            }
        };
        let c = self.providers.entry(provider.clone()).or_default();
        match s.category {
            SessionCategory::NonVpn => unreachable!("handled above"),
            SessionCategory::V4OnlyVpn => c.v4_only += 1,
            SessionCategory::DualSafe => c.dual_safe += 1,
            SessionCategory::DualSafePrefetch => c.prefetch += 1,
            SessionCategory::DualSafePartialDeployment => c.partial += 1,
            SessionCategory::Leak => c.leak += 1,
        }
        if s.category.is_dual_safe() && s.preferred == Family::V4 {
            c.dual_safe_prefers_v4 += 1;
        }
    }

    pub fn merge(mut self, other: Aggregator) -> Aggregator {
        for (p, c) in other.providers {
            self.providers.entry(p).or_default().add(&c);
        }
        self.days = match (self.days, other.days) {
            (None, d) | (d, None) => d,
            (Some((a, b)), Some((c, d))) => Some((a.min(c), b.max(d))),
        };
        self.non_vpn_sessions += other.non_vpn_sessions;
        self.non_vpn_dual += other.non_vpn_dual;
        self.non_vpn_dual_v4 += other.non_vpn_dual_v4;
        self.unknown_as += other.unknown_as;
        self
    }

    /// UTC days spanned by the data, first to last inclusive.
    pub fn days(&self) -> u64 {
        self.days.map_or(0, |(lo, hi)| (hi - lo + 1) as u64)
    }

    fn depref_entry(&self, provider: &str, c: &Counts) -> DeprefEntry {
        let days = self.days().max(1) as f64;
        DeprefEntry {
            provider: provider.to_string(),
            dual_safe_sessions: c.dual_safe_total(),
            dual_safe_per_day: c.dual_safe_total() as f64 / days,
            prefers_v4: c.dual_safe_prefers_v4,
            fraction: ratio(c.dual_safe_prefers_v4, c.dual_safe_total()),
        }
    }

    pub fn depreference(&self, min_dual_safe_per_day: f64) -> DeprefSummary {
        let (mut qualifying, mut omitted): (Vec<_>, Vec<_>) = self
            .providers
            .iter()
            .map(|(p, c)| self.depref_entry(p, c))
            .filter(|e| e.dual_safe_sessions > 0)
            .partition(|e| e.dual_safe_per_day >= min_dual_safe_per_day);
        let sort = |v: &mut Vec<DeprefEntry>| {
            v.sort_by(|a, b| {
                by_rate_then_name((a.fraction, &a.provider), (b.fraction, &b.provider))
            })
        };
        sort(&mut qualifying);
        sort(&mut omitted);
        let total: u64 = qualifying.iter().map(|e| e.dual_safe_sessions).sum();
        let v4: u64 = qualifying.iter().map(|e| e.prefers_v4).sum();
        DeprefSummary {
            weighted_mean: (total > 0).then(|| v4 as f64 / total as f64),
            qualifying,
            omitted,
        }
    }

    pub fn finish(&self, opts: &AggregateOptions) -> ReportSet {
        let days = self.days();
        let depreference = self.depreference(opts.min_dual_safe_per_day);
        let mut reports = Vec::new();
        let mut undersampled = Vec::new();
        for (provider, c) in &self.providers {
            let total = c.total();
            let dual = c.dual_safe_total() + c.leak;
            let mean = total as f64 / days.max(1) as f64;
            let depref_rate = depreference
                .qualifying
                .iter()
                .find(|e| &e.provider == provider)
                .map(|e| e.fraction);
            let report = ProviderReport {
                provider: provider.clone(),
                days,
                mean_sessions_per_day: mean,
                v4_only: c.v4_only,
                dual_safe: c.dual_safe,
                dual_safe_prefetch: c.prefetch,
                dual_safe_partial: c.partial,
                leak: c.leak,
                total_vpn: total,
                leak_rate_all: ratio(c.leak, total),
                leak_rate_dual: ratio(c.leak, dual),
                depref_rate,
            };
            if mean >= opts.min_mean_sessions_per_day {
                reports.push(report);
            } else {
                undersampled.push(report);
            }
        }
        let sort = |v: &mut Vec<ProviderReport>| {
            v.sort_by(|a, b| {
                by_rate_then_name(
                    (a.leak_rate_all, &a.provider),
                    (b.leak_rate_all, &b.provider),
                )
            })
        };
        sort(&mut reports);
        sort(&mut undersampled);
        ReportSet {
            days,
            reports,
            undersampled,
            depreference,
            non_vpn: NonVpnSummary {
                sessions: self.non_vpn_sessions,
                dual_stack: self.non_vpn_dual,
                prefers_v4: self.non_vpn_dual_v4,
                depref_rate: (self.non_vpn_dual > 0)
                    .then(|| ratio(self.non_vpn_dual_v4, self.non_vpn_dual)),
            },
            unknown_as_sessions: self.unknown_as,
        }
    }
}

impl<'a> Extend<&'a ClassifiedSession> for Aggregator {
    fn extend<I: IntoIterator<Item = &'a ClassifiedSession>>(&mut self, iter: I) {
        for s in iter {
            self.add(s);
        }
    }
}

impl<'a> FromIterator<&'a ClassifiedSession> for Aggregator {
    fn from_iter<I: IntoIterator<Item = &'a ClassifiedSession>>(iter: I) -> Self {
        let mut agg = Aggregator::new();
        agg.extend(iter);
        agg
    }
}

/// Reports for every provider whose mean daily VPN sessions reach
/// `min_mean_sessions_per_day`, highest leak rate first.
pub fn aggregate(
    sessions: &[ClassifiedSession],
    min_mean_sessions_per_day: f64,
) -> Vec<ProviderReport> {
    let opts = AggregateOptions {
        min_mean_sessions_per_day,
        ..AggregateOptions::default()
    };
    sessions
        .iter()
        .collect::<Aggregator>()
        .finish(&opts)
        .reports
}

/// Per-provider share of dual-stack safe sessions that preferred IPv4.
pub fn depreference_rates(
    sessions: &[ClassifiedSession],
    min_dual_safe_per_day: f64,
) -> DeprefSummary {
    sessions
        .iter()
        .collect::<Aggregator>()
        .depreference(min_dual_safe_per_day)
}
