use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::directory::{AsCategory, Directory};
use super::session::Session;
use crate::addr::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionCategory {
    NonVpn,
    V4OnlyVpn,
    DualSafe,
    DualSafePrefetch,
    DualSafePartialDeployment,
    Leak,
}

impl SessionCategory {
    /// The categories a VPN session can land in.
    pub const VPN: [SessionCategory; 5] = [
        SessionCategory::V4OnlyVpn,
        SessionCategory::DualSafe,
        SessionCategory::DualSafePrefetch,
        SessionCategory::DualSafePartialDeployment,
        SessionCategory::Leak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SessionCategory::NonVpn => "non_vpn",
            SessionCategory::V4OnlyVpn => "v4_only_vpn",
            SessionCategory::DualSafe => "dual_safe",
            SessionCategory::DualSafePrefetch => "dual_safe_prefetch",
            SessionCategory::DualSafePartialDeployment => "dual_safe_partial_deployment",
            SessionCategory::Leak => "leak",
        }
    }

    pub fn is_dual_safe(self) -> bool {
        matches!(
            self,
            SessionCategory::DualSafe
                | SessionCategory::DualSafePrefetch
                | SessionCategory::DualSafePartialDeployment
        )
    }

    pub fn is_vpn(self) -> bool {
        self != SessionCategory::NonVpn
    }
}

impl fmt::Display for SessionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SessionCategory::NonVpn]
            .into_iter()
            .chain(SessionCategory::VPN)
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown session category `{s}`"))
    }
}

/// A session reduced to what aggregation needs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassifiedSession {
    pub timestamp: i64,
    pub session_id: String,
    pub provider: Option<String>,
    pub category: SessionCategory,
    pub preferred: Family,
    /// Both an IPv4 and an IPv6 address were observed.
    pub dual_stack: bool,
    /// The IPv6 address matched no AS prefix, so the leak criteria could
    /// not be affirmed.
    pub unknown_as: bool,
}

impl ClassifiedSession {
    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(86_400)
    }
}

pub fn classify_session(s: &Session, d: &Directory) -> SessionCategory {
    classify_session_detailed(s, d).category
}

/// Decision order: not a VPN session, v4-only, prefetch, same organisation
/// as the VPN (partial IPv6 deployment), the three leak criteria, and
/// finally safe.
pub fn classify_session_detailed(s: &Session, d: &Directory) -> ClassifiedSession {
    let mut out = ClassifiedSession {
        timestamp: s.timestamp,
        session_id: s.session_id.clone(),
        provider: None,
        category: SessionCategory::NonVpn,
        preferred: s.preferred,
        dual_stack: s.is_dual_stack(),
        unknown_as: false,
    };
    let Some(v4) = s.v4 else {
        return out;
    };
    let Some(provider) = d.vpn_provider(&v4) else {
        return out;
    };
    out.provider = Some(provider.to_string());
    let Some(v6) = s.v6 else {
        out.category = SessionCategory::V4OnlyVpn;
        return out;
    };
    if d.is_prefetch(&v6) {
        out.category = SessionCategory::DualSafePrefetch;
        return out;
    }
    let Some(v6_asn) = d.asn_of(&v6) else {
        out.unknown_as = true;
        out.category = SessionCategory::DualSafe;
        return out;
    };

    let v6_org = d.org_of_asn(v6_asn);
    let same_org = d.org_of_addr(&v4).as_ref() == Some(&v6_org)
        || d.provider_orgs(provider)
            .is_some_and(|orgs| orgs.contains(&v6_org));
    if same_org {
        out.category = SessionCategory::DualSafePartialDeployment;
        return out;
    }

    let not_vpn = !d.is_vpn(&v6);
    let isp = d.category_of(v6_asn) == Some(&AsCategory::Isp);
    out.category = if not_vpn && isp {
        SessionCategory::Leak
    } else {
        SessionCategory::DualSafe
    };
    out
}

pub fn classify_all(sessions: &[Session], d: &Directory) -> Vec<ClassifiedSession> {
    sessions
        .iter()
        .map(|s| classify_session_detailed(s, d))
        .collect()
}
