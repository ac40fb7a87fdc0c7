use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::{IpEndpoint, Prefix};
use crate::prefix_map::PrefixMap;

pub type Asn = u32;

/// AS business category. Only `Isp` matters for leak detection; the other
/// names are carried through verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AsCategory {
    Isp,
    Other(String),
}

impl FromStr for AsCategory {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Ok(if t.eq_ignore_ascii_case("isp") {
            AsCategory::Isp
        } else {
            AsCategory::Other(t.to_string())
        })
    }
}

impl fmt::Display for AsCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsCategory::Isp => f.write_str("ISP"),
            AsCategory::Other(name) => f.write_str(name),
        }
    }
}

/// The IP-intelligence datasets the classifier consults.
#[derive(Debug, Clone, Default)]
pub struct Directory {
    vpn: PrefixMap<String>,
    as_of_prefix: PrefixMap<Asn>,
    org_of_asn: HashMap<Asn, String>,
    category_of_asn: HashMap<Asn, AsCategory>,
    prefetch: PrefixMap<()>,
    // Organisations of every AS announcing one of a provider's VPN prefixes.
    provider_orgs: HashMap<String, BTreeSet<String>>,
}

impl Directory {
    pub fn new(
        vpn: PrefixMap<String>,
        as_of_prefix: PrefixMap<Asn>,
        org_of_asn: HashMap<Asn, String>,
        category_of_asn: HashMap<Asn, AsCategory>,
        prefetch: PrefixMap<()>,
    ) -> Self {
        let mut dir = Directory {
            vpn,
            as_of_prefix,
            org_of_asn,
            category_of_asn,
            prefetch,
            provider_orgs: HashMap::new(),
        };
        dir.index_provider_orgs();
        dir
    }

    fn index_provider_orgs(&mut self) {
        let mut orgs: HashMap<String, BTreeSet<String>> = HashMap::new();
        for (prefix, provider) in self.vpn.iter() {
            let probe = IpEndpoint::from_raw(prefix.base());
            let entry = orgs.entry(provider.clone()).or_default();
            if let Some(org) = self.org_of_addr(&probe) {
                entry.insert(org);
            }
        }
        self.provider_orgs = orgs;
    }

    pub fn vpn_provider(&self, addr: &IpEndpoint) -> Option<&str> {
        self.vpn.get(addr).map(String::as_str)
    }

    pub fn is_vpn(&self, addr: &IpEndpoint) -> bool {
        self.vpn.contains(addr)
    }

    pub fn asn_of(&self, addr: &IpEndpoint) -> Option<Asn> {
        self.as_of_prefix.get(addr).copied()
    }

    /// AS2Org organisation id, falling back to `AS<n>` for ASes the org map
    /// does not list.
    pub fn org_of_asn(&self, asn: Asn) -> String {
        self.org_of_asn
            .get(&asn)
            .cloned()
            .unwrap_or_else(|| format!("AS{asn}"))
    }

    pub fn org_of_addr(&self, addr: &IpEndpoint) -> Option<String> {
        self.asn_of(addr).map(|asn| self.org_of_asn(asn))
    }

    pub fn category_of(&self, asn: Asn) -> Option<&AsCategory> {
        self.category_of_asn.get(&asn)
    }

    pub fn is_prefetch(&self, addr: &IpEndpoint) -> bool {
        self.prefetch.contains(addr)
    }

    pub fn provider_orgs(&self, provider: &str) -> Option<&BTreeSet<String>> {
        self.provider_orgs.get(provider)
    }

    pub fn prefetch_prefixes(&self) -> Vec<Prefix> {
        self.prefetch.iter().map(|(p, _)| p).collect()
    }

    pub fn vpn_prefix_count(&self) -> usize {
        self.vpn.len()
    }

    /// Copy with an extra prefetch prefix.
    pub fn with_prefetch(&self, prefix: Prefix) -> Directory {
        let mut dir = self.clone();
        dir.prefetch.insert(prefix, ());
        dir
    }

    /// Copy with an empty prefetch list.
    pub fn without_prefetch(&self) -> Directory {
        let mut dir = self.clone();
        dir.prefetch = PrefixMap::new();
        dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::parse_ip;

    #[test]
    fn provider_orgs_cover_every_hosting_as() {
        let vpn: PrefixMap<String> = [
            ("198.51.100.0/24".parse().unwrap(), "P".to_string()),
            ("192.0.2.0/24".parse().unwrap(), "P".to_string()),
        ]
        .into_iter()
        .collect();
        let as_of: PrefixMap<Asn> = [
            ("198.51.100.0/24".parse().unwrap(), 64500),
            ("192.0.2.0/24".parse().unwrap(), 64501),
        ]
        .into_iter()
        .collect();
        let orgs = HashMap::from([(64500, "org-a".to_string())]);
        let dir = Directory::new(vpn, as_of, orgs, HashMap::new(), PrefixMap::new());
        let got: Vec<_> = dir.provider_orgs("P").unwrap().iter().cloned().collect();
        assert_eq!(got, ["AS64501", "org-a"]);
        assert_eq!(dir.vpn_provider(&parse_ip("192.0.2.9").unwrap()), Some("P"));
    }

    #[test]
    fn category_parsing() {
        assert_eq!("ISP".parse::<AsCategory>().unwrap(), AsCategory::Isp);
        assert_eq!("isp".parse::<AsCategory>().unwrap(), AsCategory::Isp);
        assert_eq!(
            "Hosting".parse::<AsCategory>().unwrap(),
            AsCategory::Other("Hosting".into())
        );
    }
}
