//! Address model: parsing, canonical text form, classification and prefix
//! arithmetic.
//!
//! Every address is held as a 128-bit value. IPv4 addresses live in the
//! IPv4-mapped block `::ffff:0:0/96`, so a single policy-table lookup path
//! serves both families while [`IpEndpoint::family`] still reports `V4`.

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// `::ffff:0:0`, the base of the IPv4-mapped block.
pub const V4_MAPPED_BASE: u128 = 0xffff_0000_0000;
/// Length of the IPv4-mapped block.
pub const V4_MAPPED_LEN: u8 = 96;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("invalid IP address literal `{0}`")]
    InvalidAddress(String),
    #[error("invalid prefix `{text}`: {reason}")]
    InvalidPrefix { text: String, reason: &'static str },
    #[error("address family mismatch: {0} vs {1}")]
    FamilyMismatch(IpEndpoint, IpEndpoint),
    #[error("unknown address class `{0}`")]
    UnknownClass(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    V4,
    V6,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::V4 => "v4",
            Family::V6 => "v6",
        })
    }
}

impl FromStr for Family {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v4" | "ipv4" | "4" => Ok(Family::V4),
            "v6" | "ipv6" | "6" => Ok(Family::V6),
            _ => Err(AddrError::InvalidAddress(s.to_string())),
        }
    }
}

/// Address scope, ordered from narrowest to widest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Loopback,
    LinkLocal,
    SiteLocal,
    Global,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Loopback => "loopback",
            Scope::LinkLocal => "link-local",
            Scope::SiteLocal => "site-local",
            Scope::Global => "global",
        })
    }
}

/// The address classes the selection and leak analyses care about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AddressClass {
    Loopback,
    LinkLocalV6,
    LinkLocalV4,
    /// RFC 1918 space.
    PrivateV4,
    PublicV4,
    /// Global unicast, 2000::/3 minus the transition blocks.
    Gua,
    /// Unique local, fd00::/8.
    Ula,
    /// Tunnel local, fc00::/8.
    Tla,
    #[serde(rename = "site-local")]
    SiteLocalDeprecated,
    /// 6to4, Teredo, 6bone, multicast, special-use IPv4 and anything else.
    Other,
}

impl AddressClass {
    pub const ALL: [AddressClass; 10] = [
        AddressClass::Loopback,
        AddressClass::LinkLocalV6,
        AddressClass::LinkLocalV4,
        AddressClass::PrivateV4,
        AddressClass::PublicV4,
        AddressClass::Gua,
        AddressClass::Ula,
        AddressClass::Tla,
        AddressClass::SiteLocalDeprecated,
        AddressClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AddressClass::Loopback => "loopback",
            AddressClass::LinkLocalV6 => "link-local-v6",
            AddressClass::LinkLocalV4 => "link-local-v4",
            AddressClass::PrivateV4 => "private-v4",
            AddressClass::PublicV4 => "public-v4",
            AddressClass::Gua => "gua",
            AddressClass::Ula => "ula",
            AddressClass::Tla => "tla",
            AddressClass::SiteLocalDeprecated => "site-local",
            AddressClass::Other => "other",
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            AddressClass::Loopback => Scope::Loopback,
            AddressClass::LinkLocalV6 | AddressClass::LinkLocalV4 => Scope::LinkLocal,
            AddressClass::SiteLocalDeprecated => Scope::SiteLocal,
            // ULA and TLA are global scope under RFC 6724, only their
            // policy rows set them apart.
            _ => Scope::Global,
        }
    }

    /// Whether the class is reachable across the public Internet without
    /// translation.
    pub fn is_globally_routable(self) -> bool {
        matches!(self, AddressClass::PublicV4 | AddressClass::Gua)
    }
}

impl fmt::Display for AddressClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AddressClass {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        AddressClass::ALL
            .into_iter()
            .find(|c| c.as_str() == wanted)
            .ok_or_else(|| AddrError::UnknownClass(s.to_string()))
    }
}

/// A parsed IPv4 or IPv6 address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpEndpoint {
    raw: u128,
}

impl IpEndpoint {
    pub fn from_raw(raw: u128) -> Self {
        IpEndpoint { raw }
    }

    pub fn from_v4(addr: Ipv4Addr) -> Self {
        IpEndpoint {
            raw: V4_MAPPED_BASE | u128::from(u32::from(addr)),
        }
    }

    pub fn from_v6(addr: Ipv6Addr) -> Self {
        IpEndpoint {
            raw: u128::from(addr),
        }
    }

    pub fn raw(&self) -> u128 {
        self.raw
    }

    pub fn family(&self) -> Family {
        if self.raw & mask(V4_MAPPED_LEN) == V4_MAPPED_BASE {
            Family::V4
        } else {
            Family::V6
        }
    }

    pub fn is_v4(&self) -> bool {
        self.family() == Family::V4
    }

    pub fn to_v4(&self) -> Option<Ipv4Addr> {
        self.is_v4().then(|| Ipv4Addr::from(self.raw as u32))
    }

    pub fn to_v6(&self) -> Ipv6Addr {
        Ipv6Addr::from(self.raw)
    }

    /// Canonical text: dotted quad for IPv4, RFC 5952 for IPv6.
    pub fn text(&self) -> String {
        self.to_string()
    }

    pub fn class(&self) -> AddressClass {
        classify(self)
    }

    pub fn scope(&self) -> Scope {
        classify(self).scope()
    }
}

impl fmt::Display for IpEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_v4() {
            Some(v4) => write!(f, "{v4}"),
            None => write!(f, "{}", self.to_v6()),
        }
    }
}

impl fmt::Debug for IpEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IpEndpoint({self})")
    }
}

impl FromStr for IpEndpoint {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ip(s)
    }
}

impl Serialize for IpEndpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IpEndpoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_ip(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses a dotted-quad or RFC 4291 IPv6 literal.
///
/// IPv6 literals inside `::ffff:0:0/96` come back with family `V4`.
pub fn parse_ip(text: &str) -> Result<IpEndpoint, AddrError> {
    let trimmed = text.trim();
    if let Ok(v4) = Ipv4Addr::from_str(trimmed) {
        return Ok(IpEndpoint::from_v4(v4));
    }
    Ipv6Addr::from_str(trimmed)
        .map(IpEndpoint::from_v6)
        .map_err(|_| AddrError::InvalidAddress(text.to_string()))
}

fn in_v4(v4: u32, base: [u8; 4], len: u32) -> bool {
    let base = u32::from_be_bytes(base);
    let m = if len == 0 { 0 } else { u32::MAX << (32 - len) };
    v4 & m == base
}

fn in_v6(raw: u128, base: u128, len: u8) -> bool {
    raw & mask(len) == base
}

/// Total classification of an address.
pub fn classify(addr: &IpEndpoint) -> AddressClass {
    if let Some(v4) = addr.to_v4() {
        let v = u32::from(v4);
        return if in_v4(v, [127, 0, 0, 0], 8) {
            AddressClass::Loopback
        } else if in_v4(v, [169, 254, 0, 0], 16) {
            AddressClass::LinkLocalV4
        } else if in_v4(v, [10, 0, 0, 0], 8)
            || in_v4(v, [172, 16, 0, 0], 12)
            || in_v4(v, [192, 168, 0, 0], 16)
        {
            AddressClass::PrivateV4
        } else if in_v4(v, [0, 0, 0, 0], 8)
            || in_v4(v, [100, 64, 0, 0], 10)
            || in_v4(v, [224, 0, 0, 0], 3)
        {
            AddressClass::Other
        } else {
            AddressClass::PublicV4
        };
    }

    let raw = addr.raw();
    if raw == 1 {
        AddressClass::Loopback
    } else if in_v6(raw, 0xfe80 << 112, 10) {
        AddressClass::LinkLocalV6
    } else if in_v6(raw, 0xfec0 << 112, 10) {
        AddressClass::SiteLocalDeprecated
    } else if in_v6(raw, 0xfc00 << 112, 8) {
        AddressClass::Tla
    } else if in_v6(raw, 0xfd00 << 112, 8) {
        AddressClass::Ula
    } else if in_v6(raw, 0x2002 << 112, 16)
        || in_v6(raw, 0x2001 << 112, 32)
        || in_v6(raw, 0x3ffe << 112, 16)
    {
        AddressClass::Other
    } else if in_v6(raw, 0x2000 << 112, 3) {
        AddressClass::Gua
    } else {
        AddressClass::Other
    }
}

/// Number of leading bits shared by `a` and `b`.
///
/// IPv4 pairs are compared over their 32 address bits, IPv6 over all 128.
pub fn common_prefix_len(a: &IpEndpoint, b: &IpEndpoint) -> Result<u8, AddrError> {
    if a.family() != b.family() {
        return Err(AddrError::FamilyMismatch(*a, *b));
    }
    let diff = a.raw() ^ b.raw();
    Ok(match a.family() {
        Family::V4 => (diff as u32).leading_zeros() as u8,
        Family::V6 => diff.leading_zeros() as u8,
    })
}

/// Network mask with the top `len` bits set.
pub fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - u32::from(len.min(128)))
    }
}

/// An address prefix. Bits past `len` are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix {
    base: u128,
    len: u8,
}

impl Prefix {
    pub const ANY: Prefix = Prefix { base: 0, len: 0 };

    pub fn new(base: u128, len: u8) -> Result<Self, AddrError> {
        let p = Prefix { base, len };
        if len > 128 {
            return Err(AddrError::InvalidPrefix {
                text: p.to_string(),
                reason: "length exceeds 128",
            });
        }
        if base & !mask(len) != 0 {
            return Err(AddrError::InvalidPrefix {
                text: p.to_string(),
                reason: "host bits set past prefix length",
            });
        }
        Ok(p)
    }

    /// Builds the prefix of length `len` covering `addr`, zeroing host bits.
    pub fn truncating(addr: &IpEndpoint, len: u8) -> Self {
        let len = len.min(128);
        Prefix {
            base: addr.raw() & mask(len),
            len,
        }
    }

    pub fn base(&self) -> u128 {
        self.base
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn contains(&self, addr: &IpEndpoint) -> bool {
        addr.raw() & mask(self.len) == self.base
    }

    /// True when every address of `other` is also in `self`.
    pub fn covers(&self, other: &Prefix) -> bool {
        other.len >= self.len && other.base & mask(self.len) == self.base
    }

    /// IPv4 prefixes are those strictly longer than the mapped block itself.
    fn is_v4_form(&self) -> bool {
        self.len >= V4_MAPPED_LEN && in_v6(self.base, V4_MAPPED_BASE, V4_MAPPED_LEN)
    }
}

pub fn prefix_contains(p: &Prefix, addr: &IpEndpoint) -> bool {
    p.contains(addr)
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_v4_form() && self.len > V4_MAPPED_LEN {
            write!(
                f,
                "{}/{}",
                Ipv4Addr::from(self.base as u32),
                self.len - V4_MAPPED_LEN
            )
        } else if self.is_v4_form() {
            // std renders mapped addresses as ::ffff:a.b.c.d; gai.conf spells
            // the block in hex.
            let lo = self.base as u32;
            write!(f, "::ffff:{:x}:{:x}/{}", lo >> 16, lo & 0xffff, self.len)
        } else {
            write!(f, "{}/{}", Ipv6Addr::from(self.base), self.len)
        }
    }
}

impl fmt::Debug for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prefix({self})")
    }
}

impl FromStr for Prefix {
    type Err = AddrError;

    /// Accepts `addr/len`. IPv4 lengths are 0-32 and are shifted into the
    /// mapped block.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let bad = |reason| AddrError::InvalidPrefix {
            text: s.to_string(),
            reason,
        };
        let (addr, len) = text.split_once('/').ok_or_else(|| bad("missing `/len`"))?;
        let len: u8 = len.parse().map_err(|_| bad("length is not a number"))?;
        if let Ok(v4) = Ipv4Addr::from_str(addr) {
            if len > 32 {
                return Err(bad("IPv4 length exceeds 32"));
            }
            let ep = IpEndpoint::from_v4(v4);
            return Prefix::new(ep.raw(), len + V4_MAPPED_LEN)
                .map_err(|_| bad("host bits set past prefix length"));
        }
        let v6 = Ipv6Addr::from_str(addr).map_err(|_| bad("invalid address"))?;
        if len > 128 {
            return Err(bad("length exceeds 128"));
        }
        Prefix::new(u128::from(v6), len).map_err(|_| bad("host bits set past prefix length"))
    }
}

impl Serialize for Prefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> IpEndpoint {
        parse_ip(s).unwrap()
    }

    fn pfx(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    #[test]
    fn parse_families() {
        assert_eq!(ip("10.0.0.2").family(), Family::V4);
        assert_eq!(ip("fd00::2").family(), Family::V6);
        assert_eq!(ip("::ffff:10.0.0.2").family(), Family::V4);
        assert_eq!(ip("::ffff:10.0.0.2").text(), "10.0.0.2");
    }

    #[test]
    fn parse_rejects_malformed() {
        let err = parse_ip("10.0.0.256").unwrap_err();
        assert!(err.to_string().contains("10.0.0.256"));
        assert!(parse_ip("fd00:::1").is_err());
        assert!(parse_ip("").is_err());
        assert!(parse_ip("fe80::1%eth0").is_err());
    }

    #[test]
    fn canonical_text_is_rfc5952() {
        assert_eq!(
            ip("2001:0DB8:0000:0000:0000:0000:0000:0001").text(),
            "2001:db8::1"
        );
        assert_eq!(ip("2001:db8:0:0:1:0:0:1").text(), "2001:db8::1:0:0:1");
        assert_eq!(ip("FD00::0002").text(), "fd00::2");
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&ip("fd12:3456::1")), AddressClass::Ula);
        assert_eq!(classify(&ip("fc00::1")), AddressClass::Tla);
        assert_eq!(classify(&ip("192.168.1.5")), AddressClass::PrivateV4);
        assert_eq!(classify(&ip("2001:db8::1")), AddressClass::Gua);
        assert_eq!(classify(&ip("203.0.113.10")), AddressClass::PublicV4);
        assert_eq!(classify(&ip("172.31.255.255")), AddressClass::PrivateV4);
        assert_eq!(classify(&ip("172.32.0.1")), AddressClass::PublicV4);
        assert_eq!(classify(&ip("::1")), AddressClass::Loopback);
        assert_eq!(classify(&ip("127.0.0.1")), AddressClass::Loopback);
        assert_eq!(classify(&ip("fe80::1")), AddressClass::LinkLocalV6);
        assert_eq!(classify(&ip("169.254.3.4")), AddressClass::LinkLocalV4);
        assert_eq!(classify(&ip("fec0::1")), AddressClass::SiteLocalDeprecated);
        assert_eq!(classify(&ip("2002:c000:204::1")), AddressClass::Other);
        assert_eq!(classify(&ip("2001:0:4136::1")), AddressClass::Other);
        assert_eq!(classify(&ip("ff02::1")), AddressClass::Other);
        assert_eq!(classify(&ip("224.0.0.1")), AddressClass::Other);
    }

    #[test]
    fn common_prefix_examples() {
        assert_eq!(common_prefix_len(&ip("::1"), &ip("::1")).unwrap(), 128);
        assert_eq!(
            common_prefix_len(&ip("fd00::1"), &ip("fd00::2")).unwrap(),
            126
        );
        assert_eq!(
            common_prefix_len(&ip("fd00::1"), &ip("fc00::1")).unwrap(),
            7
        );
        assert_eq!(
            common_prefix_len(&ip("10.0.0.1"), &ip("10.0.0.1")).unwrap(),
            32
        );
        assert!(matches!(
            common_prefix_len(&ip("10.0.0.1"), &ip("fd00::1")),
            Err(AddrError::FamilyMismatch(..))
        ));
    }

    #[test]
    fn prefix_contains_examples() {
        assert!(prefix_contains(&pfx("fc00::/7"), &ip("fd00::1")));
        assert!(!prefix_contains(&pfx("fc00::/8"), &ip("fd00::1")));
        assert!(prefix_contains(&pfx("::/0"), &ip("1.2.3.4")));
        assert!(prefix_contains(&pfx("::/0"), &ip("fe80::9")));
        assert!(prefix_contains(&pfx("10.0.0.0/8"), &ip("10.200.0.1")));
        assert!(prefix_contains(&pfx("::ffff:0:0/96"), &ip("10.200.0.1")));
    }

    #[test]
    fn prefix_parse_and_display() {
        assert_eq!(pfx("::ffff:0:0/96").to_string(), "::ffff:0:0/96");
        assert_eq!(pfx("10.0.0.0/8").to_string(), "10.0.0.0/8");
        assert_eq!(pfx("10.0.0.0/8").len(), 104);
        assert_eq!(pfx("0.0.0.0/0"), pfx("::ffff:0:0/96"));
        assert_eq!(pfx("FC00::/7").to_string(), "fc00::/7");
        assert!("fc00::1/7".parse::<Prefix>().is_err());
        assert!("fc00::/129".parse::<Prefix>().is_err());
        assert!("10.0.0.0/33".parse::<Prefix>().is_err());
        assert!("notanaddr/0".parse::<Prefix>().is_err());
        assert!("fc00::".parse::<Prefix>().is_err());
    }

    #[test]
    fn tla_and_ula_split_the_ula_block() {
        let fc7 = pfx("fc00::/7");
        assert!(fc7.covers(&pfx("fc00::/8")));
        assert!(fc7.covers(&pfx("fd00::/8")));
        assert!(!pfx("fc00::/8").covers(&pfx("fd00::/8")));
    }

    #[test]
    fn serde_uses_text() {
        let json = serde_json::to_string(&ip("fd00::2")).unwrap();
        assert_eq!(json, "\"fd00::2\"");
        let back: IpEndpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ip("fd00::2"));
        let p: Prefix = serde_json::from_str("\"10.0.0.0/8\"").unwrap();
        assert_eq!(p, pfx("10.0.0.0/8"));
    }
}
