//! RFC 6724 policy tables, source address selection and destination
//! sorting.
//!
//! A [`PolicyTable`] maps prefixes to a (precedence, label) pair by longest
//! match. [`select_source`] picks a source for one destination and
//! [`sort_destinations`] turns a destination list into the ranked
//! [`CandidatePair`] list that connection racing consumes.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{
    common_prefix_len, AddressClass, Family, IpEndpoint, Prefix, Scope, V4_MAPPED_BASE,
    V4_MAPPED_LEN,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate {keyword} entry for prefix {prefix}")]
    DuplicatePrefix {
        line: usize,
        keyword: &'static str,
        prefix: Prefix,
    },
    #[error("prefix {prefix} has no {missing} entry")]
    Unpaired {
        prefix: Prefix,
        missing: &'static str,
    },
    #[error("policy table has duplicate rows for prefix {0}")]
    DuplicateRow(Prefix),
    #[error("policy table has no ::/0 row")]
    MissingDefaultRow,
    #[error("no source address of the same family as {0}")]
    NoRoute(IpEndpoint),
    #[error("interface id must not be empty")]
    EmptyInterface,
    #[error("unranked pair class ({0}, {1})")]
    UnrankedPairClass(AddressClass, AddressClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyRow {
    pub prefix: Prefix,
    pub precedence: u32,
    pub label: u32,
}

impl PolicyRow {
    pub fn new(prefix: &str, precedence: u32, label: u32) -> Self {
        PolicyRow {
            prefix: prefix.parse().expect("static prefix literal"),
            precedence,
            label,
        }
    }
}

/// Label and precedence of the row an address matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub label: u32,
    pub precedence: u32,
}

/// An ordered, validated list of policy rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyTable {
    rows: Vec<PolicyRow>,
}

impl PolicyTable {
    /// Validates uniqueness of prefixes and presence of the `::/0` row.
    pub fn new(rows: Vec<PolicyRow>) -> Result<Self, PolicyError> {
        let mut seen = HashMap::with_capacity(rows.len());
        for row in &rows {
            if seen.insert(row.prefix, ()).is_some() {
                return Err(PolicyError::DuplicateRow(row.prefix));
            }
        }
        if !seen.contains_key(&Prefix::ANY) {
            return Err(PolicyError::MissingDefaultRow);
        }
        Ok(PolicyTable { rows })
    }

    pub fn rows(&self) -> &[PolicyRow] {
        &self.rows
    }

    /// Returns a copy with `row` added, replacing any row with the same
    /// prefix in place.
    pub fn with_row(&self, row: PolicyRow) -> PolicyTable {
        let mut rows = self.rows.clone();
        match rows.iter_mut().find(|r| r.prefix == row.prefix) {
            Some(existing) => *existing = row,
            None => rows.push(row),
        }
        PolicyTable { rows }
    }

    /// The longest-prefix-matching row.
    pub fn matching_row(&self, addr: &IpEndpoint) -> &PolicyRow {
        self.rows
            .iter()
            .filter(|r| r.prefix.contains(addr))
            .max_by_key(|r| r.prefix.len())
            .expect("::/0 row matches every address")
    }

    pub fn lookup(&self, addr: &IpEndpoint) -> Policy {
        let row = self.matching_row(addr);
        Policy {
            label: row.label,
            precedence: row.precedence,
        }
    }

    pub fn row_for(&self, prefix: &Prefix) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.prefix == *prefix)
    }

    /// Renders the table in the line-oriented config format.
    ///
    /// Precedence lines come first, in row order, so parsing the output
    /// restores the same row order.
    pub fn to_config(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.prefix.to_string().len())
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&format!(
                "precedence  {:<width$}  {}\n",
                row.prefix.to_string(),
                row.precedence
            ));
        }
        for row in &self.rows {
            out.push_str(&format!(
                "label       {:<width$}  {}\n",
                row.prefix.to_string(),
                row.label
            ));
        }
        out
    }
}

/// The RFC 6724 default policy table.
pub fn default_policy() -> PolicyTable {
    PolicyTable::new(vec![
        PolicyRow::new("::1/128", 50, 0),
        PolicyRow::new("::/0", 40, 1),
        PolicyRow::new("::ffff:0:0/96", 35, 4),
        PolicyRow::new("2002::/16", 30, 2),
        PolicyRow::new("2001::/32", 5, 5),
        PolicyRow::new("fc00::/7", 3, 13),
        PolicyRow::new("::/96", 1, 3),
        PolicyRow::new("fec0::/10", 1, 11),
        PolicyRow::new("3ffe::/16", 1, 12),
    ])
    .expect("default table is valid")
}

/// Default table plus the tunnel-local row `fc00::/8` (precedence 35,
/// label 1). The /8 shadows `fc00::/7` for TLA addresses only; `fd00::/8`
/// ULAs keep the /7 row.
pub fn tla_policy() -> PolicyTable {
    default_policy().with_row(PolicyRow::new("fc00::/8", 35, 1))
}

/// Parses the gai.conf-style config format.
///
/// Accepted lines are `precedence <prefix> <int>`, `label <prefix> <int>`,
/// blank lines and `#` comments. Rows keep the order in which their prefix
/// first appears.
pub fn parse_policy_config(text: &str) -> Result<PolicyTable, PolicyError> {
    let mut order: Vec<Prefix> = Vec::new();
    let mut precedence: HashMap<Prefix, u32> = HashMap::new();
    let mut label: HashMap<Prefix, u32> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| PolicyError::Malformed {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [keyword, prefix, value] = fields[..] else {
            return Err(malformed(format!(
                "expected `<keyword> <prefix> <value>`, got `{line}`"
            )));
        };
        let prefix: Prefix = prefix.parse().map_err(|e| malformed(format!("{e}")))?;
        let value: u32 = value
            .parse()
            .map_err(|_| malformed(format!("value `{value}` is not a non-negative integer")))?;
        let (keyword, target) = match keyword {
            "precedence" => ("precedence", &mut precedence),
            "label" => ("label", &mut label),
            other => return Err(malformed(format!("unknown keyword `{other}`"))),
        };
        if target.insert(prefix, value).is_some() {
            return Err(PolicyError::DuplicatePrefix {
                line: line_no,
                keyword,
                prefix,
            });
        }
        if !order.contains(&prefix) {
            order.push(prefix);
        }
    }

    let mut rows = Vec::with_capacity(order.len());
    for prefix in order {
        let precedence = *precedence.get(&prefix).ok_or(PolicyError::Unpaired {
            prefix,
            missing: "precedence",
        })?;
        let label = *label.get(&prefix).ok_or(PolicyError::Unpaired {
            prefix,
            missing: "label",
        })?;
        rows.push(PolicyRow {
            prefix,
            precedence,
            label,
        });
    }
    PolicyTable::new(rows)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceAttrs {
    pub deprecated: bool,
    /// Carried for completeness; the prefer-temporary rule is not applied.
    pub temporary: bool,
    /// Carried for completeness; there is no mobile-IP model.
    pub home: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceCandidate {
    pub addr: IpEndpoint,
    pub interface_id: String,
    #[serde(default)]
    pub attrs: SourceAttrs,
}

impl SourceCandidate {
    pub fn new(addr: IpEndpoint, interface_id: impl Into<String>) -> Result<Self, PolicyError> {
        let interface_id = interface_id.into();
        if interface_id.is_empty() {
            return Err(PolicyError::EmptyInterface);
        }
        Ok(SourceCandidate {
            addr,
            interface_id,
            attrs: SourceAttrs::default(),
        })
    }

    pub fn deprecated(mut self) -> Self {
        self.attrs.deprecated = true;
        self
    }
}

/// The source-selection rule that decided between two candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceRule {
    SameAddress,
    AppropriateScope,
    AvoidDeprecated,
    MatchingLabel,
    LongestPrefix,
    InputOrder,
}

/// `Less` means `a` is preferred over `b` as a source for `dest`.
pub fn compare_sources(
    a: &SourceCandidate,
    b: &SourceCandidate,
    dest: &IpEndpoint,
    table: &PolicyTable,
) -> (Ordering, SourceRule) {
    // Rule 1: prefer the destination address itself.
    if a.addr == *dest && b.addr != *dest {
        return (Ordering::Less, SourceRule::SameAddress);
    }
    if b.addr == *dest && a.addr != *dest {
        return (Ordering::Greater, SourceRule::SameAddress);
    }

    // Rule 2: prefer appropriate scope.
    let (sa, sb, sd) = (a.addr.scope(), b.addr.scope(), dest.scope());
    match sa.cmp(&sb) {
        Ordering::Less => {
            let ord = if sa < sd {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            return (ord, SourceRule::AppropriateScope);
        }
        Ordering::Greater => {
            let ord = if sb < sd {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            return (ord, SourceRule::AppropriateScope);
        }
        Ordering::Equal => {}
    }

    // Rule 3: avoid deprecated addresses.
    match (a.attrs.deprecated, b.attrs.deprecated) {
        (false, true) => return (Ordering::Less, SourceRule::AvoidDeprecated),
        (true, false) => return (Ordering::Greater, SourceRule::AvoidDeprecated),
        _ => {}
    }

    // Rule 6: prefer matching label.
    let dest_label = table.lookup(dest).label;
    let la = table.lookup(&a.addr).label == dest_label;
    let lb = table.lookup(&b.addr).label == dest_label;
    if la != lb {
        let ord = if la {
            Ordering::Less
        } else {
            Ordering::Greater
        };
        return (ord, SourceRule::MatchingLabel);
    }

    // Rule 8: longest matching prefix.
    let ca = common_prefix_len(&a.addr, dest).unwrap_or(0);
    let cb = common_prefix_len(&b.addr, dest).unwrap_or(0);
    if ca != cb {
        return (cb.cmp(&ca), SourceRule::LongestPrefix);
    }

    (Ordering::Equal, SourceRule::InputOrder)
}

/// Index of the preferred same-family source for `dest`, first wins ties.
pub fn select_source_index(
    sources: &[SourceCandidate],
    dest: &IpEndpoint,
    table: &PolicyTable,
) -> Result<usize, PolicyError> {
    let mut best: Option<usize> = None;
    for (i, cand) in sources.iter().enumerate() {
        if cand.addr.family() != dest.family() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if compare_sources(cand, &sources[b], dest, table).0 == Ordering::Less => {
                Some(i)
            }
            keep => keep,
        };
    }
    best.ok_or(PolicyError::NoRoute(*dest))
}

pub fn select_source(
    sources: &[SourceCandidate],
    dest: &IpEndpoint,
    table: &PolicyTable,
) -> Result<SourceCandidate, PolicyError> {
    select_source_index(sources, dest, table).map(|i| sources[i].clone())
}

/// A (source, destination) pair with the sort keys computed from a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub source: SourceCandidate,
    pub dest: IpEndpoint,
    pub dest_label: u32,
    pub dest_precedence: u32,
    pub source_label: u32,
    pub cpl: u8,
    pub usable: bool,
}

impl CandidatePair {
    pub fn build(source: SourceCandidate, dest: IpEndpoint, table: &PolicyTable) -> Self {
        let dp = table.lookup(&dest);
        let sp = table.lookup(&source.addr);
        let cpl = common_prefix_len(&source.addr, &dest).unwrap_or(0);
        let usable = is_reachable(&source.addr, &dest);
        CandidatePair {
            source,
            dest,
            dest_label: dp.label,
            dest_precedence: dp.precedence,
            source_label: sp.label,
            cpl,
            usable,
        }
    }

    pub fn family(&self) -> Family {
        self.dest.family()
    }

    pub fn labels_match(&self) -> bool {
        self.source_label == self.dest_label
    }

    fn scopes_match(&self) -> bool {
        self.source.addr.scope() == self.dest.scope()
    }
}

/// Whether a packet from `source` can plausibly reach `dest`: loopback
/// destinations need a loopback source, otherwise the source scope must be
/// at least the destination scope.
fn is_reachable(source: &IpEndpoint, dest: &IpEndpoint) -> bool {
    match dest.scope() {
        Scope::Loopback => source.scope() == Scope::Loopback,
        ds => source.scope() >= ds,
    }
}

/// The destination-sorting rule that ordered two adjacent pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DestRule {
    AvoidUnusable,
    MatchingScope,
    AvoidDeprecated,
    MatchingLabel,
    HigherPrecedence,
    LongestPrefix,
    InputOrder,
}

impl DestRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DestRule::AvoidUnusable => "avoid-unusable",
            DestRule::MatchingScope => "matching-scope",
            DestRule::AvoidDeprecated => "avoid-deprecated",
            DestRule::MatchingLabel => "matching-label",
            DestRule::HigherPrecedence => "higher-precedence",
            DestRule::LongestPrefix => "longest-prefix",
            DestRule::InputOrder => "input-order",
        }
    }
}

impl fmt::Display for DestRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rules up to precedence compare plain keys, so they form a total
/// preorder and can drive a stable sort directly.
fn compare_keyed(a: &CandidatePair, b: &CandidatePair) -> (Ordering, DestRule) {
    let chain = [
        (b.usable.cmp(&a.usable), DestRule::AvoidUnusable),
        (
            b.scopes_match().cmp(&a.scopes_match()),
            DestRule::MatchingScope,
        ),
        (
            a.source.attrs.deprecated.cmp(&b.source.attrs.deprecated),
            DestRule::AvoidDeprecated,
        ),
        (
            b.labels_match().cmp(&a.labels_match()),
            DestRule::MatchingLabel,
        ),
        (
            b.dest_precedence.cmp(&a.dest_precedence),
            DestRule::HigherPrecedence,
        ),
    ];
    chain
        .into_iter()
        .find(|(ord, _)| *ord != Ordering::Equal)
        .unwrap_or((Ordering::Equal, DestRule::InputOrder))
}

/// Compares two pairs under the destination rules. The longest-prefix rule
/// only applies when both destinations share a family.
pub fn compare_pairs(a: &CandidatePair, b: &CandidatePair) -> (Ordering, DestRule) {
    let keyed = compare_keyed(a, b);
    if keyed.0 != Ordering::Equal {
        return keyed;
    }
    if a.family() == b.family() && a.cpl != b.cpl {
        return (b.cpl.cmp(&a.cpl), DestRule::LongestPrefix);
    }
    (Ordering::Equal, DestRule::InputOrder)
}

/// A destination that produced no pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedDestination {
    pub dest: IpEndpoint,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SortOutcome {
    pub pairs: Vec<CandidatePair>,
    /// `decisions[i]` is the rule that placed `pairs[i]` before `pairs[i + 1]`.
    pub decisions: Vec<DestRule>,
    pub dropped: Vec<DroppedDestination>,
}

/// Sorts destinations and records, for each adjacent pair, the deciding
/// rule.
pub fn sort_destinations_explained(
    dests: &[IpEndpoint],
    sources: &[SourceCandidate],
    table: &PolicyTable,
) -> SortOutcome {
    let mut pairs = Vec::with_capacity(dests.len());
    let mut dropped = Vec::new();
    for dest in dests {
        match select_source(sources, dest, table) {
            Ok(source) => pairs.push(CandidatePair::build(source, *dest, table)),
            Err(e) => dropped.push(DroppedDestination {
                dest: *dest,
                reason: e.to_string(),
            }),
        }
    }

    pairs.sort_by(|a, b| compare_keyed(a, b).0);

    // Longest-prefix only orders same-family pairs, so apply it inside each
    // run of keyed ties while leaving the family layout of the run alone.
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && compare_keyed(&pairs[start], &pairs[end]).0 == Ordering::Equal {
            end += 1;
        }
        for family in [Family::V6, Family::V4] {
            let slots: Vec<usize> = (start..end)
                .filter(|&i| pairs[i].family() == family)
                .collect();
            let mut members: Vec<CandidatePair> = slots.iter().map(|&i| pairs[i].clone()).collect();
            members.sort_by_key(|p| std::cmp::Reverse(p.cpl));
            for (slot, member) in slots.into_iter().zip(members) {
                pairs[slot] = member;
            }
        }
        start = end;
    }

    let decisions = pairs
        .windows(2)
        .map(|w| compare_pairs(&w[0], &w[1]).1)
        .collect();
    SortOutcome {
        pairs,
        decisions,
        dropped,
    }
}

/// The ranked candidate list. Destinations without a same-family source are
/// left out.
pub fn sort_destinations(
    dests: &[IpEndpoint],
    sources: &[SourceCandidate],
    table: &PolicyTable,
) -> Vec<CandidatePair> {
    sort_destinations_explained(dests, sources, table).pairs
}

/// The six (source, destination) class combinations of the ranking
/// summary, in rank order under the default table.
pub const RANKED_PAIR_CLASSES: [(AddressClass, AddressClass); 6] = [
    (AddressClass::Gua, AddressClass::Gua),
    (AddressClass::Ula, AddressClass::Ula),
    (AddressClass::PublicV4, AddressClass::PublicV4),
    (AddressClass::PrivateV4, AddressClass::PrivateV4),
    (AddressClass::PrivateV4, AddressClass::PublicV4),
    (AddressClass::Ula, AddressClass::Gua),
];

/// A concrete address standing in for a class when ranking class pairs.
pub fn class_representative(class: AddressClass) -> Option<IpEndpoint> {
    let text = match class {
        AddressClass::Gua => "2001:db8::1",
        AddressClass::Ula => "fd00::1",
        AddressClass::Tla => "fc00::1",
        AddressClass::PublicV4 => "203.0.113.1",
        AddressClass::PrivateV4 => "10.0.0.1",
        _ => return None,
    };
    Some(text.parse().expect("static literal"))
}

/// Precedence of the row that covers a whole family: `::/0` for IPv6 and
/// `::ffff:0:0/96` for IPv4.
fn family_precedence(table: &PolicyTable, family: Family) -> u32 {
    let (root, root_addr) = match family {
        Family::V6 => (Prefix::ANY, IpEndpoint::from_raw(0)),
        Family::V4 => (
            Prefix::new(V4_MAPPED_BASE, V4_MAPPED_LEN).expect("mapped block"),
            IpEndpoint::from_raw(V4_MAPPED_BASE),
        ),
    };
    table
        .row_for(&root)
        .map(|r| r.precedence)
        .unwrap_or_else(|| table.lookup(&root_addr).precedence)
}

// Sort key for a class pair, smaller is better: label mismatch, then the
// destination family's precedence, then locality (both globally routable,
// both local, or a mix needing translation).
fn class_pair_key(
    src: AddressClass,
    dst: AddressClass,
    table: &PolicyTable,
) -> Option<(bool, i64, u8)> {
    let s = class_representative(src)?;
    let d = class_representative(dst)?;
    let label_mismatch = table.lookup(&s).label != table.lookup(&d).label;
    let precedence = family_precedence(table, d.family());
    let locality = match (src.is_globally_routable(), dst.is_globally_routable()) {
        (true, true) => 0,
        (false, false) => 1,
        _ => 2,
    };
    Some((label_mismatch, -i64::from(precedence), locality))
}

/// Rank 1-6 of a tabulated class pair, derived from `table`.
///
/// The rank is one plus the number of tabulated pairs that sort strictly
/// ahead of this one.
pub fn rank_pair_class(
    src: AddressClass,
    dst: AddressClass,
    table: &PolicyTable,
) -> Result<u8, PolicyError> {
    if !RANKED_PAIR_CLASSES.contains(&(src, dst)) {
        return Err(PolicyError::UnrankedPairClass(src, dst));
    }
    let key = class_pair_key(src, dst, table).ok_or(PolicyError::UnrankedPairClass(src, dst))?;
    let ahead = RANKED_PAIR_CLASSES
        .iter()
        .filter_map(|&(s, d)| class_pair_key(s, d, table))
        .filter(|k| *k < key)
        .count();
    Ok(ahead as u8 + 1)
}
