//! Longest-prefix-match map keyed by [`Prefix`].
//!
//! Entries are bucketed by prefix length; a lookup probes the populated
//! lengths from longest to shortest, so it costs at most one hash probe per
//! distinct length in the map.

use std::collections::HashMap;

use crate::addr::{mask, IpEndpoint, Prefix};

#[derive(Debug, Clone)]
pub struct PrefixMap<T> {
    buckets: HashMap<u8, HashMap<u128, T>>,
    // Populated lengths, longest first.
    lengths: Vec<u8>,
}

impl<T> Default for PrefixMap<T> {
    fn default() -> Self {
        PrefixMap {
            buckets: HashMap::new(),
            lengths: Vec::new(),
        }
    }
}

impl<T> PrefixMap<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `value` at `prefix`, returning the previous value if any.
    pub fn insert(&mut self, prefix: Prefix, value: T) -> Option<T> {
        let len = prefix.len();
        if !self.buckets.contains_key(&len) {
            self.lengths.push(len);
            self.lengths.sort_unstable_by(|a, b| b.cmp(a));
        }
        self.buckets
            .entry(len)
            .or_default()
            .insert(prefix.base(), value)
    }

    pub fn get_exact(&self, prefix: &Prefix) -> Option<&T> {
        self.buckets.get(&prefix.len())?.get(&prefix.base())
    }

    /// The most specific entry containing `addr`.
    pub fn longest_match(&self, addr: &IpEndpoint) -> Option<(Prefix, &T)> {
        self.lengths.iter().find_map(|&len| {
            let base = addr.raw() & mask(len);
            self.buckets[&len].get(&base).map(|v| {
                let prefix = Prefix::new(base, len).expect("masked base");
                (prefix, v)
            })
        })
    }

    pub fn get(&self, addr: &IpEndpoint) -> Option<&T> {
        self.longest_match(addr).map(|(_, v)| v)
    }

    pub fn contains(&self, addr: &IpEndpoint) -> bool {
        self.longest_match(addr).is_some()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries, ordered by prefix.
    pub fn iter(&self) -> impl Iterator<Item = (Prefix, &T)> {
        let mut all: Vec<(Prefix, &T)> = self
            .buckets
            .iter()
            .flat_map(|(&len, bucket)| {
                bucket
                    .iter()
                    .map(move |(&base, v)| (Prefix::new(base, len).expect("masked base"), v))
            })
            .collect();
        all.sort_by_key(|(p, _)| *p);
        all.into_iter()
    }
}

impl<T> FromIterator<(Prefix, T)> for PrefixMap<T> {
    fn from_iter<I: IntoIterator<Item = (Prefix, T)>>(iter: I) -> Self {
        let mut map = PrefixMap::new();
        for (p, v) in iter {
            map.insert(p, v);
        }
        map
    }
}
