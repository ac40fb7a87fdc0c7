use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LeakError;
use crate::addr::{Family, IpEndpoint};

/// One logged visit with the addresses observed for each family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Session {
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub session_id: String,
    pub v4: Option<IpEndpoint>,
    pub v6: Option<IpEndpoint>,
    pub preferred: Family,
}

impl Session {
    pub fn new(
        timestamp: i64,
        session_id: impl Into<String>,
        v4: Option<IpEndpoint>,
        v6: Option<IpEndpoint>,
        preferred: Family,
    ) -> Result<Self, LeakError> {
        let s = Session {
            timestamp,
            session_id: session_id.into(),
            v4,
            v6,
            preferred,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), LeakError> {
        let bad = |m: &str| {
            Err(LeakError::InvalidSession(format!(
                "{}: {m}",
                self.session_id
            )))
        };
        if self.v4.is_none() && self.v6.is_none() {
            return bad("no address observed");
        }
        if self.v4.is_some_and(|a| a.family() != Family::V4) {
            return bad("v4 field holds an IPv6 address");
        }
        if self.v6.is_some_and(|a| a.family() != Family::V6) {
            return bad("v6 field holds an IPv4 address");
        }
        let preferred_present = match self.preferred {
            Family::V4 => self.v4.is_some(),
            Family::V6 => self.v6.is_some(),
        };
        if !preferred_present {
            return bad("preferred family has no address");
        }
        Ok(())
    }

    pub fn hour_bucket(&self) -> i64 {
        self.timestamp.div_euclid(3600)
    }

    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(86_400)
    }

    pub fn is_dual_stack(&self) -> bool {
        self.v4.is_some() && self.v6.is_some()
    }
}

/// Keeps one session per (v4, v6, UTC hour), the earliest one. Survivors
/// stay in input order.
pub fn dedupe(sessions: &[Session]) -> Vec<Session> {
    let mut keep: HashMap<(Option<IpEndpoint>, Option<IpEndpoint>, i64), usize> =
        HashMap::with_capacity(sessions.len());
    for (i, s) in sessions.iter().enumerate() {
        keep.entry((s.v4, s.v6, s.hour_bucket()))
            .and_modify(|best| {
                if s.timestamp < sessions[*best].timestamp {
                    *best = i;
                }
            })
            .or_insert(i);
    }
    let mut idx: Vec<usize> = keep.into_values().collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| sessions[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::parse_ip;

    fn s(ts: i64, id: &str, v4: &str, v6: &str) -> Session {
        let a = |t: &str| (!t.is_empty()).then(|| parse_ip(t).unwrap());
        Session::new(ts, id, a(v4), a(v6), Family::V4).unwrap()
    }

    #[test]
    fn repeats_within_hour_collapse() {
        let out = dedupe(&[
            s(7200 + 600, "b", "198.51.100.1", "2001:db8::1"),
            s(7200, "a", "198.51.100.1", "2001:db8::1"),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].session_id, "a");
    }

    #[test]
    fn different_hours_survive() {
        let out = dedupe(&[
            s(0, "a", "198.51.100.1", "2001:db8::1"),
            s(7200, "b", "198.51.100.1", "2001:db8::1"),
        ]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn different_v6_survives() {
        let out = dedupe(&[
            s(0, "a", "198.51.100.1", "2001:db8::1"),
            s(60, "b", "198.51.100.1", "2001:db8::2"),
        ]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn hour_buckets_are_utc_aligned() {
        // 59:59 and 1:00:00 land in different buckets despite one second apart
        let out = dedupe(&[
            s(3599, "a", "198.51.100.1", ""),
            s(3600, "b", "198.51.100.1", ""),
        ]);
        assert_eq!(out.len(), 2);
        assert_eq!(s(-1, "n", "198.51.100.1", "").hour_bucket(), -1);
    }

    #[test]
    fn session_invariants() {
        let v6 = parse_ip("2001:db8::1").unwrap();
        let v4 = parse_ip("198.51.100.1").unwrap();
        assert!(Session::new(0, "x", None, None, Family::V4).is_err());
        assert!(Session::new(0, "x", None, Some(v6), Family::V4).is_err());
        assert!(Session::new(0, "x", Some(v6), None, Family::V4).is_err());
        assert!(Session::new(0, "x", Some(v4), Some(v4), Family::V4).is_err());
        assert!(Session::new(0, "x", Some(v4), Some(v6), Family::V6).is_ok());
    }
}
