//! CSV and JSON formats for session logs, directories, classified sessions,
//! reports and plot data.
//!
//! Numbers are written with Rust's shortest round-trip float formatting in
//! both CSV and JSON, so the two report variants carry identical values.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};
use serde::Serialize;

use super::aggregate::{DeprefSummary, ProviderReport, ReportSet};
use super::classify::{ClassifiedSession, SessionCategory};
use super::directory::{AsCategory, Asn, Directory};
use super::session::Session;
use super::LeakError;
use crate::addr::{parse_ip, Family, IpEndpoint, Prefix};
use crate::prefix_map::PrefixMap;

pub const SESSION_HEADER: [&str; 5] = ["timestamp", "session_id", "v4", "v6", "preferred"];
pub const VPN_HEADER: [&str; 2] = ["prefix", "provider"];
pub const AS_PREFIX_HEADER: [&str; 2] = ["prefix", "asn"];
pub const ORG_HEADER: [&str; 2] = ["asn", "org_id"];
pub const CATEGORY_HEADER: [&str; 2] = ["asn", "category"];
pub const CLASSIFIED_HEADER: [&str; 7] = [
    "timestamp",
    "session_id",
    "provider",
    "category",
    "preferred",
    "dual_stack",
    "unknown_as",
];
pub const REPORT_HEADER: [&str; 12] = [
    "provider",
    "days",
    "mean_sessions_per_day",
    "v4_only",
    "dual_safe",
    "dual_safe_prefetch",
    "dual_safe_partial",
    "leak",
    "total_vpn",
    "leak_rate_all",
    "leak_rate_dual",
    "depref_rate",
];

/// A row that failed to parse and was skipped in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRow {
    pub source: String,
    pub line: u64,
    pub message: String,
}

/// Rows parsed from one file plus the rows skipped on the way.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub rows: Vec<T>,
    pub skipped: Vec<SkippedRow>,
}

fn read_rows<R: Read, T>(
    reader: R,
    source: &str,
    header: &[&str],
    strict: bool,
    mut parse: impl FnMut(&StringRecord) -> Result<T, String>,
) -> Result<Loaded<T>, LeakError> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let found = rdr.headers()?.clone();
    let mut out = Loaded {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    if found.is_empty() {
        // empty file
        return Ok(out);
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(LeakError::Header {
            source_name: source.to_string(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    for record in rdr.records() {
        let (line, parsed) = match record {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                let parsed = if rec.len() != header.len() {
                    Err(format!(
                        "expected {} fields, found {}",
                        header.len(),
                        rec.len()
                    ))
                } else {
                    parse(&rec)
                };
                (line, parsed)
            }
            Err(e) => (e.position().map_or(0, |p| p.line()), Err(e.to_string())),
        };
        match parsed {
            Ok(row) => out.rows.push(row),
            Err(message) if strict => {
                return Err(LeakError::Row {
                    source_name: source.to_string(),
                    line,
                    message,
                })
            }
            Err(message) => out.skipped.push(SkippedRow {
                source: source.to_string(),
                line,
                message,
            }),
        }
    }
    Ok(out)
}

fn opt_addr(field: &str, family: Family) -> Result<Option<IpEndpoint>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let addr = parse_ip(field).map_err(|e| e.to_string())?;
    if addr.family() != family {
        return Err(format!("`{field}` is not an {family} address"));
    }
    Ok(Some(addr))
}

/// Address or prefix; a bare address becomes a host prefix.
pub fn parse_prefix_or_host(text: &str) -> Result<Prefix, String> {
    if text.contains('/') {
        text.parse()
            .map_err(|e: crate::addr::AddrError| e.to_string())
    } else {
        let addr = parse_ip(text).map_err(|e| e.to_string())?;
        Ok(Prefix::truncating(&addr, 128))
    }
}

fn parse_asn(text: &str) -> Result<Asn, String> {
    let digits = text
        .strip_prefix("AS")
        .or_else(|| text.strip_prefix("as"))
        .unwrap_or(text);
    digits.parse().map_err(|_| format!("invalid ASN `{text}`"))
}

fn parse_session(rec: &StringRecord) -> Result<Session, String> {
    let timestamp: i64 = rec[0]
        .parse()
        .map_err(|_| format!("invalid timestamp `{}`", &rec[0]))?;
    let v4 = opt_addr(&rec[2], Family::V4)?;
    let v6 = opt_addr(&rec[3], Family::V6)?;
    let preferred = match &rec[4] {
        "v4" => Family::V4,
        "v6" => Family::V6,
        other => return Err(format!("preferred must be v4 or v6, got `{other}`")),
    };
    Session::new(timestamp, &rec[1], v4, v6, preferred).map_err(|e| e.to_string())
}

pub fn read_sessions<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<Session>, LeakError> {
    read_rows(reader, source, &SESSION_HEADER, strict, parse_session)
}

pub fn write_sessions(sessions: &[Session]) -> String {
    let mut out = SESSION_HEADER.join(",");
    out.push('\n');
    for s in sessions {
        let addr = |a: &Option<IpEndpoint>| a.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.timestamp,
            s.session_id,
            addr(&s.v4),
            addr(&s.v6),
            s.preferred
        );
    }
    out
}

pub fn read_vpn_directory<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<(Prefix, String)>, LeakError> {
    read_rows(reader, source, &VPN_HEADER, strict, |rec| {
        if rec[1].is_empty() {
            return Err("empty provider".into());
        }
        Ok((parse_prefix_or_host(&rec[0])?, rec[1].to_string()))
    })
}

pub fn read_as_prefixes<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<(Prefix, Asn)>, LeakError> {
    read_rows(reader, source, &AS_PREFIX_HEADER, strict, |rec| {
        Ok((parse_prefix_or_host(&rec[0])?, parse_asn(&rec[1])?))
    })
}

pub fn read_org_map<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<(Asn, String)>, LeakError> {
    read_rows(reader, source, &ORG_HEADER, strict, |rec| {
        if rec[1].is_empty() {
            return Err("empty org_id".into());
        }
        Ok((parse_asn(&rec[0])?, rec[1].to_string()))
    })
}

pub fn read_category_map<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<(Asn, AsCategory)>, LeakError> {
    read_rows(reader, source, &CATEGORY_HEADER, strict, |rec| {
        let category = rec[1].parse().expect("infallible");
        Ok((parse_asn(&rec[0])?, category))
    })
}

/// One prefix per line; blank lines and `#` comments are ignored.
pub fn read_prefetch<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<Prefix>, LeakError> {
    let mut out = Loaded {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        match parse_prefix_or_host(text) {
            Ok(p) => out.rows.push(p),
            Err(message) if strict => {
                return Err(LeakError::Row {
                    source_name: source.to_string(),
                    line: idx as u64 + 1,
                    message,
                })
            }
            Err(message) => out.skipped.push(SkippedRow {
                source: source.to_string(),
                line: idx as u64 + 1,
                message,
            }),
        }
    }
    Ok(out)
}

/// Paths of the directory datasets. The prefetch list is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryPaths {
    pub vpn: PathBuf,
    pub as_prefixes: PathBuf,
    pub orgs: PathBuf,
    pub categories: PathBuf,
    pub prefetch: Option<PathBuf>,
}

impl DirectoryPaths {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        DirectoryPaths {
            vpn: dir.join("vpn.csv"),
            as_prefixes: dir.join("as_prefixes.csv"),
            orgs: dir.join("as_orgs.csv"),
            categories: dir.join("as_categories.csv"),
            prefetch: Some(dir.join("prefetch.txt")),
        }
    }
}

fn open(path: &Path) -> Result<File, LeakError> {
    File::open(path).map_err(|e| {
        LeakError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn load_directory(
    paths: &DirectoryPaths,
    strict: bool,
) -> Result<(Directory, Vec<SkippedRow>), LeakError> {
    let name = |p: &Path| p.display().to_string();
    let vpn = read_vpn_directory(open(&paths.vpn)?, &name(&paths.vpn), strict)?;
    let asp = read_as_prefixes(open(&paths.as_prefixes)?, &name(&paths.as_prefixes), strict)?;
    let orgs = read_org_map(open(&paths.orgs)?, &name(&paths.orgs), strict)?;
    let cats = read_category_map(open(&paths.categories)?, &name(&paths.categories), strict)?;
    let prefetch = match &paths.prefetch {
        Some(p) => read_prefetch(open(p)?, &name(p), strict)?,
        None => Loaded {
            rows: Vec::new(),
            skipped: Vec::new(),
        },
    };
    let mut skipped = Vec::new();
    skipped.extend(vpn.skipped);
    skipped.extend(asp.skipped);
    skipped.extend(orgs.skipped);
    skipped.extend(cats.skipped);
    skipped.extend(prefetch.skipped);
    let dir = Directory::new(
        vpn.rows.into_iter().collect(),
        asp.rows.into_iter().collect(),
        orgs.rows.into_iter().collect::<HashMap<_, _>>(),
        cats.rows.into_iter().collect::<HashMap<_, _>>(),
        prefetch
            .rows
            .into_iter()
            .map(|p| (p, ()))
            .collect::<PrefixMap<()>>(),
    );
    Ok((dir, skipped))
}

pub fn read_session_file(path: &Path, strict: bool) -> Result<Loaded<Session>, LeakError> {
    read_sessions(open(path)?, &path.display().to_string(), strict)
}

pub fn write_classified(sessions: &[ClassifiedSession]) -> String {
    let mut out = CLASSIFIED_HEADER.join(",");
    out.push('\n');
    for s in sessions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.timestamp,
            s.session_id,
            s.provider.as_deref().unwrap_or(""),
            s.category,
            s.preferred,
            s.dual_stack,
            s.unknown_as
        );
    }
    out
}

pub fn read_classified<R: Read>(
    reader: R,
    source: &str,
    strict: bool,
) -> Result<Loaded<ClassifiedSession>, LeakError> {
    read_rows(reader, source, &CLASSIFIED_HEADER, strict, |rec| {
        let timestamp = rec[0]
            .parse()
            .map_err(|_| format!("invalid timestamp `{}`", &rec[0]))?;
        let category: SessionCategory = rec[3].parse()?;
        let provider = (!rec[2].is_empty()).then(|| rec[2].to_string());
        if category.is_vpn() != provider.is_some() {
            return Err("provider must be set exactly for VPN categories".into());
        }
        let preferred: Family = rec[4]
            .parse()
            .map_err(|_| format!("invalid family `{}`", &rec[4]))?;
        let flag = |t: &str| t.parse::<bool>().map_err(|_| format!("invalid flag `{t}`"));
        Ok(ClassifiedSession {
            timestamp,
            session_id: rec[1].to_string(),
            provider,
            category,
            preferred,
            dual_stack: flag(&rec[5])?,
            unknown_as: flag(&rec[6])?,
        })
    })
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn reports_to_csv(reports: &[ProviderReport]) -> String {
    let mut out = REPORT_HEADER.join(",");
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.provider),
            r.days,
            r.mean_sessions_per_day,
            r.v4_only,
            r.dual_safe,
            r.dual_safe_prefetch,
            r.dual_safe_partial,
            r.leak,
            r.total_vpn,
            r.leak_rate_all,
            r.leak_rate_dual,
            opt_num(r.depref_rate)
        );
    }
    out
}

pub fn reports_to_json(reports: &[ProviderReport]) -> Result<String, LeakError> {
    let mut s = serde_json::to_string_pretty(reports)?;
    s.push('\n');
    Ok(s)
}

/// Mean VPN sessions per day per provider.
pub fn plot_sessions_per_day(reports: &[ProviderReport]) -> String {
    let mut out = String::from("provider,mean_sessions_per_day\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{}",
            csv_field(&r.provider),
            r.mean_sessions_per_day
        );
    }
    out
}

/// Share of each VPN session category per provider.
pub fn plot_category_distribution(reports: &[ProviderReport]) -> String {
    let mut out = String::from("provider");
    for c in SessionCategory::VPN {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for r in reports {
        out.push_str(&csv_field(&r.provider));
        for c in SessionCategory::VPN {
            let share = if r.total_vpn == 0 {
                0.0
            } else {
                r.count(c) as f64 / r.total_vpn as f64
            };
            let _ = write!(out, ",{share}");
        }
        out.push('\n');
    }
    out
}

/// Leak rate over all sessions and over dual-stack sessions.
pub fn plot_leak_rates(reports: &[ProviderReport]) -> String {
    let mut out = String::from("provider,leak_rate_all,leak_rate_dual\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{}",
            csv_field(&r.provider),
            r.leak_rate_all,
            r.leak_rate_dual
        );
    }
    out
}

/// De-preference fraction per qualifying provider.
pub fn plot_depreference(summary: &DeprefSummary) -> String {
    let mut out =
        String::from("provider,dual_safe_sessions,dual_safe_per_day,prefers_v4,fraction\n");
    for e in &summary.qualifying {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&e.provider),
            e.dual_safe_sessions,
            e.dual_safe_per_day,
            e.prefers_v4,
            e.fraction
        );
    }
    out
}

/// File name and contents of every report artifact for a [`ReportSet`].
pub fn render_report_files(
    set: &ReportSet,
    include_undersampled: bool,
) -> Result<Vec<(String, String)>, LeakError> {
    let mut files = vec![
        ("report.csv".to_string(), reports_to_csv(&set.reports)),
        ("report.json".to_string(), reports_to_json(&set.reports)?),
        (
            "plot_sessions_per_day.csv".to_string(),
            plot_sessions_per_day(&set.reports),
        ),
        (
            "plot_category_distribution.csv".to_string(),
            plot_category_distribution(&set.reports),
        ),
        (
            "plot_leak_rates.csv".to_string(),
            plot_leak_rates(&set.reports),
        ),
        (
            "plot_depreference.csv".to_string(),
            plot_depreference(&set.depreference),
        ),
    ];
    if include_undersampled {
        files.push((
            "report_undersampled.csv".to_string(),
            reports_to_csv(&set.undersampled),
        ));
        files.push((
            "report_undersampled.json".to_string(),
            reports_to_json(&set.undersampled)?,
        ));
    }
    let mut summary = serde_json::to_string_pretty(set)?;
    summary.push('\n');
    files.push(("summary.json".to_string(), summary));
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sessions_parse_with_absent_fields() {
        let text = "timestamp,session_id,v4,v6,preferred\n\
                    10,a,198.51.100.1,,v4\n\
                    20,b,,2001:db8::1,v6\n\
                    30,c,198.51.100.1,2001:db8::1,v6\n";
        let got = read_sessions(text.as_bytes(), "log", true).unwrap();
        assert_eq!(got.rows.len(), 3);
        assert_eq!(got.rows[0].v6, None);
        assert_eq!(got.rows[1].v4, None);
        assert_eq!(got.rows[2].preferred, Family::V6);
        assert_eq!(write_sessions(&got.rows), text);
    }

    #[test]
    fn malformed_rows_skip_or_abort() {
        let text = "timestamp,session_id,v4,v6,preferred\n\
                    10,a,198.51.100.1,,v4\n\
                    x,b,198.51.100.1,,v4\n\
                    30,c,2001:db8::1,,v4\n\
                    40,d,198.51.100.1,,v6\n\
                    50,e,198.51.100.1\n";
        let lenient = read_sessions(text.as_bytes(), "log", false).unwrap();
        assert_eq!(lenient.rows.len(), 1);
        let lines: Vec<u64> = lenient.skipped.iter().map(|s| s.line).collect();
        assert_eq!(lines, [3, 4, 5, 6]);
        match read_sessions(text.as_bytes(), "log", true) {
            Err(LeakError::Row { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_log_is_empty() {
        let got = read_sessions("".as_bytes(), "log", true).unwrap();
        assert!(got.rows.is_empty());
        let got = read_sessions(
            "timestamp,session_id,v4,v6,preferred\n".as_bytes(),
            "log",
            true,
        )
        .unwrap();
        assert!(got.rows.is_empty());
    }

    #[test]
    fn wrong_header_is_an_error() {
        assert!(matches!(
            read_sessions("ts,id,v4,v6,preferred\n".as_bytes(), "log", false),
            Err(LeakError::Header { .. })
        ));
    }

    #[test]
    fn directory_files() {
        let vpn = read_vpn_directory(
            "prefix,provider\n198.51.100.0/24,P\n2001:db8::5,P\n".as_bytes(),
            "vpn",
            true,
        )
        .unwrap();
        assert_eq!(vpn.rows[1].0.len(), 128);
        let asp = read_as_prefixes(
            "prefix,asn\n198.51.100.0/24,AS64500\n".as_bytes(),
            "as",
            true,
        )
        .unwrap();
        assert_eq!(asp.rows[0].1, 64500);
        let cats = read_category_map("asn,category\n64500,ISP\n".as_bytes(), "cat", true).unwrap();
        assert_eq!(cats.rows[0].1, AsCategory::Isp);
        let pf = read_prefetch("# chrome\n2001:db8:f00::/48\n\n".as_bytes(), "pf", true).unwrap();
        assert_eq!(pf.rows.len(), 1);
        assert!(read_prefetch("nope\n".as_bytes(), "pf", true).is_err());
    }

    #[test]
    fn classified_round_trip() {
        let rows = vec![
            ClassifiedSession {
                timestamp: 5,
                session_id: "a".into(),
                provider: Some("P".into()),
                category: SessionCategory::Leak,
                preferred: Family::V6,
                dual_stack: true,
                unknown_as: false,
            },
            ClassifiedSession {
                timestamp: 6,
                session_id: "b".into(),
                provider: None,
                category: SessionCategory::NonVpn,
                preferred: Family::V4,
                dual_stack: false,
                unknown_as: false,
            },
        ];
        let text = write_classified(&rows);
        let back = read_classified(text.as_bytes(), "c", true).unwrap();
        assert_eq!(back.rows, rows);
    }

    #[test]
    fn report_csv_and_json_agree() {
        let r = ProviderReport {
            provider: "P, Inc".into(),
            days: 3,
            mean_sessions_per_day: 1000.0 / 3.0,
            v4_only: 900,
            dual_safe: 35,
            dual_safe_prefetch: 0,
            dual_safe_partial: 0,
            leak: 65,
            total_vpn: 1000,
            leak_rate_all: 0.065,
            leak_rate_dual: 0.65,
            depref_rate: None,
        };
        let csv = reports_to_csv(std::slice::from_ref(&r));
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(
            line,
            "\"P, Inc\",3,333.3333333333333,900,35,0,0,65,1000,0.065,0.65,"
        );
        let json: serde_json::Value =
            serde_json::from_str(&reports_to_json(&[r]).unwrap()).unwrap();
        assert_eq!(
            json[0]["mean_sessions_per_day"].to_string(),
            "333.3333333333333"
        );
        assert_eq!(json[0]["leak_rate_all"].to_string(), "0.065");
        assert!(json[0]["depref_rate"].is_null());
    }
}
