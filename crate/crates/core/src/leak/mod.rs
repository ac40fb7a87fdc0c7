//! VPN IPv6 leak classification over paired-address session logs.
//!
//! The pipeline is: read sessions ([`io`]), [`dedupe`] repeats within a
//! UTC hour, [`classify_session`] each one against a [`Directory`], then
//! fold the results into per-provider reports ([`aggregate`]) and
//! de-preference rates ([`depreference_rates`]).

mod aggregate;
mod classify;
mod directory;
pub mod io;
mod session;

use thiserror::Error;

pub use aggregate::{
    aggregate, depreference_rates, AggregateOptions, Aggregator, DeprefEntry, DeprefSummary,
    NonVpnSummary, ProviderReport, ReportSet,
};
pub use classify::{
    classify_all, classify_session, classify_session_detailed, ClassifiedSession, SessionCategory,
};
pub use directory::{AsCategory, Asn, Directory};
pub use session::{dedupe, Session};

/// Result of running the whole pipeline over one session log.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub rows: usize,
    pub duplicates_removed: usize,
    pub classified: Vec<ClassifiedSession>,
    pub report: ReportSet,
}

/// Dedupes, classifies and aggregates `sessions`.
pub fn analyze(sessions: &[Session], dir: &Directory, opts: &AggregateOptions) -> Analysis {
    let kept = dedupe(sessions);
    let classified = classify_all(&kept, dir);
    let report = classified.iter().collect::<Aggregator>().finish(opts);
    Analysis {
        rows: sessions.len(),
        duplicates_removed: sessions.len() - kept.len(),
        classified,
        report,
    }
}

#[derive(Debug, Error)]
pub enum LeakError {
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("{source_name}: unexpected header `{found}`, expected `{expected}`")]
    Header {
        source_name: String,
        expected: String,
        found: String,
    },
    #[error("{source_name} line {line}: {message}")]
    Row {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
