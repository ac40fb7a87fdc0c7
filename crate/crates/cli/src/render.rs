//! Plain-text renderings. Output is byte-stable for a given input.

use std::fmt::Write as _;

use dualstack_core::race::{EventKind, MonteCarloSummary, RaceOutcome};
use dualstack_core::scenario::{RankedPair, ScenarioResult};

fn table(rows: &[Vec<String>], right: &[bool]) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            if right[c] {
                let _ = write!(line, "{cell:>w$}", w = widths[c]);
            } else {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn ranked(pairs: &[RankedPair]) -> String {
    let mut rows = vec![[
        "rank",
        "source",
        "destination",
        "class",
        "labels",
        "prec",
        "cpl",
        "usable",
        "next",
    ]
    .map(String::from)
    .to_vec()];
    for r in pairs {
        let p = &r.pair;
        rows.push(vec![
            r.rank.to_string(),
            p.source.addr.to_string(),
            p.dest.to_string(),
            format!("{}>{}", r.source_class, r.dest_class),
            format!("{}/{}", p.source_label, p.dest_label),
            p.dest_precedence.to_string(),
            p.cpl.to_string(),
            if p.usable { "yes" } else { "no" }.to_string(),
            r.decided_by.map(|d| d.to_string()).unwrap_or_default(),
        ]);
    }
    let mut out = table(
        &rows,
        &[true, false, false, false, false, true, true, false, false],
    );
    for r in pairs.iter().filter(|r| !r.pair.usable) {
        let _ = writeln!(
            out,
            "unusable: {} ({} scope) cannot be reached from {} ({} scope)",
            r.pair.dest,
            r.pair.dest.scope(),
            r.pair.source.addr,
            r.pair.source.addr.scope()
        );
    }
    out
}

fn ms(us: u64) -> String {
    format!("{}.{:03} ms", us / 1000, us % 1000)
}

pub fn race(outcome: &RaceOutcome) -> String {
    let mut rows = Vec::new();
    for e in &outcome.timeline {
        let what = match e.event {
            EventKind::AttemptStarted => "start",
            EventKind::Connected => "connected",
            EventKind::Failed => "failed",
        };
        rows.push(vec![
            ms(e.at_us),
            format!("#{}", e.candidate + 1),
            what.to_string(),
            e.dest.to_string(),
        ]);
    }
    let mut out = String::from("timeline:\n");
    for line in table(&rows, &[true, false, false, false]).lines() {
        let _ = writeln!(out, "  {line}");
    }
    match (&outcome.winner, outcome.connected_at_us) {
        (Some(w), Some(at)) => {
            let _ = writeln!(
                out,
                "winner: {} -> {} ({}) at {}",
                w.source.addr,
                w.dest,
                w.family(),
                ms(at)
            );
        }
        _ => out.push_str("winner: none (all attempts failed)\n"),
    }
    out
}

pub fn monte_carlo(mc: &MonteCarloSummary) -> String {
    format!(
        "trials: {}\nv4_wins: {}\nv6_wins: {}\nfailures: {}\n",
        mc.trials, mc.v4_wins, mc.v6_wins, mc.failures
    )
}

pub fn scenario(r: &ScenarioResult) -> String {
    let mut out = format!("scenario: {}\npolicy: {}\n", r.name, r.policy);
    out.push_str(&ranked(&r.ranked));
    for d in &r.dropped {
        let _ = writeln!(out, "dropped: {d}");
    }
    if let Some(outcome) = &r.race {
        out.push_str(&race(outcome));
    }
    if let Some(mc) = &r.monte_carlo {
        out.push_str(&monte_carlo(mc));
    } else {
        let _ = writeln!(out, "v4_wins: {}\nv6_wins: {}", r.v4_wins, r.v6_wins);
    }
    let _ = writeln!(out, "verdict: {}", r.verdict);
    out
}
