use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dualstack_core::fixture::{generate, FixturePlan};
use dualstack_core::leak::io::{
    load_directory, read_classified, read_session_file, render_report_files, write_classified,
    DirectoryPaths, SkippedRow,
};
use dualstack_core::leak::{analyze, AggregateOptions, Aggregator, ReportSet};
use dualstack_core::policy::{PolicyTable, SourceCandidate};
use dualstack_core::race::{run_monte_carlo, run_race, LinkBehavior, NetworkModel, RaceConfig};
use dualstack_core::scenario::{evaluate_with, rank_with_trace, PolicyChoice, Scenario, Verdict};
use dualstack_core::{parse_ip, IpEndpoint};

mod render;
mod selftest;

const EXIT_INPUT: u8 = 1;
const EXIT_INVARIANT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "dualstack",
    version,
    about = "Dual-stack address selection, connection racing and VPN IPv6 leak analysis"
)]
struct Cli {
    /// Policy table: default, tla or file:PATH.
    #[arg(long, global = true, value_parser = PolicyChoice::parse)]
    policy: Option<PolicyChoice>,
    /// Seed for stochastic runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Fail on the first malformed input row instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sort destination addresses for a set of source addresses.
    Rank(Endpoints),
    /// Sort, then race the candidates over a simulated network.
    Race(RaceArgs),
    /// Evaluate a scenario file.
    Scenario(ScenarioArgs),
    /// Classify a session log and write per-provider reports.
    Classify(ClassifyArgs),
    /// Re-aggregate classified session shards.
    Report(ReportArgs),
    /// Run the built-in consistency checks.
    Selftest,
    /// Write a synthetic session log with a ground-truth manifest.
    GenFixture(GenFixtureArgs),
}

#[derive(Args)]
struct Endpoints {
    /// Source addresses (repeat or comma-separate).
    #[arg(long = "src", required = true, value_delimiter = ',')]
    sources: Vec<String>,
    /// Destination addresses in resolver order.
    #[arg(long = "dst", required = true, value_delimiter = ',')]
    destinations: Vec<String>,
    /// Interface the sources live on.
    #[arg(long, default_value = "tun0")]
    iface: String,
}

#[derive(Args)]
struct RaceArgs {
    #[command(flatten)]
    endpoints: Endpoints,
    /// Per-destination link, e.g. `2001:db8::1=exp 120` or `192.0.2.1=const 30 fail`.
    #[arg(long = "link")]
    links: Vec<String>,
    /// Link used for destinations without a --link entry.
    #[arg(long, default_value = "const 50")]
    default_link: String,
    /// Connection attempt delay in milliseconds.
    #[arg(long, default_value_t = 250.0)]
    delay: f64,
    /// Number of Monte Carlo trials; 1 runs a single race with a timeline.
    #[arg(long, default_value_t = 1)]
    trials: u64,
}

#[derive(Args)]
struct ScenarioArgs {
    file: PathBuf,
    /// Replace the scenario's sources.
    #[arg(long = "src", value_delimiter = ',')]
    sources: Vec<String>,
    /// Override the scenario's trial count.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for report files; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write reports for providers under the sampling threshold.
    #[arg(long)]
    include_undersampled: bool,
    #[arg(long, default_value_t = 100.0)]
    min_sessions_per_day: f64,
    #[arg(long, default_value_t = 20.0)]
    min_dual_safe_per_day: f64,
}

impl OutputArgs {
    fn options(&self) -> AggregateOptions {
        AggregateOptions {
            min_mean_sessions_per_day: self.min_sessions_per_day,
            min_dual_safe_per_day: self.min_dual_safe_per_day,
        }
    }
}

#[derive(Args)]
struct ClassifyArgs {
    /// Session log CSV.
    #[arg(long)]
    sessions: PathBuf,
    /// Directory holding vpn.csv, as_prefixes.csv, as_orgs.csv,
    /// as_categories.csv and optionally prefetch.txt.
    #[arg(long)]
    directory: PathBuf,
    /// Ignore prefetch.txt.
    #[arg(long)]
    no_prefetch: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Classified session CSV files written by `classify`.
    #[arg(required = true)]
    shards: Vec<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    days: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Rank(args) => rank(cli, args),
        Command::Race(args) => race(cli, args),
        Command::Scenario(args) => scenario(cli, args),
        Command::Classify(args) => classify(cli, args),
        Command::Report(args) => report(cli, args),
        Command::Selftest => selftest(cli),
        Command::GenFixture(args) => gen_fixture(cli, args),
    }
}

fn load_policy(choice: Option<&PolicyChoice>) -> Result<PolicyTable> {
    choice
        .unwrap_or(&PolicyChoice::Default)
        .load()
        .map_err(|m| anyhow!("policy: {m}"))
}

fn addrs(list: &[String], what: &str) -> Result<Vec<IpEndpoint>> {
    list.iter()
        .map(|s| parse_ip(s.trim()).with_context(|| format!("{what} `{s}`")))
        .collect()
}

fn sources(list: &[String], iface: &str) -> Result<Vec<SourceCandidate>> {
    addrs(list, "source")?
        .into_iter()
        .map(|a| SourceCandidate::new(a, iface).map_err(Into::into))
        .collect()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct RankOutput<'a> {
    policy: String,
    ranked: &'a [dualstack_core::scenario::RankedPair],
    dropped: Vec<String>,
}

fn rank(cli: &Cli, args: &Endpoints) -> Result<u8> {
    let table = load_policy(cli.policy.as_ref())?;
    let srcs = sources(&args.sources, &args.iface)?;
    let dsts = addrs(&args.destinations, "destination")?;
    let (ranked, dropped) = rank_with_trace(&dsts, &srcs, &table);
    let dropped: Vec<String> = dropped
        .iter()
        .map(|d| format!("{}: {}", d.dest, d.reason))
        .collect();
    let policy = cli
        .policy
        .clone()
        .unwrap_or(PolicyChoice::Default)
        .to_string();
    if cli.json {
        print_json(&RankOutput {
            policy,
            ranked: &ranked,
            dropped,
        })?;
    } else {
        print!("policy: {policy}\n{}", render::ranked(&ranked));
        for d in dropped {
            println!("dropped: {d}");
        }
    }
    Ok(0)
}

fn race(cli: &Cli, args: &RaceArgs) -> Result<u8> {
    let table = load_policy(cli.policy.as_ref())?;
    let e = &args.endpoints;
    let srcs = sources(&e.sources, &e.iface)?;
    let dsts = addrs(&e.destinations, "destination")?;
    let default_link = parse_link(&args.default_link).context("--default-link")?;
    let mut net = NetworkModel::new().with_seed(cli.seed.unwrap_or(0));
    for d in &dsts {
        net = net.with(*d, default_link);
    }
    for spec in &args.links {
        let (addr, link) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--link `{spec}`: expected ADDR=LATENCY"))?;
        let addr = parse_ip(addr.trim()).with_context(|| format!("--link `{spec}`"))?;
        net = net.with(
            addr,
            parse_link(link).with_context(|| format!("--link `{spec}`"))?,
        );
    }
    let cfg = RaceConfig::with_delay_ms(args.delay);
    let (ranked, _) = rank_with_trace(&dsts, &srcs, &table);
    let pairs: Vec<_> = ranked.iter().map(|r| r.pair.clone()).collect();
    if pairs.is_empty() {
        bail!("no usable (source, destination) pair");
    }
    if args.trials > 1 {
        let mc = run_monte_carlo(&pairs, &net, &cfg, args.trials, cli.seed.unwrap_or(0))?;
        let verdict = Verdict::from_fractions(mc.v4_wins, mc.v6_wins);
        if cli.json {
            print_json(
                &serde_json::json!({ "ranked": ranked, "monte_carlo": mc, "verdict": verdict }),
            )?;
        } else {
            println!(
                "{}{}verdict: {verdict}",
                render::ranked(&ranked),
                render::monte_carlo(&mc)
            );
        }
    } else {
        let outcome = run_race(&pairs, &net, &cfg)?;
        if cli.json {
            print_json(&serde_json::json!({ "ranked": ranked, "race": outcome }))?;
        } else {
            print!("{}{}", render::ranked(&ranked), render::race(&outcome));
        }
    }
    Ok(0)
}

fn parse_link(text: &str) -> Result<LinkBehavior> {
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    let fails = tokens.contains(&"fail");
    tokens.retain(|t| *t != "fail");
    let latency = tokens.join(" ").parse()?;
    Ok(LinkBehavior { latency, fails })
}

fn scenario(cli: &Cli, args: &ScenarioArgs) -> Result<u8> {
    let mut s = Scenario::load(&args.file)?;
    if let Some(p) = &cli.policy {
        s = s.with_policy(p.clone());
    }
    if !args.sources.is_empty() {
        s = s.with_source_addrs(&addrs(&args.sources, "source")?);
    }
    if let Some(t) = args.trials {
        s.trials = t;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
        s.network.seed = seed;
    }
    s.validate()?;
    let table = load_policy(Some(&s.policy))?;
    let result = evaluate_with(&s, &table)?;
    if cli.json {
        print_json(&result)?;
    } else {
        print!("{}", render::scenario(&result));
    }
    Ok(0)
}

fn report_skipped(skipped: &[SkippedRow]) {
    for s in skipped {
        eprintln!("skipped {} line {}: {}", s.source, s.line, s.message);
    }
}

fn emit_reports(
    cli: &Cli,
    set: &ReportSet,
    out: &OutputArgs,
    extra: Option<(&str, String)>,
) -> Result<()> {
    let files = render_report_files(set, out.include_undersampled)?;
    match &out.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, content) in files
                .iter()
                .map(|(n, c)| (n.as_str(), c))
                .chain(extra.as_ref().map(|(n, c)| (*n, c)))
            {
                let path = dir.join(name);
                fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        None if cli.json => print_json(set)?,
        None => {
            let (_, csv) = files
                .iter()
                .find(|(n, _)| n == "report.csv")
                .expect("always rendered");
            print!("{csv}");
            if out.include_undersampled {
                if let Some((_, u)) = files.iter().find(|(n, _)| n == "report_undersampled.csv") {
                    println!("# undersampled");
                    print!("{u}");
                }
            }
        }
    }
    Ok(())
}

fn classify(cli: &Cli, args: &ClassifyArgs) -> Result<u8> {
    let mut paths = DirectoryPaths::in_dir(&args.directory);
    if args.no_prefetch || !paths.prefetch.as_deref().is_some_and(Path::exists) {
        paths.prefetch = None;
    }
    let (dir, mut skipped) = load_directory(&paths, cli.strict)?;
    let loaded = read_session_file(&args.sessions, cli.strict)?;
    skipped.extend(loaded.skipped);
    report_skipped(&skipped);
    let analysis = analyze(&loaded.rows, &dir, &args.output.options());
    eprintln!(
        "{} rows, {} duplicates removed, {} skipped, {} classified",
        analysis.rows,
        analysis.duplicates_removed,
        skipped.len(),
        analysis.classified.len()
    );
    emit_reports(
        cli,
        &analysis.report,
        &args.output,
        Some(("classified.csv", write_classified(&analysis.classified))),
    )?;
    Ok(0)
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<u8> {
    let mut agg = Aggregator::new();
    for path in &args.shards {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let loaded = read_classified(file, &path.display().to_string(), cli.strict)?;
        report_skipped(&loaded.skipped);
        agg = agg.merge(loaded.rows.iter().collect());
    }
    emit_reports(cli, &agg.finish(&args.output.options()), &args.output, None)?;
    Ok(0)
}

fn selftest(cli: &Cli) -> Result<u8> {
    let choice = match std::env::var(selftest::POLICY_ENV) {
        Ok(v) => {
            Some(PolicyChoice::parse(&v).map_err(|m| anyhow!("{}: {m}", selftest::POLICY_ENV))?)
        }
        Err(_) => cli.policy.clone(),
    };
    let table = load_policy(choice.as_ref())?;
    let checks = selftest::run(&table, cli.seed.unwrap_or(42));
    let ok = checks.iter().all(|c| c.passed);
    if cli.json {
        print_json(&serde_json::json!({ "passed": ok, "checks": checks }))?;
    } else {
        for c in &checks {
            println!(
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
    }
    Ok(if ok { 0 } else { EXIT_INVARIANT })
}

fn gen_fixture(cli: &Cli, args: &GenFixtureArgs) -> Result<u8> {
    let mut plan = FixturePlan::default();
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    if let Some(days) = args.days {
        plan.days = days;
    }
    let fixture = generate(&plan);
    fixture
        .write_to(&args.out)
        .with_context(|| format!("writing fixture to {}", args.out.display()))?;
    eprintln!(
        "wrote {} rows ({} unique sessions) to {}",
        fixture.manifest.rows,
        fixture.manifest.unique_sessions,
        args.out.display()
    );
    Ok(0)
}
