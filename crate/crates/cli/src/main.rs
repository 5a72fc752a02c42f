use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mtraj_core::dataio::{load_dataset, read_report, write_report, WindowSpec};
use mtraj_core::fixtures::{self, FixtureSpec};
use mtraj_core::harness::{builtin_sut, run_suite, Sut};
use mtraj_core::metrics::LabelCriterion;
use mtraj_core::report::{render_rate_table, sweep_to_csv, threshold_sweep, DEFAULT_SWEEP_THRESHOLDS};
use mtraj_core::sutproto::conformance::run_conformance;
use mtraj_core::sutproto::{serve, Connection, RemoteSut};
use mtraj_core::transforms::parse_relation_list;
use mtraj_core::types::{ComparisonFrame, RunConfig, Setting, Tail};

const EXIT_ERROR: u8 = 1;
const EXIT_FINDINGS: u8 = 3;

#[derive(Parser)]
#[command(name = "mtraj", version, about = "Metamorphic testing of stochastic trajectory predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the metamorphic test suite against a predictor.
    Run(RunArgs),
    /// Score WVC decisions against a label-based criterion over p-value thresholds.
    Analyze(AnalyzeArgs),
    /// Replay the golden protocol transcripts against a predictor peer.
    Conformance(ConformanceArgs),
    /// Write a synthetic dataset (scenes and tracks).
    GenFixtures(GenFixturesArgs),
}

#[derive(Args)]
struct RunArgs {
    /// builtin:<name>[?k=v&...], cmd:<command line> or tcp://host:port
    #[arg(long)]
    sut: String,
    /// Dataset directory with scenes/ and tracks.csv.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated relations: mirror-h, mirror-v, rescale:<factor>.
    #[arg(long, default_value = "mirror-h,mirror-v,rescale:0.2,rescale:0.3")]
    mr: String,
    #[arg(long, default_value = "short")]
    setting: Setting,
    /// Source predictions per test case (default 8).
    #[arg(long)]
    n: Option<usize>,
    /// Trajectories per prediction (default 20).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p_threshold: Option<f64>,
    #[arg(long, env = "MTRAJ_SEED", default_value_t = 0)]
    seed: u64,
    /// Window stride in track points (default: observed + horizon length).
    #[arg(long)]
    stride: Option<usize>,
    /// Report directory (summary.json + comparisons.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare in the follow-up frame by transforming the source outputs forward.
    #[arg(long)]
    compat_alg1_frame: bool,
    /// Use a two-sided z-test instead of the upper tail.
    #[arg(long)]
    two_sided: bool,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Seconds to wait for each reply from an external predictor.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Report directory written by `run --out`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "mean-ade")]
    label: LabelCriterion,
    /// Comma-separated WVC p-value thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Write the table to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConformanceArgs {
    /// cmd:<command line>, tcp://host:port, or builtin:<name> served in-process.
    #[arg(long)]
    sut: String,
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

#[derive(Args)]
struct GenFixturesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cases: usize,
    #[arg(long, env = "MTRAJ_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "short")]
    setting: Setting,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Conformance(args) => cmd_conformance(args),
        Command::GenFixtures(args) => cmd_gen_fixtures(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn open_sut(uri: &str, timeout: Duration) -> Result<Box<dyn Sut>> {
    if uri.starts_with("builtin:") {
        Ok(builtin_sut(uri)?)
    } else if uri.starts_with("cmd:") || uri.starts_with("tcp://") {
        Ok(Box::new(RemoteSut::connect(uri, timeout).with_context(|| format!("connecting to {uri}"))?))
    } else {
        bail!("unknown SUT '{uri}' (expected builtin:, cmd: or tcp://)")
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let mrs = parse_relation_list(&args.mr)?;
    let mut cfg = RunConfig::for_setting(args.setting);
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(p) = args.p_threshold {
        cfg.p_threshold = p;
    }
    cfg.seed = args.seed;
    if args.two_sided {
        cfg.tail = Tail::TwoSided;
    }
    if args.compat_alg1_frame {
        cfg.frame = ComparisonFrame::FollowUp;
    }
    cfg.validate()?;
    let jobs = match args.jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(j) => j,
        None => thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let stride = args.stride.unwrap_or(cfg.observed_len + cfg.horizon);
    if stride == 0 {
        bail!("--stride must be at least 1");
    }

    let spec = WindowSpec {
        observed_len: cfg.observed_len,
        horizon: cfg.horizon,
        stride,
        frame_interval: args.setting.frame_interval(),
    };
    let cases = load_dataset(&args.data, &spec).with_context(|| format!("loading {}", args.data.display()))?;
    if cases.is_empty() {
        bail!("{} yields no test cases for the {:?} setting", args.data.display(), args.setting);
    }

    let sut = open_sut(&args.sut, Duration::from_secs(args.timeout))?;
    let report = run_suite(sut.as_ref(), &cases, &mrs, &cfg, jobs)?;
    if let Some(out) = &args.out {
        write_report(&report, out)?;
    }

    print!("{}", render_rate_table(&report.summary));
    let total: usize = report.summary.iter().map(|s| s.comparisons).sum();
    let flagged: usize = report.summary.iter().map(|s| s.violations).sum();
    println!("{} test cases, {flagged} of {total} comparisons flagged", cases.len());
    Ok(if report.any_violation() { EXIT_FINDINGS } else { 0 })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<u8> {
    let report = read_report(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let thresholds = args.thresholds.unwrap_or_else(|| DEFAULT_SWEEP_THRESHOLDS.to_vec());
    if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        bail!("--thresholds must be values in [0, 1]");
    }
    let rows = threshold_sweep(&report, args.label, &thresholds)?;
    let table = sweep_to_csv(&rows);
    match &args.out {
        Some(path) => fs::write(path, table).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{table}"),
    }
    Ok(0)
}

fn cmd_conformance(args: ConformanceArgs) -> Result<u8> {
    let timeout = Duration::from_secs(args.timeout);
    let outcomes = if args.sut.starts_with("builtin:") {
        let sut: std::sync::Arc<dyn Sut> = builtin_sut(&args.sut)?.into();
        run_conformance(|| {
            let (to_peer_r, to_peer_w) = io::pipe()?;
            let (from_peer_r, from_peer_w) = io::pipe()?;
            let sut = sut.clone();
            thread::spawn(move || serve(io::BufReader::new(to_peer_r), from_peer_w, sut.as_ref()));
            Ok(Connection::from_streams(from_peer_r, to_peer_w, timeout))
        })
    } else if args.sut.starts_with("cmd:") || args.sut.starts_with("tcp://") {
        drop(Connection::open(&args.sut, timeout).with_context(|| format!("connecting to {}", args.sut))?);
        run_conformance(|| Connection::open(&args.sut, timeout))
    } else {
        bail!("unknown SUT '{}' (expected builtin:, cmd: or tcp://)", args.sut)
    };
    let mut failed = 0;
    for o in &outcomes {
        match &o.failure {
            None => println!("PASS {}", o.name),
            Some(why) => {
                failed += 1;
                println!("FAIL {}: {why}", o.name);
            }
        }
    }
    println!("{} of {} transcripts passed", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { 0 } else { EXIT_FINDINGS })
}

fn cmd_gen_fixtures(args: GenFixturesArgs) -> Result<u8> {
    let fx = fixtures::generate(&FixtureSpec { cases: args.cases, seed: args.seed, setting: args.setting })?;
    fx.write(&args.out)?;
    println!("wrote {} test cases across {} scenes to {}", args.cases, fx.scenes.len(), args.out.display());
    Ok(0)
}
