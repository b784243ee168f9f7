use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use vlft_core::sweep::{to_csv_string, CurveSpec, Overrides, PRESETS};
use vlft_core::{
    converse_max_log_m, emit_csv, load_config, run_sweep, BlockLengthPolicy, BoundKind,
    ChannelModel, Error, IncrementPolicy, MultiplierConvention, SweepConfig, SweepRow, XiMethod,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vlft-lab",
    version,
    about = "Latency bounds and simulations for VLFT codes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one bound at one message size.
    Bound(BoundArgs),
    /// Run a bound sweep from a config file or preset.
    Sweep(SweepArgs),
    /// Run a sweep with Monte Carlo estimates attached.
    Simulate(SweepArgs),
    /// Largest log2 M allowed by the converse at a given expected latency.
    Converse(ConverseArgs),
    /// List builtin presets.
    Presets,
}

#[derive(Args)]
struct CommonArgs {
    /// BSC crossover probability (overrides the config channel).
    #[arg(long)]
    bsc: Option<f64>,
    /// bsc_rcu, dt or oracle.
    #[arg(long, value_parser = parse_method)]
    xi_method: Option<XiMethod>,
    /// M or M_minus_one.
    #[arg(long, value_parser = parse_convention)]
    m_convention: Option<MultiplierConvention>,
    /// Density lattice step for the DT method.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Config file path or preset name.
    #[arg(long)]
    config: String,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Message size in bits.
    #[arg(long)]
    k: u32,
    /// infinite, truncated, repeated, periodic, combined or arq.
    #[arg(long, value_parser = parse_kind)]
    kind: BoundKind,
    /// Fixed block length N.
    #[arg(long, conflicts_with_all = ["delta_frac", "ell_plus_log"])]
    n: Option<usize>,
    /// Block length from a rate backoff delta = frac * C.
    #[arg(long, conflicts_with = "ell_plus_log")]
    delta_frac: Option<f64>,
    /// Block length k/C + a log2(k/C) + b, given as "a,b".
    #[arg(long, value_parser = parse_pair)]
    ell_plus_log: Option<(f64, f64)>,
    /// Increment: an integer, "log_log" or "linear_log:c".
    #[arg(long, value_parser = parse_increment)]
    increment: Option<IncrementPolicy>,
    /// First decoding attempt time.
    #[arg(long)]
    n1: Option<usize>,
    /// Number of decoding attempts per block.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct ConverseArgs {
    #[arg(long, default_value_t = 0.0789)]
    bsc: f64,
    /// Expected latency in symbols.
    #[arg(long)]
    ell: f64,
}

fn parse_method(s: &str) -> Result<XiMethod, String> {
    XiMethod::parse(s).ok_or_else(|| format!("unknown xi method {s:?} (bsc_rcu, dt, oracle)"))
}

fn parse_convention(s: &str) -> Result<MultiplierConvention, String> {
    MultiplierConvention::parse(s).ok_or_else(|| format!("expected M or M_minus_one, got {s:?}"))
}

fn parse_kind(s: &str) -> Result<BoundKind, String> {
    BoundKind::parse(s).ok_or_else(|| format!("unknown bound kind {s:?}"))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"a,b\"")?;
    let a = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    Ok((a, b))
}

fn parse_increment(s: &str) -> Result<IncrementPolicy, String> {
    if s == "log_log" {
        return Ok(IncrementPolicy::LogLog);
    }
    if let Some(c) = s.strip_prefix("linear_log:") {
        return c
            .parse()
            .map(IncrementPolicy::LinearLog)
            .map_err(|_| format!("bad linear_log coefficient {c:?}"));
    }
    s.parse()
        .map(IncrementPolicy::Fixed)
        .map_err(|_| format!("expected an integer, log_log or linear_log:c, got {s:?}"))
}

fn overrides(common: &CommonArgs, trials: Option<usize>, seed: Option<u64>) -> Overrides {
    Overrides {
        bsc: common.bsc,
        xi_method: common.xi_method,
        convention: common.m_convention,
        grid_step: common.grid_step,
        trials,
        seed,
        output: common.out.clone(),
    }
}

fn write_rows(rows: &[SweepRow], out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => emit_csv(rows, path)?,
        None => std::io::stdout()
            .lock()
            .write_all(to_csv_string(rows).as_bytes())
            .context("writing to stdout")?,
    }
    Ok(())
}

fn finish(rows: &[SweepRow], out: Option<&PathBuf>) -> anyhow::Result<ExitCode> {
    write_rows(rows, out)?;
    let infeasible = rows.iter().filter(|r| !r.is_feasible()).count();
    if !rows.is_empty() && infeasible == rows.len() {
        eprintln!("all {} points are infeasible", rows.len());
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    if infeasible > 0 {
        eprintln!("{infeasible} of {} points are infeasible", rows.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_config(args: &SweepArgs, simulate: bool) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(&args.config)?;
    let mut trials = args.trials;
    if simulate && cfg.simulation.is_none() && trials.is_none() {
        trials = Some(10_000);
    }
    if !simulate {
        cfg.simulation = None;
    }
    let o = overrides(
        &args.common,
        if simulate { trials } else { None },
        if simulate { args.seed } else { None },
    );
    cfg.apply(&o)?;
    let rows = run_sweep(&cfg)?;
    finish(&rows, cfg.output.as_ref())
}

fn run_bound(args: &BoundArgs) -> anyhow::Result<ExitCode> {
    let channel = ChannelModel::bsc(args.common.bsc.unwrap_or(0.0789))?;
    let mut curve = CurveSpec::new(args.kind.as_str(), args.kind);
    curve.block_length = match (args.n, args.delta_frac, args.ell_plus_log) {
        (Some(n), _, _) => Some(BlockLengthPolicy::Fixed(n)),
        (_, Some(d), _) => Some(BlockLengthPolicy::LogOverCDelta(d)),
        (_, _, Some((a, b))) => Some(BlockLengthPolicy::EllPlusLog { a, b }),
        _ => None,
    };
    if let Some(inc) = args.increment {
        curve.increment = inc;
    }
    curve.first_attempt = args.n1;
    curve.attempts = args.m;
    let mut cfg = SweepConfig::new(channel, vec![args.k], vec![curve]);
    cfg.apply(&overrides(&args.common, None, None))?;
    let rows = run_sweep(&cfg)?;
    finish(&rows, cfg.output.as_ref())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Bound(a) => run_bound(&a),
        Command::Sweep(a) => run_config(&a, false),
        Command::Simulate(a) => run_config(&a, true),
        Command::Converse(a) => {
            let c = ChannelModel::bsc(a.bsc)?.capacity();
            if a.ell.is_nan() || a.ell < 0.0 {
                return Err(
                    Error::Domain(format!("ell must be non-negative, got {}", a.ell)).into(),
                );
            }
            println!(
                "{}",
                vlft_core::sweep::format_sig12(converse_max_log_m(a.ell, c))
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets => {
            for name in PRESETS {
                let cfg = SweepConfig::preset(name).expect("builtin preset");
                let labels: Vec<&str> = cfg.curves.iter().map(|c| c.label.as_str()).collect();
                println!("{name}\t{}", labels.join("; "));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("VLFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Domain(_) | Error::Csv { .. }) => EXIT_VALIDATION,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> anyhow::Result<ExitCode> {
        let argv = std::iter::once("vlft-lab").chain(args.iter().copied());
        run(Cli::try_parse_from(argv).expect("arguments parse"))
    }

    #[test]
    fn parses_policy_flags() {
        assert_eq!(parse_increment("log_log"), Ok(IncrementPolicy::LogLog));
        assert_eq!(
            parse_increment("linear_log:0.15"),
            Ok(IncrementPolicy::LinearLog(0.15))
        );
        assert_eq!(parse_increment("4"), Ok(IncrementPolicy::Fixed(4)));
        assert!(parse_increment("often").is_err());
        assert_eq!(parse_pair("10, 30"), Ok((10.0, 30.0)));
        assert!(parse_pair("10").is_err());
        assert!(Cli::try_parse_from(["vlft-lab", "bound", "--k", "8", "--kind", "warp"]).is_err());
        assert!(Cli::try_parse_from([
            "vlft-lab",
            "bound",
            "--k",
            "8",
            "--kind",
            "repeated",
            "--n",
            "20",
            "--delta-frac",
            "0.4"
        ])
        .is_err());
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.csv");
        let out = out.to_str().unwrap();
        let ok = run_args(&["bound", "--k", "8", "--kind", "infinite", "--out", out]).unwrap();
        assert_eq!(ok, ExitCode::SUCCESS);
        let infeasible = run_args(&[
            "bound", "--bsc", "0.2", "--k", "16", "--kind", "repeated", "--n", "4", "--out", out,
        ]);
        assert_eq!(infeasible.unwrap(), ExitCode::from(EXIT_INFEASIBLE));
        let bad =
            run_args(&["bound", "--bsc", "1.5", "--k", "8", "--kind", "infinite"]).unwrap_err();
        assert_eq!(error_code(&bad), EXIT_VALIDATION);
        let missing = run_args(&["sweep", "--config", "/no/such/file.json"]).unwrap_err();
        assert_eq!(error_code(&missing), 1);
        let too_big = run_args(&["simulate", "--config", "fig1"]).unwrap_err();
        assert_eq!(error_code(&too_big), EXIT_VALIDATION);
    }
}
