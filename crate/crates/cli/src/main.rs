mod error;
mod input;
mod output;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kernex::sanov::{self, ThresholdRule};
use kernex::simulation::{run_bandwidth_sweep, SimulationConfig, SweepConfig};
use kernex::{
    changepoint, exponent_report, exponent_report_at, BandwidthRule, DiscreteDistribution, Distribution, KernelChoice,
    Regime, StatisticKind, ThresholdPolicy, ThresholdSpec, Window,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{emit, to_json};

/// Kernel two-sample tests, change-point scans, error exponents and exact
/// method-of-types checks.
#[derive(Debug, Parser)]
#[command(name = "kernex", version)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-sample test on two CSV sample files; prints the outcome as JSON
    Test(TestArgs),
    /// Single change-point scan over a CSV sequence; prints the result as JSON
    Changepoint(ChangepointArgs),
    /// Optimal type-II error exponent for two distributions given as JSON
    Exponent(ExponentArgs),
    /// Exact method-of-types checks and the exact type-II error curve as CSV
    Sanov(SanovArgs),
    /// Monte Carlo experiment from a JSON config; writes CSV
    Simulate(SimulateArgs),
    /// Bandwidth sweep from a JSON config; writes CSV
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ThresholdArg {
    Ldb,
    Permutation,
    Combined,
    Unbiased,
}

impl From<ThresholdArg> for ThresholdPolicy {
    fn from(t: ThresholdArg) -> Self {
        match t {
            ThresholdArg::Ldb => ThresholdPolicy::Ldb,
            ThresholdArg::Permutation => ThresholdPolicy::Permutation,
            ThresholdArg::Combined => ThresholdPolicy::Combined,
            ThresholdArg::Unbiased => ThresholdPolicy::UnbiasedLdb,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StatisticArg {
    Biased,
    Unbiased,
}

impl From<StatisticArg> for StatisticKind {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Biased => StatisticKind::Biased,
            StatisticArg::Unbiased => StatisticKind::Unbiased,
        }
    }
}

fn parse_bandwidth(s: &str) -> Result<BandwidthRule, String> {
    s.parse::<BandwidthRule>().map_err(|e| e.to_string())
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("`{v}` is not a split index"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Debug, Args)]
struct KernelOpts {
    /// Kernel family
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Kernel bandwidth w in exp(-|x-y|^2 / w), or `median` for the median heuristic
    #[arg(long, value_parser = parse_bandwidth, default_value = "median")]
    bandwidth: BandwidthRule,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// CSV file with the first sample, one observation per row
    #[arg(long, value_name = "PATH")]
    x: PathBuf,
    /// CSV file with the second sample, one observation per row
    #[arg(long, value_name = "PATH")]
    y: PathBuf,
    /// Treat the first row of each CSV file as a header
    #[arg(long)]
    header: bool,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Seed for the permutation threshold
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    kernel: KernelOpts,
    /// Threshold policy (default: ldb for biased, unbiased for unbiased)
    #[arg(long, value_enum)]
    threshold: Option<ThresholdArg>,
    /// Number of permutations for permutation and combined thresholds
    #[arg(long = "B", value_name = "B", default_value_t = 1000)]
    b: usize,
    /// Test statistic
    #[arg(long, value_enum, default_value = "biased")]
    statistic: StatisticArg,
    /// Write the JSON result here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChangepointArgs {
    /// CSV file with the sequence, one observation per row
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Treat the first row of the CSV file as a header
    #[arg(long)]
    header: bool,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    kernel: KernelOpts,
    /// Split-index window `a,b` (default: ceil(0.2n),floor(0.8n))
    #[arg(long, value_parser = parse_window, value_name = "A,B")]
    window: Option<(usize, usize)>,
    /// Write the JSON result here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExponentArgs {
    /// JSON file describing P
    #[arg(long, value_name = "PATH")]
    p: PathBuf,
    /// JSON file describing Q
    #[arg(long, value_name = "PATH")]
    q: PathBuf,
    /// Limiting sample ratio n/(n+m), strictly between 0 and 1
    #[arg(long, conflicts_with_all = ["n", "m"])]
    c: Option<f64>,
    /// Size of the sample from P (used with --m instead of --c)
    #[arg(long, requires = "m")]
    n: Option<usize>,
    /// Size of the sample from Q (used with --n instead of --c)
    #[arg(long, requires = "n")]
    m: Option<usize>,
    /// Asymptotic regime when --n and --m are given: balanced or degenerate
    #[arg(long, default_value = "balanced", value_parser = ["balanced", "degenerate"])]
    regime: String,
    /// Write the JSON result here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SanovArgs {
    /// pmf of P on the alphabet 0..t-1, comma-separated
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
    p: Vec<f64>,
    /// pmf of Q on the alphabet 0..t-1, comma-separated
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.1")]
    q: Vec<f64>,
    /// Sample sizes n = m for the error curve, comma-separated
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
    sizes: Vec<usize>,
    /// Fixed kernel bandwidth w
    #[arg(long, default_value_t = 1.0)]
    bandwidth: f64,
    /// Significance level of the distribution-free threshold
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Largest n for the per-type probability bound checks
    #[arg(long, default_value_t = 30)]
    verify_n: usize,
    /// Write the CSV curve here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON experiment config
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON sweep config
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TestReport {
    #[serde(flatten)]
    outcome: kernex::TestOutcome,
    bandwidth: f64,
}

fn run_test(args: TestArgs) -> CliResult<()> {
    let KernelArg::Gaussian = args.kernel.kernel;
    let x = input::read_sample(&args.x, args.header)?;
    let y = input::read_sample(&args.y, args.header)?;
    let kind = StatisticKind::from(args.statistic);
    let policy = args.threshold.map(ThresholdPolicy::from).unwrap_or(match kind {
        StatisticKind::Biased => ThresholdPolicy::Ldb,
        StatisticKind::Unbiased => ThresholdPolicy::UnbiasedLdb,
    });
    let spec = ThresholdSpec::new(policy, args.alpha, args.b, args.seed)?;
    let kernel = args.kernel.bandwidth.resolve(&x.concat(&y)?)?;
    let outcome = kernex::decide(&x, &y, &KernelChoice::Single(kernel), &spec, kind)?;
    emit(
        args.out.as_deref(),
        &to_json(&TestReport {
            outcome,
            bandwidth: kernel.bandwidth(),
        }),
    )
}

fn run_changepoint(args: ChangepointArgs) -> CliResult<()> {
    let KernelArg::Gaussian = args.kernel.kernel;
    let z = input::read_sample(&args.input, args.header)?;
    let window = match args.window {
        Some((a, b)) => Window::new(z.n(), a, b)?,
        None => Window::default_for(z.n())?,
    };
    let kernel = args.kernel.bandwidth.resolve(&z)?;
    let result = changepoint::detect(&z, &kernel, window, args.alpha)?;
    emit(args.out.as_deref(), &to_json(&result))
}

fn run_exponent(args: ExponentArgs) -> CliResult<()> {
    let p: Distribution = input::read_json(&args.p)?;
    let q: Distribution = input::read_json(&args.q)?;
    let report = match (args.c, args.n, args.m) {
        (Some(c), _, _) => exponent_report_at(&p, &q, c)?,
        (None, Some(n), Some(m)) => exponent_report(&p, &q, n, m, args.regime.parse::<Regime>()?)?,
        _ => return Err(CliError::Config("give either --c or both --n and --m".into())),
    };
    emit(args.out.as_deref(), &to_json(&report))
}

fn run_sanov(args: SanovArgs) -> CliResult<()> {
    let p = DiscreteDistribution::on_alphabet(args.p.clone())?;
    let q = DiscreteDistribution::on_alphabet(args.q.clone())?;
    if p.len() != q.len() {
        return Err(CliError::Config(format!(
            "P has {} symbols but Q has {}",
            p.len(),
            q.len()
        )));
    }
    let kernel = kernex::KernelSpec::gaussian(args.bandwidth)?;
    if args.sizes.is_empty() || args.sizes.contains(&0) {
        return Err(CliError::Config("--sizes must list positive sample sizes".into()));
    }
    let t = p.len();

    let mut violations = 0;
    let mut checked = 0;
    for n in 1..=args.verify_n {
        let count = sanov::enumerate_types(n, t)?.len() as u128;
        if count != sanov::type_count(n, t) || count as f64 > (n as f64 + 1.0).powi(t as i32) {
            violations += 1;
        }
        for dist in [&p, &q] {
            let report = sanov::verify_type_sandwich(dist, n, 1e-12)?;
            checked += report.checked;
            violations += report.violations;
        }
    }
    let rule = ThresholdRule::Ldb { alpha: args.alpha };
    for &n in &args.sizes {
        let gamma = rule.gamma(n, n, kernel.bound())?;
        let support = p.support().to_vec();
        let region = sanov::region_sandwich(&p, &q, n, n, |r, s| {
            kernex::mmd::mmd2_population_pmf(&support, &r.frequencies(), &s.frequencies(), &kernel)
                .max(0.0)
                .sqrt()
                <= gamma
        })?;
        checked += 1;
        if !region.holds(1e-9) {
            violations += 1;
        }
    }
    eprintln!("method-of-types checks: {checked} checked, {violations} violations");
    if violations > 0 {
        return Err(CliError::Failed(format!("{violations} method-of-types bound violations")));
    }

    let sizes: Vec<(usize, usize)> = args.sizes.iter().map(|&n| (n, n)).collect();
    let rows = sanov::exact_error_curve(&p, &q, &kernel, rule, &sizes)?;
    let mut csv = format!(
        "# experiment=sanov p={} q={} bandwidth={} alpha={}\nn,m,beta,rate,dstar\n",
        join(&args.p),
        join(&args.q),
        args.bandwidth,
        args.alpha
    );
    for r in rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.n, r.m, r.beta, r.rate, r.dstar);
    }
    emit(args.out.as_deref(), &csv)
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    let config: SimulationConfig = input::read_json(&args.config)?;
    config.validate()?;
    let csv = config.run_csv(args.seed)?;
    emit(args.out.as_deref(), &csv)
}

fn run_sweep(args: SweepArgs) -> CliResult<()> {
    let config: SweepConfig = input::read_json(&args.config)?;
    config.validate()?;
    let csv = run_bandwidth_sweep(&config, args.seed)?.to_csv();
    emit(args.out.as_deref(), &csv)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    match cli.command {
        Command::Test(a) => run_test(a),
        Command::Changepoint(a) => run_changepoint(a),
        Command::Exponent(a) => run_exponent(a),
        Command::Sanov(a) => run_sanov(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep(a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
