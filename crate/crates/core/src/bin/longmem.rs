use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use longmem::arfima::{arfima_acf, simulate_gaussian, ArfimaModel};
use longmem::bootstrap::{hpd_interval, BiasChain, SieveConfig, StopRule, DEFAULT_MAX_ITER};
use longmem::estimators::{asymptotic_interval, Bandwidth, EstimatorPlan, EstimatorSpec, Family};
use longmem::harness::{output_paths, run_grid, ExperimentConfig, GridRun, RunOptions};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "longmem", version, about = "Long-memory estimation with pre-filtered sieve bootstrap bias correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ARFIMA(1, d, 0) path, one value per line.
    Simulate(SimulateArgs),
    /// Estimate d from a series file.
    Estimate(EstimateArgs),
    /// Bootstrap bias correction of one estimator; prints the trace as JSON.
    BiasCorrect(BiasCorrectArgs),
    /// Monte Carlo tables from a JSON experiment config.
    Mc(McArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    d: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi: f64,
    #[arg(long = "len", short = 'n')]
    len: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Lpr,
    Splw,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Lpr => Family::Lpr,
            FamilyArg::Splw => Family::Splw,
        }
    }
}

#[derive(Args)]
struct EstimatorArgs {
    /// Series file, one value per line; `-` reads stdin.
    input: PathBuf,
    /// Estimator family; all families when omitted (estimate only).
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Number of λ^{2p} bias terms.
    #[arg(long)]
    p: Option<usize>,
    /// Bandwidth exponent ν, N = floor(T^ν).
    #[arg(long, default_value_t = 0.7)]
    bandwidth: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    est: EstimatorArgs,
}

#[derive(Args)]
struct BiasCorrectArgs {
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long, default_value_t = 200)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `ssr` (default schedule for P), or a number of bias steps.
    #[arg(long, default_value = "ssr")]
    rule: String,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct McArgs {
    /// Experiment config (JSON). Defaults to the reduced-scale spotlight cells.
    config: Option<PathBuf>,
    /// Full design: R = B = 1000 on the whole grid.
    #[arg(long, conflicts_with = "config")]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    boot: Option<usize>,
    /// Output stem for `<stem>.csv`, `<stem>.json` and the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Include replication-level results in the JSON output.
    #[arg(long)]
    keep_reps: bool,
}

fn read_series(path: &Path) -> Result<Vec<f64>> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text)?;
    } else {
        text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v: f64 = s.parse().with_context(|| format!("line {}: cannot parse {s:?} as a number", i + 1))?;
        out.push(v);
    }
    if out.is_empty() {
        bail!("{} holds no values", path.display());
    }
    Ok(out)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = ArfimaModel { sigma2: a.sigma2, ..ArfimaModel::ar1(a.d, a.phi) };
    if a.len == 0 {
        bail!("--len must be at least 1");
    }
    let acf = arfima_acf(&model, a.len - 1)?;
    let path = simulate_gaussian(&acf, a.len, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let mut text = String::with_capacity(path.len() * 24);
    for v in path {
        text.push_str(&format!("{v}\n"));
    }
    emit(a.out.as_deref(), &text)
}

fn specs(a: &EstimatorArgs) -> Vec<EstimatorSpec> {
    let families = match a.family {
        Some(f) => vec![f.into()],
        None => vec![Family::Lpr, Family::Splw],
    };
    let ps = match a.p {
        Some(p) => vec![p],
        None => vec![0, 1, 2],
    };
    let mut out = Vec::new();
    for f in families {
        for &p in &ps {
            out.push(EstimatorSpec::new(f, p).with_bandwidth(Bandwidth::Exponent(a.bandwidth)));
        }
    }
    out
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let series = read_series(&a.est.input)?;
    let mut rows = Vec::new();
    for spec in specs(&a.est) {
        let est = EstimatorPlan::new(spec, series.len())?.estimate(&series)?;
        let (lower, upper) = asymptotic_interval(&est, a.est.level)?;
        rows.push(json!({
            "estimator": spec.label(),
            "d_hat": est.d_hat,
            "n": est.n,
            "asym_var": est.asym_var,
            "interval": [lower, upper],
            "boundary": est.boundary,
        }));
    }
    emit(a.est.out.as_deref(), &(serde_json::to_string_pretty(&rows)? + "\n"))
}

fn bias_correct(a: BiasCorrectArgs) -> Result<()> {
    if let Some(n) = a.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let series = read_series(&a.est.input)?;
    let family = a.est.family.map(Family::from).unwrap_or(Family::Lpr);
    let p = a.est.p.unwrap_or(0);
    let spec = EstimatorSpec::new(family, p).with_bandwidth(Bandwidth::Exponent(a.est.bandwidth));
    let rule = match a.rule.as_str() {
        "ssr" => StopRule::default_for(p),
        s => StopRule::Steps(s.parse().with_context(|| format!("--rule must be `ssr` or a step count, got {s:?}"))?),
    };
    let plan = EstimatorPlan::new(spec, series.len())?;
    let seed = ChaCha8Rng::seed_from_u64(a.seed).next_u64();
    let mut chain = BiasChain::new(&series, &plan, SieveConfig::default(), a.boot, seed)?;
    let trace = chain.run(&rule, a.max_iter)?;
    let interval = match chain.last_draws(&trace) {
        Some(draws) if draws.len() >= 10 => {
            let h = hpd_interval(draws, a.est.level)?;
            json!([h.lower, h.upper])
        }
        _ => serde_json::Value::Null,
    };
    let out = json!({
        "estimator": spec.label(),
        "boot": a.boot,
        "estimate": trace.estimate,
        "hpd_interval": interval,
        "trace": trace,
    });
    emit(a.est.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
}

fn mc(a: McArgs) -> Result<()> {
    let mut cfg = match (&a.config, a.full) {
        (Some(path), _) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        (None, true) => ExperimentConfig::full_scale(),
        (None, false) => ExperimentConfig::spotlight(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(b) = a.boot {
        cfg.boot = b;
    }
    if a.out.is_some() {
        cfg.output = a.out.clone();
    }
    let opts = RunOptions { threads: a.threads, keep_reps: a.keep_reps, ..Default::default() };
    match run_grid(&cfg, &opts)? {
        GridRun::Complete(result) => match &cfg.output {
            Some(stem) => {
                let (csv, json, _) = output_paths(stem);
                eprintln!("wrote {} and {}", csv.display(), json.display());
            }
            None => result.write_csv_to(io::stdout().lock())?,
        },
        GridRun::Interrupted { done, total } => eprintln!("stopped after {done} of {total} replications"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::BiasCorrect(a) => bias_correct(a),
        Command::Mc(a) => mc(a),
    }
}
