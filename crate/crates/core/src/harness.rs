//! Monte Carlo engine: simulate ARFIMA(1, d, 0) paths over a (d, φ, T) grid,
//! apply every estimator variant to the same path, and aggregate bias, MSE,
//! interval coverage and interval length per cell.
//!
//! Seeds: `rep_seed = derive(derive(master, cell), rep)`. The path uses
//! `derive(rep_seed, 0)`; the bootstrap chain for estimator (family, P) uses
//! `derive(rep_seed, 1 + 16·family + P)`, so fixed-k and SSR variants of one
//! estimator share their bias steps.

use crate::arfima::{arfima_acf, ArfimaModel, GaussianSimulator};
use crate::bootstrap::{derive_seed, hpd_interval, BiasChain, SieveConfig, StopRule, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::estimators::{asymptotic_interval, Bandwidth, EstimatorPlan, EstimatorSpec, Family, DEFAULT_BANDWIDTH_EXPONENT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootMode {
    /// No bootstrap step; asymptotic interval.
    None,
    /// k + 1 bias steps (k = 0 is the one-shot adjustment).
    K(usize),
    /// Stochastic stopping rule with the default schedule for P.
    Ssr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub family: Family,
    #[serde(default)]
    pub p: usize,
    #[serde(default = "default_boot")]
    pub boot: BootMode,
}

fn default_boot() -> BootMode {
    BootMode::None
}

impl Variant {
    pub fn new(family: Family, p: usize, boot: BootMode) -> Self {
        Variant { family, p, boot }
    }

    pub fn id(&self) -> String {
        let base = if self.p == 0 { self.family.name().to_string() } else { format!("{}-BA", self.family) };
        match (self.boot, self.p) {
            (BootMode::None, 0) => base,
            (BootMode::None, p) => format!("{base}(P={p})"),
            (BootMode::K(k), 0) => format!("{base}_sb(k={k})"),
            (BootMode::K(k), p) => format!("{base}_sb(P={p},k={k})"),
            (BootMode::Ssr, 0) => format!("{base}_sb(SSR)"),
            (BootMode::Ssr, p) => format!("{base}_sb(P={p},SSR)"),
        }
    }

    pub fn spec(&self, nu: f64) -> EstimatorSpec {
        EstimatorSpec::new(self.family, self.p).with_bandwidth(Bandwidth::Exponent(nu))
    }

    pub fn stop_rule(&self) -> Option<StopRule> {
        match self.boot {
            BootMode::None => None,
            BootMode::K(k) => Some(StopRule::Steps(k + 1)),
            BootMode::Ssr => Some(StopRule::default_for(self.p)),
        }
    }

    fn chain_key(&self) -> u64 {
        let f = match self.family {
            Family::Lpr => 0,
            Family::Splw => 1,
        };
        1 + 16 * f + self.p as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub d: f64,
    pub phi: f64,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Cartesian grid, ordered T, then φ, then d.
    #[serde(default)]
    pub d: Vec<f64>,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub t: Vec<usize>,
    /// Explicit cells; when non-empty they replace the grid.
    #[serde(default)]
    pub cells: Vec<Cell>,
    pub reps: usize,
    pub boot: usize,
    pub variants: Vec<Variant>,
    #[serde(default = "default_nu")]
    pub bandwidth_exponent: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub sieve: SieveConfig,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Output stem: writes `<stem>.csv` and `<stem>.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_nu() -> f64 {
    DEFAULT_BANDWIDTH_EXPONENT
}

fn default_level() -> f64 {
    0.95
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

/// Every variant of one family reported in the bias tables.
pub fn table_variants(family: Family) -> Vec<Variant> {
    use BootMode::*;
    vec![
        Variant::new(family, 0, None),
        Variant::new(family, 1, None),
        Variant::new(family, 2, None),
        Variant::new(family, 3, None),
        Variant::new(family, 0, K(0)),
        Variant::new(family, 0, K(1)),
        Variant::new(family, 0, K(2)),
        Variant::new(family, 0, Ssr),
        Variant::new(family, 1, K(0)),
        Variant::new(family, 1, K(1)),
        Variant::new(family, 1, Ssr),
        Variant::new(family, 2, K(0)),
    ]
}

impl ExperimentConfig {
    /// Reduced scale: R = B = 200 on three cells.
    pub fn spotlight() -> Self {
        ExperimentConfig {
            d: Vec::new(),
            phi: Vec::new(),
            t: Vec::new(),
            cells: vec![
                Cell { d: 0.0, phi: 0.3, t: 100 },
                Cell { d: 0.0, phi: 0.6, t: 100 },
                Cell { d: 0.0, phi: 0.3, t: 500 },
            ],
            reps: 200,
            boot: 200,
            variants: vec![
                Variant::new(Family::Lpr, 0, BootMode::None),
                Variant::new(Family::Lpr, 1, BootMode::None),
                Variant::new(Family::Lpr, 2, BootMode::None),
                Variant::new(Family::Lpr, 0, BootMode::K(0)),
                Variant::new(Family::Lpr, 2, BootMode::K(0)),
                Variant::new(Family::Splw, 0, BootMode::None),
            ],
            bandwidth_exponent: DEFAULT_BANDWIDTH_EXPONENT,
            seed: 20_240_601,
            level: 0.95,
            sieve: SieveConfig::default(),
            max_iter: DEFAULT_MAX_ITER,
            output: None,
        }
    }

    /// Full design: R = B = 1000 over the whole grid, all variants.
    pub fn full_scale() -> Self {
        let mut variants = table_variants(Family::Lpr);
        variants.extend(table_variants(Family::Splw));
        ExperimentConfig {
            d: vec![0.0, 0.2, 0.3, 0.4],
            phi: vec![0.3, 0.6, 0.9],
            t: vec![100, 200, 500],
            cells: Vec::new(),
            reps: 1000,
            boot: 1000,
            variants,
            ..Self::spotlight()
        }
    }

    pub fn grid(&self) -> Vec<Cell> {
        if !self.cells.is_empty() {
            return self.cells.clone();
        }
        let mut out = Vec::new();
        for &t in &self.t {
            for &phi in &self.phi {
                for &d in &self.d {
                    out.push(Cell { d, phi, t });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.boot == 0 {
            return Err(Error::arg("reps and boot must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::arg("no estimator variants requested"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::arg(format!("level must lie in (0, 1), got {}", self.level)));
        }
        let grid = self.grid();
        if grid.is_empty() {
            return Err(Error::arg("the experiment grid is empty"));
        }
        for c in &grid {
            ArfimaModel::ar1(c.d, c.phi).validate()?;
        }
        Ok(())
    }

    /// Identity of the computation, ignoring where results are written.
    fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.output = None;
        Ok(serde_json::to_string(&c)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bias steps executed (0 for non-bootstrap variants).
    #[serde(default)]
    pub steps: usize,
    #[serde(default)]
    pub failed_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantResult {
    Ok(Outcome),
    Failed(String),
}

impl VariantResult {
    pub fn outcome(&self) -> Option<&Outcome> {
        match self {
            VariantResult::Ok(o) => Some(o),
            VariantResult::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub cell: usize,
    pub rep: usize,
    /// One entry per configured variant, in order.
    pub results: Vec<VariantResult>,
}

pub fn rep_seed(master: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(master, cell as u64), rep as u64)
}

/// Prepared simulators and estimator plans for one configuration.
#[derive(Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    cells: Vec<Cell>,
    sims: Vec<GaussianSimulator>,
    /// Plans per cell, indexed like `config.variants`.
    plans: Vec<Vec<EstimatorPlan>>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let cells = config.grid();
        let mut sims = Vec::with_capacity(cells.len());
        let mut plans = Vec::with_capacity(cells.len());
        for c in &cells {
            let acf = arfima_acf(&ArfimaModel::ar1(c.d, c.phi), c.t - 1)?;
            sims.push(GaussianSimulator::new(&acf, c.t)?);
            plans.push(
                config
                    .variants
                    .iter()
                    .map(|v| EstimatorPlan::new(v.spec(config.bandwidth_exponent), c.t))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Experiment { config: config.clone(), cells, sims, plans })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn simulate(&self, cell: usize, rep: usize) -> Vec<f64> {
        let seed = derive_seed(rep_seed(self.config.seed, cell, rep), 0);
        self.sims[cell].sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// All variants on one simulated path.
    pub fn run_replication(&self, cell: usize, rep: usize) -> ReplicationRecord {
        let cfg = &self.config;
        let path = self.simulate(cell, rep);
        let seed = rep_seed(cfg.seed, cell, rep);
        let plans = &self.plans[cell];
        let mut results: Vec<Option<VariantResult>> = vec![None; cfg.variants.len()];
        for (i, v) in cfg.variants.iter().enumerate() {
            if v.boot == BootMode::None {
                results[i] = Some(match plans[i].estimate(&path).and_then(|e| {
                    let (lower, upper) = asymptotic_interval(&e, cfg.level)?;
                    Ok(Outcome { estimate: e.d_hat, lower, upper, steps: 0, failed_draws: 0 })
                }) {
                    Ok(o) => VariantResult::Ok(o),
                    Err(e) => VariantResult::Failed(e.to_string()),
                });
            }
        }
        // Bootstrap variants grouped by estimator so they share one chain.
        for i in 0..cfg.variants.len() {
            if results[i].is_some() {
                continue;
            }
            let key = cfg.variants[i].chain_key();
            let members: Vec<usize> =
                (i..cfg.variants.len()).filter(|&j| results[j].is_none() && cfg.variants[j].chain_key() == key).collect();
            let chain = BiasChain::new(&path, &plans[i], cfg.sieve, cfg.boot, derive_seed(seed, key));
            let mut chain = match chain {
                Ok(c) => c,
                Err(e) => {
                    for &j in &members {
                        results[j] = Some(VariantResult::Failed(e.to_string()));
                    }
                    continue;
                }
            };
            for &j in &members {
                let rule = cfg.variants[j].stop_rule().expect("bootstrap variant");
                let r = chain.run(&rule, cfg.max_iter).and_then(|trace| {
                    let draws = chain.last_draws(&trace).ok_or_else(|| Error::Internal("trace without steps".into()))?;
                    let hpd = hpd_interval(draws, cfg.level)?;
                    Ok(Outcome {
                        estimate: trace.estimate,
                        lower: hpd.lower,
                        upper: hpd.upper,
                        steps: trace.steps(),
                        failed_draws: trace.n_failed.iter().sum(),
                    })
                });
                results[j] = Some(match r {
                    Ok(o) => VariantResult::Ok(o),
                    Err(e) => VariantResult::Failed(e.to_string()),
                });
            }
        }
        ReplicationRecord { cell, rep, results: results.into_iter().map(|r| r.expect("every variant ran")).collect() }
    }
}

/// One CSV row / JSON entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub d: f64,
    pub phi: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub variant: String,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_length: Option<f64>,
    pub n_failed: usize,
    pub n_ok: usize,
    /// Monte Carlo standard error of the bias.
    pub bias_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct CsvRow<'a> {
    d: f64,
    phi: f64,
    #[serde(rename = "T")]
    t: usize,
    variant: &'a str,
    bias: Option<f64>,
    mse: Option<f64>,
    coverage: Option<f64>,
    mean_length: Option<f64>,
    n_failed: usize,
}

pub fn summarize(cell: &Cell, variant: &Variant, outcomes: &[&VariantResult]) -> VariantSummary {
    let ok: Vec<&Outcome> = outcomes.iter().filter_map(|r| r.outcome()).collect();
    let n = ok.len();
    let mean = |f: &dyn Fn(&Outcome) -> f64| -> Option<f64> {
        (n > 0).then(|| ok.iter().map(|o| f(o)).sum::<f64>() / n as f64)
    };
    let bias = mean(&|o| o.estimate - cell.d);
    let bias_se = bias.filter(|_| n > 1).map(|b| {
        let ss: f64 = ok.iter().map(|o| (o.estimate - cell.d - b).powi(2)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    });
    VariantSummary {
        d: cell.d,
        phi: cell.phi,
        t: cell.t,
        variant: variant.id(),
        bias,
        mse: mean(&|o| (o.estimate - cell.d).powi(2)),
        coverage: mean(&|o| if o.lower <= cell.d && cell.d <= o.upper { 1.0 } else { 0.0 }),
        mean_length: mean(&|o| o.upper - o.lower),
        n_failed: outcomes.len() - n,
        n_ok: n,
        bias_se,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub rows: Vec<VariantSummary>,
    /// Replication-level data, ordered by (cell, rep).
    pub replications: Vec<ReplicationRecord>,
}

impl GridResult {
    fn aggregate(config: ExperimentConfig, cells: Vec<Cell>, replications: Vec<ReplicationRecord>) -> Self {
        let mut rows = Vec::new();
        for (ci, cell) in cells.iter().enumerate() {
            let recs: Vec<&ReplicationRecord> = replications.iter().filter(|r| r.cell == ci).collect();
            for (vi, v) in config.variants.iter().enumerate() {
                let outs: Vec<&VariantResult> = recs.iter().map(|r| &r.results[vi]).collect();
                rows.push(summarize(cell, v, &outs));
            }
        }
        GridResult { config, cells, rows, replications }
    }

    pub fn row(&self, cell: usize, variant: usize) -> &VariantSummary {
        &self.rows[cell * self.config.variants.len() + variant]
    }

    pub fn find_cell(&self, d: f64, phi: f64, t: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.d == d && c.phi == phi && c.t == t)
    }

    pub fn find_variant(&self, id: &str) -> Option<usize> {
        self.config.variants.iter().position(|v| v.id() == id)
    }

    /// Per-replication results for one cell and variant, in replication order.
    pub fn results(&self, cell: usize, variant: usize) -> Vec<&VariantResult> {
        self.replications.iter().filter(|r| r.cell == cell).map(|r| &r.results[variant]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(fs::File::create(path)?)
    }

    /// CSV columns: d, phi, T, variant, bias, mse, coverage, mean_length, n_failed.
    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                d: r.d,
                phi: r.phi,
                t: r.t,
                variant: &r.variant,
                bias: r.bias,
                mse: r.mse,
                coverage: r.coverage,
                mean_length: r.mean_length,
                n_failed: r.n_failed,
            })
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path, keep_reps: bool) -> Result<()> {
        let value = if keep_reps {
            serde_json::to_value(self)?
        } else {
            serde_json::json!({ "config": self.config, "cells": self.cells, "rows": self.rows })
        };
        write_atomic(path, &serde_json::to_vec_pretty(&value)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Internal(format!("csv: {other:?}")),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub keep_reps: bool,
    /// Replications per checkpoint; 0 uses the default of 50.
    pub checkpoint_every: usize,
    /// Stop after this many new replications, leaving the checkpoint behind.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    records: Vec<ReplicationRecord>,
}

pub fn output_paths(stem: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (stem.with_extension("csv"), stem.with_extension("json"), stem.with_extension("checkpoint.json"))
}

/// Outcome of [`run_grid`]: finished tables, or a partial run saved to the checkpoint.
#[derive(Debug)]
pub enum GridRun {
    Complete(Box<GridResult>),
    Interrupted { done: usize, total: usize },
}

/// Runs every (cell, replication) pair, checkpointing to `<output>.checkpoint.json`
/// and resuming from it when present. Writes `<output>.csv` and `<output>.json`.
pub fn run_grid(config: &ExperimentConfig, opts: &RunOptions) -> Result<GridRun> {
    let exp = Experiment::new(config)?;
    let tasks: Vec<(usize, usize)> =
        (0..exp.cells.len()).flat_map(|c| (0..config.reps).map(move |r| (c, r))).collect();
    let fingerprint = config.fingerprint()?;
    let paths = config.output.as_deref().map(output_paths);
    let mut records: Vec<ReplicationRecord> = Vec::new();
    if let Some((_, _, cp)) = &paths {
        if let Some(dir) = cp.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        if cp.exists() {
            let saved: Checkpoint = serde_json::from_slice(&fs::read(cp)?)?;
            if saved.fingerprint != fingerprint {
                return Err(Error::arg(format!(
                    "checkpoint {} was written for a different configuration; remove it to start over",
                    cp.display()
                )));
            }
            records = saved.records;
        }
    }
    let pool = match opts.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ResourceLimit(e.to_string()))?,
        ),
        None => None,
    };
    let every = if opts.checkpoint_every == 0 { DEFAULT_CHECKPOINT_EVERY } else { opts.checkpoint_every };
    let mut new_count = 0;
    while records.len() < tasks.len() {
        if opts.stop_after.is_some_and(|s| new_count >= s) {
            return Ok(GridRun::Interrupted { done: records.len(), total: tasks.len() });
        }
        let mut take = every.min(tasks.len() - records.len());
        if let Some(s) = opts.stop_after {
            take = take.min(s - new_count);
        }
        let chunk = &tasks[records.len()..records.len() + take];
        let run = || chunk.par_iter().map(|&(c, r)| exp.run_replication(c, r)).collect::<Vec<_>>();
        let batch = match &pool {
            Some(p) => p.install(run),
            None => run(),
        };
        records.extend(batch);
        new_count += take;
        if let Some((_, _, cp)) = &paths {
            let saved = Checkpoint { fingerprint: fingerprint.clone(), records };
            write_atomic(cp, &serde_json::to_vec(&saved)?)?;
            records = saved.records;
        }
    }
    let result = GridResult::aggregate(config.clone(), exp.cells.clone(), records);
    if let Some((csv, json, cp)) = &paths {
        result.write_csv(csv)?;
        result.write_json(json, opts.keep_reps)?;
        if cp.exists() {
            fs::remove_file(cp)?;
        }
    }
    Ok(GridRun::Complete(Box::new(result)))
}

/// [`run_grid`] without checkpoint interruption; returns the tables.
pub fn run_grid_complete(config: &ExperimentConfig, opts: &RunOptions) -> Result<GridResult> {
    let opts = RunOptions { stop_after: None, ..opts.clone() };
    match run_grid(config, &opts)? {
        GridRun::Complete(r) => Ok(*r),
        GridRun::Interrupted { .. } => Err(Error::Internal("run stopped without a stop request".into())),
    }
}
