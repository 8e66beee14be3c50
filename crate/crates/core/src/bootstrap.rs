//! Sieve and pre-filtered sieve bootstrap, bootstrap bias adjustment (one
//! step or iterated under stochastic stopping rules) and HPD intervals.
//!
//! Randomness is organised as a tree of seeds so that results never depend
//! on how draws are scheduled across threads: a bias step gets a step seed,
//! and draw `b` of that step runs on `ChaCha8Rng::seed_from_u64(derive_seed(step_seed, b))`.

use crate::ar_sieve::{aic_path, ar_residuals, default_max_order, ArFitter, ArModel, ResidualSet};
use crate::error::{Error, Result};
use crate::estimators::{normal_quantile, EstimatorPlan, EstimatorSpec, Family};
use crate::fracdiff::FracCoeffs;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Bias steps stop after this many iterations whatever the stopping rule says.
pub const DEFAULT_MAX_ITER: usize = 20;
/// Iterates outside `[LOWER_BOUND, UPPER_BOUND)` end the recursion.
pub const LOWER_BOUND: f64 = -1.0;
pub const UPPER_BOUND: f64 = 1.5;
/// Largest tolerated share of failed bootstrap estimations in one step.
pub const MAX_FAILED_SHARE: f64 = 0.05;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `index` of `parent`. Frozen: changing it changes every table.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderRule {
    /// AIC over 0..=h_max; `None` uses [`default_max_order`].
    Aic(Option<usize>),
    Fixed(usize),
}

impl Default for OrderRule {
    fn default() -> Self {
        OrderRule::Aic(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnovationMode {
    /// Resample standardized residuals.
    #[default]
    Resample,
    /// i.i.d. N(0, σ̄²) innovations.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SieveConfig {
    #[serde(default)]
    pub fitter: ArFitter,
    #[serde(default)]
    pub order_rule: OrderRule,
    #[serde(default)]
    pub innovation_mode: InnovationMode,
}

/// AR(h) sieve fitted to one series, ready to generate draws.
#[derive(Debug, Clone)]
pub struct SieveModel {
    model: ArModel,
    residuals: ResidualSet,
    source: Vec<f64>,
    mode: InnovationMode,
}

impl SieveModel {
    pub fn fit(series: &[f64], cfg: &SieveConfig) -> Result<Self> {
        let n = series.len();
        let model = match cfg.order_rule {
            OrderRule::Fixed(h) => cfg.fitter.fit(series, h)?,
            OrderRule::Aic(h_max) => {
                let h_max = h_max.unwrap_or_else(|| default_max_order(n));
                let (h, mut path) = aic_path(series, h_max)?;
                match cfg.fitter {
                    ArFitter::Burg => path.swap_remove(h),
                    other => other.fit(series, h)?,
                }
            }
        };
        if !model.is_stable() {
            return Err(Error::Internal(format!("fitted AR({}) is not stable", model.order())));
        }
        let residuals = ar_residuals(series, &model)?;
        Ok(SieveModel { model, residuals, source: series.to_vec(), mode: cfg.innovation_mode })
    }

    pub fn order(&self) -> usize {
        self.model.order()
    }

    pub fn ar(&self) -> &ArModel {
        &self.model
    }

    pub fn residuals(&self) -> &ResidualSet {
        &self.residuals
    }

    pub fn series_len(&self) -> usize {
        self.source.len()
    }

    /// One bootstrap realisation. Consumes the rng as: τ, then T innovations.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.source.len();
        let h = self.model.order();
        let phi = &self.model.phi;
        let sigma = self.residuals.scale;
        // τ is 1-based on {h, …, T}; presample y*(1-j) = y(τ-j+1), j = 1..=h.
        let tau = rng.random_range(h.max(1)..=n);
        let mut out = vec![0.0; n];
        for t in 0..n {
            let eps = match self.mode {
                InnovationMode::Resample => sigma * self.residuals.standardized[rng.random_range(0..n)],
                InnovationMode::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
            };
            let mut v = eps;
            for (j, p) in phi.iter().enumerate() {
                let lag = j + 1;
                let past = if t >= lag { out[t - lag] } else { self.source[tau + t - lag] };
                v -= p * past;
            }
            out[t] = v;
        }
        out
    }
}

pub fn sieve_draw<R: Rng + ?Sized>(series: &[f64], cfg: &SieveConfig, rng: &mut R) -> Result<Vec<f64>> {
    Ok(SieveModel::fit(series, cfg)?.draw(rng))
}

/// Sieve fitted to `(1 - L)^{d_f} y`, drawing through the inverse filter.
#[derive(Debug, Clone)]
pub struct PfsbModel {
    d_f: f64,
    sieve: SieveModel,
    inverse: FracCoeffs,
}

impl PfsbModel {
    pub fn fit(series: &[f64], d_f: f64, cfg: &SieveConfig) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::arg("cannot bootstrap an empty series"));
        }
        if !d_f.is_finite() {
            return Err(Error::arg(format!("pre-filter value must be finite, got {d_f}")));
        }
        let forward = FracCoeffs::new(d_f, series.len())?;
        let inverse = FracCoeffs::new(-d_f, series.len())?;
        let filtered = forward.apply(series)?;
        Ok(PfsbModel { d_f, sieve: SieveModel::fit(&filtered, cfg)?, inverse })
    }

    pub fn d_f(&self) -> f64 {
        self.d_f
    }

    pub fn sieve(&self) -> &SieveModel {
        &self.sieve
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w = self.sieve.draw(rng);
        let mut y = vec![0.0; w.len()];
        self.inverse.apply_into(&w, &mut y);
        y
    }
}

pub fn pfsb_draw<R: Rng + ?Sized>(series: &[f64], d_f: f64, cfg: &SieveConfig, rng: &mut R) -> Result<Vec<f64>> {
    Ok(PfsbModel::fit(series, d_f, cfg)?.draw(rng))
}

/// One bootstrap bias estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasStep {
    pub d_f: f64,
    /// mean(d̂*) - d_f over the successful draws.
    pub bias: f64,
    /// Successful bootstrap estimates, in draw order.
    pub draws: Vec<f64>,
    pub n_failed: usize,
    /// Sieve order used for this step.
    pub order: usize,
}

/// B pre-filtered sieve draws from the step seed, each estimated with `plan`.
/// Estimation failures and boundary solutions are dropped and counted.
pub fn pfsb_bias_seeded(
    series: &[f64],
    plan: &EstimatorPlan,
    d_f: f64,
    cfg: &SieveConfig,
    b: usize,
    step_seed: u64,
) -> Result<BiasStep> {
    if b == 0 {
        return Err(Error::arg("need at least one bootstrap draw"));
    }
    let model = PfsbModel::fit(series, d_f, cfg)?;
    let results: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(step_seed, i));
            let y = model.draw(&mut rng);
            match plan.estimate(&y) {
                Ok(est) if !est.boundary && est.d_hat.is_finite() => Some(est.d_hat),
                _ => None,
            }
        })
        .collect();
    let draws: Vec<f64> = results.iter().flatten().copied().collect();
    let n_failed = b - draws.len();
    if n_failed as f64 > MAX_FAILED_SHARE * b as f64 || draws.is_empty() {
        return Err(Error::TooManyFailures { failed: n_failed, total: b });
    }
    let bias = draws.iter().sum::<f64>() / draws.len() as f64 - d_f;
    Ok(BiasStep { d_f, bias, draws, n_failed, order: model.sieve.order() })
}

/// As [`pfsb_bias_seeded`], taking the step seed from `rng`.
pub fn pfsb_bias<R: RngCore + ?Sized>(
    series: &[f64],
    spec: &EstimatorSpec,
    d_f: f64,
    cfg: &SieveConfig,
    b: usize,
    rng: &mut R,
) -> Result<BiasStep> {
    let plan = EstimatorPlan::new(*spec, series.len())?;
    pfsb_bias_seeded(series, &plan, d_f, cfg, b, rng.next_u64())
}

/// Probability schedule p_k for the stochastic stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// p_0 = 0.95, p_1 = 0.9, p_k = 0.1·2^{1-k}.
    Uncorrected,
    /// p_0 = 0.9, p_k = 0.1·2^{-k}.
    FirstOrder,
    /// Explicit p_0, p_1, …; the last entry repeats.
    Explicit(Vec<f64>),
}

impl Schedule {
    pub fn p(&self, k: usize) -> f64 {
        match self {
            Schedule::Uncorrected => match k {
                0 => 0.95,
                1 => 0.9,
                _ => 0.1 * 0.5f64.powi(k as i32 - 1),
            },
            Schedule::FirstOrder => match k {
                0 => 0.9,
                _ => 0.1 * 0.5f64.powi(k as i32),
            },
            Schedule::Explicit(ps) => ps[k.min(ps.len().saturating_sub(1))],
        }
    }

    fn validate(&self) -> Result<()> {
        if let Schedule::Explicit(ps) = self {
            if ps.is_empty() {
                return Err(Error::arg("stopping schedule is empty"));
            }
            if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
                return Err(Error::arg(format!("schedule probabilities must lie in (0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Exactly this many bias steps (1 = one-shot), guard permitting.
    Steps(usize),
    Stochastic(Schedule),
}

impl StopRule {
    /// Schedules by number of analytic correction terms; P ≥ 2 is one-shot.
    pub fn default_for(p_terms: usize) -> Self {
        match p_terms {
            0 => StopRule::Stochastic(Schedule::Uncorrected),
            1 => StopRule::Stochastic(Schedule::FirstOrder),
            _ => StopRule::Steps(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// |d̃^(k+1) - d̃^(k)| ≤ τ₁.
    Cauchy,
    /// |d̃^(0) - d̃^(k) - b^(k)| ≤ τ₂.
    Accumulated,
    /// d̃^(k+1) left [-1, 1.5).
    DeterministicBound,
    MaxIter,
    /// The requested fixed number of steps ran.
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrectionTrace {
    /// d̃^(0) = d̂, d̃^(1), …; includes an iterate rejected by the bound guard.
    pub iterates: Vec<f64>,
    pub bias_estimates: Vec<f64>,
    /// Tolerances evaluated at each step of a stochastic rule.
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub stop_reason: StopReason,
    /// Index into `iterates` of the returned estimate.
    pub selected: usize,
    pub estimate: f64,
    pub n_failed: Vec<usize>,
    pub orders: Vec<usize>,
}

impl BiasCorrectionTrace {
    pub fn steps(&self) -> usize {
        self.bias_estimates.len()
    }
}

/// Var[d̃^(k)] from `Var[d̃^(0)] = υ²/N` and `Var[d̃^(k)] = 2 Var[d̃^(k-1)] + υ²/(NB)`.
pub fn iterate_variance(k: usize, upsilon2: f64, n: f64, b: usize) -> f64 {
    let base = upsilon2 / n;
    let extra = base / b as f64;
    (0..k).fold(base, |v, _| 2.0 * v + extra)
}

fn check_tolerance_args(p: f64, upsilon2: f64, n: f64, b: usize) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::arg(format!("p_k must lie in (0, 1), got {p}")));
    }
    if !(upsilon2 > 0.0 && n > 0.0) || b == 0 {
        return Err(Error::arg("tolerances need υ² > 0, N > 0 and B ≥ 1"));
    }
    Ok(())
}

/// τ₁^(k) = z_{1-p/2} √(Var[d̃^(k)] + υ²/(NB)).
pub fn tolerance_tau1(k: usize, p: f64, upsilon2: f64, n: f64, b: usize) -> Result<f64> {
    check_tolerance_args(p, upsilon2, n, b)?;
    let v = iterate_variance(k, upsilon2, n, b) + upsilon2 / (n * b as f64);
    Ok(normal_quantile(1.0 - p / 2.0)? * v.sqrt())
}

/// τ₂^(k) = z_{1-p/2} √((υ²/N)(1 + 2^{k-1}(1 + 1/B))).
pub fn tolerance_tau2(k: usize, p: f64, upsilon2: f64, n: f64, b: usize) -> Result<f64> {
    check_tolerance_args(p, upsilon2, n, b)?;
    let v = upsilon2 / n * (1.0 + 2f64.powi(k as i32 - 1) * (1.0 + 1.0 / b as f64));
    Ok(normal_quantile(1.0 - p / 2.0)? * v.sqrt())
}

/// Scale constants feeding the tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceScale {
    pub upsilon2: f64,
    pub n_eff: f64,
    pub b: usize,
}

/// Runs the bias recursion from `d_hat`. `step(k, d_f)` must return the
/// bias step with pre-filter value `d_f`; the caller owns seeding and may cache.
pub fn run_bias_recursion<F>(
    d_hat: f64,
    rule: &StopRule,
    scale: ToleranceScale,
    max_iter: usize,
    mut step: F,
) -> Result<BiasCorrectionTrace>
where
    F: FnMut(usize, f64) -> Result<BiasStep>,
{
    let limit = match rule {
        StopRule::Steps(0) => return Err(Error::arg("need at least one bias step")),
        StopRule::Steps(s) => *s,
        StopRule::Stochastic(schedule) => {
            schedule.validate()?;
            max_iter.max(1)
        }
    };
    let mut trace = BiasCorrectionTrace {
        iterates: vec![d_hat],
        bias_estimates: Vec::new(),
        tau1: Vec::new(),
        tau2: Vec::new(),
        stop_reason: StopReason::Completed,
        selected: 0,
        estimate: d_hat,
        n_failed: Vec::new(),
        orders: Vec::new(),
    };
    let mut k = 0;
    loop {
        let current = trace.iterates[k];
        let s = step(k, current)?;
        let next = current - s.bias;
        trace.bias_estimates.push(s.bias);
        trace.n_failed.push(s.n_failed);
        trace.orders.push(s.order);
        trace.iterates.push(next);
        if !(LOWER_BOUND..UPPER_BOUND).contains(&next) {
            trace.stop_reason = StopReason::DeterministicBound;
            trace.selected = k;
            break;
        }
        if let StopRule::Stochastic(schedule) = rule {
            let p = schedule.p(k);
            let t1 = tolerance_tau1(k, p, scale.upsilon2, scale.n_eff, scale.b)?;
            let t2 = tolerance_tau2(k, p, scale.upsilon2, scale.n_eff, scale.b)?;
            trace.tau1.push(t1);
            trace.tau2.push(t2);
            if (next - current).abs() <= t1 {
                trace.stop_reason = StopReason::Cauchy;
                trace.selected = k;
                break;
            }
            if (trace.iterates[0] - current - s.bias).abs() <= t2 {
                trace.stop_reason = StopReason::Accumulated;
                trace.selected = k;
                break;
            }
        }
        k += 1;
        if k == limit {
            trace.stop_reason = match rule {
                StopRule::Steps(_) => StopReason::Completed,
                StopRule::Stochastic(_) => StopReason::MaxIter,
            };
            trace.selected = k;
            break;
        }
    }
    trace.estimate = trace.iterates[trace.selected];
    Ok(trace)
}

/// Lazily computed sequence of bias steps on one series. Step k uses the
/// seed `derive_seed(seed, k)`, so any stopping rule applied to the same
/// chain sees the same steps.
#[derive(Debug)]
pub struct BiasChain<'a> {
    series: &'a [f64],
    plan: &'a EstimatorPlan,
    cfg: SieveConfig,
    b: usize,
    seed: u64,
    d_hat: f64,
    steps: Vec<BiasStep>,
}

impl<'a> BiasChain<'a> {
    pub fn new(series: &'a [f64], plan: &'a EstimatorPlan, cfg: SieveConfig, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return Err(Error::arg("need at least one bootstrap draw"));
        }
        let d_hat = plan.estimate(series)?.d_hat;
        Ok(BiasChain { series, plan, cfg, b, seed, d_hat, steps: Vec::new() })
    }

    pub fn d_hat(&self) -> f64 {
        self.d_hat
    }

    /// Step `k`, computing earlier steps first if needed.
    pub fn step(&mut self, k: usize) -> Result<&BiasStep> {
        while self.steps.len() <= k {
            let j = self.steps.len();
            let d_f = match self.steps.last() {
                None => self.d_hat,
                Some(prev) => prev.d_f - prev.bias,
            };
            let s = pfsb_bias_seeded(self.series, self.plan, d_f, &self.cfg, self.b, derive_seed(self.seed, j as u64))?;
            self.steps.push(s);
        }
        Ok(&self.steps[k])
    }

    pub fn run(&mut self, rule: &StopRule, max_iter: usize) -> Result<BiasCorrectionTrace> {
        let spec = self.plan.spec();
        let scale = ToleranceScale {
            upsilon2: spec.variance_constant()?,
            n_eff: spec.effective_bandwidth(self.series.len())?,
            b: self.b,
        };
        let d_hat = self.d_hat;
        run_bias_recursion(d_hat, rule, scale, max_iter, |k, _| self.step(k).cloned())
    }

    /// Draws of the last step the trace executed.
    pub fn last_draws(&self, trace: &BiasCorrectionTrace) -> Option<&[f64]> {
        trace.steps().checked_sub(1).and_then(|k| self.steps.get(k)).map(|s| s.draws.as_slice())
    }
}

/// One-shot adjustment d̃ = d̂ - b̂ with d_f = d̂.
pub fn bias_adjust_once<R: RngCore + ?Sized>(
    series: &[f64],
    spec: &EstimatorSpec,
    cfg: &SieveConfig,
    b: usize,
    rng: &mut R,
) -> Result<(f64, BiasCorrectionTrace)> {
    let trace = iterative_bias_adjust(series, spec, cfg, b, &StopRule::Steps(1), rng)?;
    Ok((trace.estimate, trace))
}

pub fn iterative_bias_adjust<R: RngCore + ?Sized>(
    series: &[f64],
    spec: &EstimatorSpec,
    cfg: &SieveConfig,
    b: usize,
    rule: &StopRule,
    rng: &mut R,
) -> Result<BiasCorrectionTrace> {
    let plan = EstimatorPlan::new(*spec, series.len())?;
    let mut chain = BiasChain::new(series, &plan, *cfg, b, rng.next_u64())?;
    chain.run(rule, DEFAULT_MAX_ITER)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpdInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub source_draws: usize,
}

impl HpdInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn shifted(self, by: f64) -> Self {
        HpdInterval { lower: self.lower + by, upper: self.upper + by, ..self }
    }
}

/// Number of order statistics an interval at `level` must span.
pub fn hpd_window(b: usize, level: f64) -> usize {
    // The small offset keeps products like 0.95 * 200 from rounding up a whole draw.
    ((level * b as f64 - 1e-9).ceil() as usize).clamp(1, b)
}

/// Narrowest window of ceil(level·B) consecutive order statistics; ties go
/// to the lowest window.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<HpdInterval> {
    if draws.len() < 10 {
        return Err(Error::arg(format!("HPD interval needs at least 10 draws, got {}", draws.len())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::arg(format!("level must lie in (0, 1), got {level}")));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("bootstrap draws contain non-finite values".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = hpd_window(sorted.len(), level);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=sorted.len() - m {
        let w = sorted[i + m - 1] - sorted[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok(HpdInterval { lower: sorted[best], upper: sorted[best + m - 1], level, source_draws: draws.len() })
}

/// Equal-tailed window with the same number of order statistics as [`hpd_interval`].
pub fn equal_tailed_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    hpd_interval(draws, level)?;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = hpd_window(sorted.len(), level);
    let lo = (sorted.len() - m) / 2;
    Ok((sorted[lo], sorted[lo + m - 1]))
}

/// Family of the estimator a chain bootstraps, for labelling.
pub fn chain_label(spec: &EstimatorSpec) -> String {
    match (spec.family, spec.p) {
        (Family::Lpr, 0) => "LPR_sb".into(),
        (Family::Splw, 0) => "SPLW_sb".into(),
        (f, p) => format!("{f}-BA_sb(P={p})"),
    }
}
