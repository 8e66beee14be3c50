//! Semi-parametric memory estimators: log-periodogram regression (LPR) and
//! local Whittle (SPLW), each with optional even-power frequency terms
//! `λ^{2p}, p = 1..=P` that remove low-order bias from the short-memory part.
//!
//! Both objectives use the first `N` Fourier frequencies. The LPR estimate
//! is a fixed linear combination of log-ordinates, so an [`EstimatorPlan`]
//! precomputes its weights once per (T, N, P). The local Whittle objective
//! is jointly convex in `(d, θ)` (a log-sum-exp of affine functions minus a
//! linear term), which the optimiser below relies on.

use crate::ar_sieve::least_squares;
use crate::error::{Error, Result};
use crate::spectral::{max_fourier_index, Periodogram, TwiddleTable};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;
use std::fmt;

/// Variance inflation υ_P² of the bias-adjusted estimators, P = 0..=3.
pub const VARIANCE_INFLATION: [f64; 4] = [1.0, 2.25, 3.52, 4.79];
pub const DEFAULT_BANDWIDTH_EXPONENT: f64 = 0.7;
pub const DEFAULT_SEARCH: (f64, f64) = (-1.0, 1.49);

const SPLW_D_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lpr,
    Splw,
}

impl Family {
    /// Asymptotic variance of √N (d̂ - d) for the uncorrected estimator.
    pub fn base_variance(self) -> f64 {
        match self {
            Family::Lpr => PI * PI / 24.0,
            Family::Splw => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Lpr => "LPR",
            Family::Splw => "SPLW",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// N = floor(T^ν).
    Exponent(f64),
    /// Explicit ordinate count.
    Fixed(usize),
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Exponent(DEFAULT_BANDWIDTH_EXPONENT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub family: Family,
    /// Number of λ^{2p} correction terms; 0 is the plain estimator.
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    /// Search interval for d (local Whittle only).
    #[serde(default = "default_search")]
    pub search: (f64, f64),
}

fn default_search() -> (f64, f64) {
    DEFAULT_SEARCH
}

impl EstimatorSpec {
    pub fn new(family: Family, p: usize) -> Self {
        EstimatorSpec { family, p, bandwidth: Bandwidth::default(), search: DEFAULT_SEARCH }
    }

    pub fn lpr(p: usize) -> Self {
        Self::new(Family::Lpr, p)
    }

    pub fn splw(p: usize) -> Self {
        Self::new(Family::Splw, p)
    }

    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    /// Integer ordinate count N used for estimation on a series of length `len`.
    pub fn bandwidth_for(&self, len: usize) -> Result<usize> {
        let n = match self.bandwidth {
            Bandwidth::Exponent(nu) => {
                if !(nu > 0.0 && nu < 1.0) {
                    return Err(Error::arg(format!("bandwidth exponent must lie in (0, 1), got {nu}")));
                }
                ((len as f64).powf(nu) + 1e-9).floor() as usize
            }
            Bandwidth::Fixed(n) => n,
        };
        if n <= self.p + 2 || n > max_fourier_index(len) {
            return Err(Error::arg(format!(
                "bandwidth N = {n} needs P + 2 < N ≤ {} (T = {len}, P = {})",
                max_fourier_index(len),
                self.p
            )));
        }
        Ok(n)
    }

    /// Bandwidth entering the asymptotic variance: T^ν itself for the
    /// exponent rule, otherwise the explicit N.
    pub fn effective_bandwidth(&self, len: usize) -> Result<f64> {
        self.bandwidth_for(len)?;
        Ok(match self.bandwidth {
            Bandwidth::Exponent(nu) => (len as f64).powf(nu),
            Bandwidth::Fixed(n) => n as f64,
        })
    }

    /// υ² = base variance × υ_P², the variance of √N (d̂ - d).
    pub fn variance_constant(&self) -> Result<f64> {
        variance_constant(self.family, self.p)
    }

    pub fn label(&self) -> String {
        if self.p == 0 {
            self.family.name().to_string()
        } else {
            format!("{}-BA(P={})", self.family, self.p)
        }
    }
}

pub fn variance_constant(family: Family, p: usize) -> Result<f64> {
    VARIANCE_INFLATION
        .get(p)
        .map(|v| family.base_variance() * v)
        .ok_or_else(|| Error::arg(format!("variance inflation is tabulated for P ≤ 3, got {p}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub d_hat: f64,
    /// Ordinates used.
    pub n: usize,
    pub family: Family,
    pub p: usize,
    /// Asymptotic variance of d̂: υ² / N_eff.
    pub asym_var: f64,
    /// The optimiser stopped on the edge of the search interval.
    #[serde(default)]
    pub boundary: bool,
}

/// Two-sided normal interval `d̂ ± z_{(1+level)/2} √asym_var`.
pub fn asymptotic_interval(est: &Estimate, level: f64) -> Result<(f64, f64)> {
    let half = normal_quantile((1.0 + level) / 2.0)? * est.asym_var.sqrt();
    Ok((est.d_hat - half, est.d_hat + half))
}

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::arg(format!("probability must lie in (0, 1), got {prob}")));
    }
    let std = Normal::new(0.0, 1.0).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(std.inverse_cdf(prob))
}

/// Precomputed state for estimating many series of one length.
#[derive(Debug, Clone)]
pub struct EstimatorPlan {
    spec: EstimatorSpec,
    n: usize,
    asym_var: f64,
    twiddles: TwiddleTable,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Lpr { weights: Vec<f64> },
    Splw(WhittleFeatures),
}

impl EstimatorPlan {
    pub fn new(spec: EstimatorSpec, len: usize) -> Result<Self> {
        let n = spec.bandwidth_for(len)?;
        let asym_var = spec.variance_constant()? / spec.effective_bandwidth(len)?;
        let freqs: Vec<f64> = (1..=n).map(|j| 2.0 * PI * j as f64 / len as f64).collect();
        let kind = match spec.family {
            Family::Lpr => PlanKind::Lpr { weights: lpr_weights(&freqs, spec.p)? },
            Family::Splw => {
                check_search(spec.search)?;
                PlanKind::Splw(WhittleFeatures::new(&freqs, spec.p))
            }
        };
        Ok(EstimatorPlan { spec, n, asym_var, twiddles: TwiddleTable::new(len), kind })
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn bandwidth(&self) -> usize {
        self.n
    }

    pub fn series_len(&self) -> usize {
        self.twiddles.series_len()
    }

    pub fn asym_var(&self) -> f64 {
        self.asym_var
    }

    pub fn estimate(&self, series: &[f64]) -> Result<Estimate> {
        if series.len() != self.series_len() {
            return Err(Error::arg(format!(
                "plan built for T = {}, got a series of length {}",
                self.series_len(),
                series.len()
            )));
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series contains non-finite values".into()));
        }
        let mut ordinates = Vec::with_capacity(self.n);
        self.twiddles.ordinates_into(series, self.n, &mut ordinates);
        self.estimate_from_ordinates(&ordinates)
    }

    fn estimate_from_ordinates(&self, ordinates: &[f64]) -> Result<Estimate> {
        let log_i = log_ordinates(ordinates)?;
        let (d_hat, boundary) = match &self.kind {
            PlanKind::Lpr { weights } => (weights.iter().zip(&log_i).map(|(w, l)| w * l).sum(), false),
            PlanKind::Splw(features) => features.minimize(&log_i, self.spec.search)?,
        };
        Ok(Estimate {
            d_hat,
            n: self.n,
            family: self.spec.family,
            p: self.spec.p,
            asym_var: self.asym_var,
            boundary,
        })
    }
}

/// Estimates `spec` on a raw series.
pub fn estimate(series: &[f64], spec: &EstimatorSpec) -> Result<Estimate> {
    EstimatorPlan::new(*spec, series.len())?.estimate(series)
}

fn log_ordinates(ordinates: &[f64]) -> Result<Vec<f64>> {
    ordinates
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::DegenerateInput(format!("periodogram ordinate {} is {v}", j + 1)))
            }
        })
        .collect()
}

fn check_search((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::arg(format!("invalid search interval [{lo}, {hi}]")));
    }
    Ok(())
}

fn lpr_design(freqs: &[f64], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(freqs.len(), p + 2, |r, c| match c {
        0 => 1.0,
        1 => -2.0 * freqs[r].ln(),
        k => freqs[r].powi(2 * (k as i32 - 1)),
    })
}

/// Row of the least-squares pseudo-inverse that yields the coefficient on -2 log λ.
fn lpr_weights(freqs: &[f64], p: usize) -> Result<Vec<f64>> {
    let x = lpr_design(freqs, p);
    let n = x.nrows();
    // Solving against each unit response gives the pseudo-inverse column by column.
    let mut weights = Vec::with_capacity(n);
    let cols = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..cols).map(|c| x.column(c).norm()).fold(0.0, f64::max);
    let min_diag = (0..cols).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if n < cols || !(min_diag > 1e-10 * scale) {
        return Err(Error::RankDeficient(format!("LPR design with N = {n} and P = {p} is singular")));
    }
    let pinv = r
        .solve_upper_triangular(&qr.q().transpose())
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    weights.extend(pinv.row(1).iter().copied());
    Ok(weights)
}

/// Log-periodogram regression on the ordinates supplied (all of them are used).
pub fn lpr_estimate(pgram: &Periodogram, p: usize) -> Result<Estimate> {
    if pgram.len() <= p + 2 {
        return Err(Error::RankDeficient(format!("N = {} too small for P = {p}", pgram.len())));
    }
    let log_i = log_ordinates(&pgram.ordinates)?;
    let x = lpr_design(&pgram.freqs, p);
    let beta = least_squares(x, &DVector::from_vec(log_i))?;
    Ok(Estimate {
        d_hat: beta[1],
        n: pgram.len(),
        family: Family::Lpr,
        p,
        asym_var: variance_constant(Family::Lpr, p)? / pgram.len() as f64,
        boundary: false,
    })
}

/// Local Whittle estimate on the ordinates supplied, d restricted to `search`.
pub fn splw_estimate(pgram: &Periodogram, p: usize, search: (f64, f64)) -> Result<Estimate> {
    if pgram.len() <= p + 2 {
        return Err(Error::arg(format!("N = {} too small for P = {p}", pgram.len())));
    }
    check_search(search)?;
    let log_i = log_ordinates(&pgram.ordinates)?;
    let (d_hat, boundary) = WhittleFeatures::new(&pgram.freqs, p).minimize(&log_i, search)?;
    Ok(Estimate {
        d_hat,
        n: pgram.len(),
        family: Family::Splw,
        p,
        asym_var: variance_constant(Family::Splw, p)? / pgram.len() as f64,
        boundary,
    })
}

/// Centred regressors of the local Whittle objective. With u = (d, θ) and
/// f_j = (2 log λ_j, λ_j², …, λ_j^{2P}),
/// `LW(u) = log Σ_j exp(u·(f_j - f̄) + log I_j) - log N`.
#[derive(Debug, Clone)]
struct WhittleFeatures {
    /// Row-major N × (P + 1).
    centred: Vec<f64>,
    dim: usize,
    n: usize,
}

impl WhittleFeatures {
    fn new(freqs: &[f64], p: usize) -> Self {
        let n = freqs.len();
        let dim = p + 1;
        let mut raw = vec![0.0; n * dim];
        for (j, lam) in freqs.iter().enumerate() {
            raw[j * dim] = 2.0 * lam.ln();
            for k in 1..=p {
                raw[j * dim + k] = lam.powi(2 * k as i32);
            }
        }
        for k in 0..dim {
            let mean = (0..n).map(|j| raw[j * dim + k]).sum::<f64>() / n as f64;
            for j in 0..n {
                raw[j * dim + k] -= mean;
            }
        }
        WhittleFeatures { centred: raw, dim, n }
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.centred[j * self.dim..(j + 1) * self.dim]
    }

    /// Objective at (d, θ).
    fn objective(&self, log_i: &[f64], d: f64, theta: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut args = Vec::with_capacity(self.n);
        for (j, l) in log_i.iter().enumerate() {
            let f = self.row(j);
            let mut a = l + d * f[0];
            for (t, x) in theta.iter().zip(&f[1..]) {
                a += t * x;
            }
            max = max.max(a);
            args.push(a);
        }
        let s: f64 = args.iter().map(|a| (a - max).exp()).sum();
        max + s.ln() - (self.n as f64).ln()
    }

    /// Objective, gradient and Hessian over the coordinates selected by
    /// `offset` (0 = all of (d, θ), 1 = θ only) at u = (d, θ).
    fn derivatives(&self, log_i: &[f64], u: &[f64], offset: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let dim = self.dim - offset;
        let mut args = Vec::with_capacity(self.n);
        let mut max = f64::NEG_INFINITY;
        for (j, l) in log_i.iter().enumerate() {
            let a = l + self.row(j).iter().zip(u).map(|(f, v)| f * v).sum::<f64>();
            max = max.max(a);
            args.push(a);
        }
        let weights: Vec<f64> = args.iter().map(|a| (a - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut mean = DVector::zeros(dim);
        let mut second = DMatrix::zeros(dim, dim);
        for (j, w) in weights.iter().enumerate() {
            let pi = w / total;
            let f = &self.row(j)[offset..];
            for a in 0..dim {
                mean[a] += pi * f[a];
                for b in 0..=a {
                    second[(a, b)] += pi * f[a] * f[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                second[(b, a)] = second[(a, b)];
            }
        }
        let hess = second - &mean * mean.transpose();
        let value = max + total.ln() - (self.n as f64).ln();
        (value, mean, hess)
    }

    /// Damped Newton over the coordinates from `offset` on, the rest held fixed.
    fn newton(&self, log_i: &[f64], u: &mut [f64], offset: usize, d_bounds: Option<(f64, f64)>) -> f64 {
        let (mut value, mut grad, mut hess) = self.derivatives(log_i, u, offset);
        for _ in 0..100 {
            let step = solve_newton(&hess, &grad);
            let slope = -grad.dot(&step);
            // Newton decrement: the remaining objective gap is about half of it.
            if -slope < 1e-24 {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let mut trial = u.to_vec();
                for (k, s) in step.iter().enumerate() {
                    trial[offset + k] -= t * s;
                }
                let inside = d_bounds.is_none_or(|(lo, hi)| trial[0] >= lo && trial[0] <= hi);
                if inside {
                    let v = self.value_at(log_i, &trial);
                    // Near the optimum rounding makes the Armijo test noisy,
                    // so a tiny non-decrease is still accepted.
                    if v.is_finite() && v <= value + 1e-4 * t * slope + 1e-15 * value.abs() {
                        u.copy_from_slice(&trial);
                        (value, grad, hess) = self.derivatives(log_i, u, offset);
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        value
    }

    fn value_at(&self, log_i: &[f64], u: &[f64]) -> f64 {
        self.objective(log_i, u[0], &u[1..])
    }

    /// Profile objective min_θ LW(d, θ); `theta` carries the warm start.
    fn profile(&self, log_i: &[f64], d: f64, theta: &mut [f64]) -> f64 {
        if self.dim == 1 {
            return self.objective(log_i, d, &[]);
        }
        let mut u = Vec::with_capacity(self.dim);
        u.push(d);
        u.extend_from_slice(theta);
        let v = self.newton(log_i, &mut u, 1, None);
        theta.copy_from_slice(&u[1..]);
        v
    }

    /// Returns (d̂, hit_boundary).
    fn minimize(&self, log_i: &[f64], (lo, hi): (f64, f64)) -> Result<(f64, bool)> {
        let mut theta = vec![0.0f64; self.dim - 1];
        let (d_best, f_best) = brent_minimize(
            |d| {
                // Restart from θ = 0 when the warm start has drifted to a non-finite point.
                if theta.iter().any(|t| !t.is_finite()) {
                    theta.iter_mut().for_each(|t| *t = 0.0);
                }
                self.profile(log_i, d, &mut theta)
            },
            lo,
            hi,
            SPLW_D_TOL,
        );
        if !f_best.is_finite() {
            return Err(Error::DegenerateInput("local Whittle objective is not finite".into()));
        }
        let mut d = d_best;
        {
            let mut theta = vec![0.0; self.dim - 1];
            self.profile(log_i, d, &mut theta);
            let mut u = Vec::with_capacity(self.dim);
            u.push(d);
            u.extend_from_slice(&theta);
            self.newton(log_i, &mut u, 0, Some((lo, hi)));
            d = u[0];
        }
        let edge = 1e3 * SPLW_D_TOL;
        Ok((d, d - lo <= edge || hi - d <= edge))
    }
}

fn solve_newton(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let n = hess.nrows();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            return ch.solve(grad);
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    grad.clone()
}

/// Brent's derivative-free minimiser (golden section with parabolic steps)
/// on [lo, hi]. Returns (argmin, min).
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    // The interior search never evaluates the end points themselves.
    let (flo, fhi) = (f(lo), f(hi));
    if flo < fx && flo <= fhi {
        (lo, flo)
    } else if fhi < fx {
        (hi, fhi)
    } else {
        (x, fx)
    }
}

/// Local Whittle objective `LW(d, θ)` on explicit ordinates, as written
/// (no centring tricks); used for diagnostics and cross-checks.
pub fn local_whittle_objective(pgram: &Periodogram, d: f64, theta: &[f64]) -> f64 {
    let n = pgram.len() as f64;
    let mean_log = pgram.freqs.iter().map(|l| l.ln()).sum::<f64>() / n;
    let poly = |lam: f64| -> f64 {
        theta.iter().enumerate().map(|(k, t)| t * lam.powi(2 * (k as i32 + 1))).sum()
    };
    let s: f64 = pgram
        .freqs
        .iter()
        .zip(&pgram.ordinates)
        .map(|(&lam, &i)| lam.powf(2.0 * d) * i * poly(lam).exp())
        .sum::<f64>()
        / n;
    let mean_poly = pgram.freqs.iter().map(|&l| poly(l)).sum::<f64>() / n;
    s.ln() - mean_poly - 2.0 * d * mean_log
}
