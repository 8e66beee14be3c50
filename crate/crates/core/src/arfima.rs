//! ARFIMA(p, d, q) autocovariances and exact Gaussian simulation.
//!
//! The model is `(1 - z)^d Φ(z) y(t) = Θ(z) ε(t)` with
//! `Φ(z) = 1 - φ_1 z - … - φ_p z^p` and `Θ(z) = 1 + θ_1 z + … + θ_q z^q`.
//! Autocovariances are exact: closed forms for the fractional-noise and ARMA
//! parts, and Sowell's hypergeometric representation when an AR(1) factor
//! is combined with `d ≠ 0`. Paths are drawn by Durbin-Levinson conditional
//! sampling, which is exact for any positive-definite ACF.

use crate::ar_sieve::{levinson_solve, reflection_coefficients};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Largest lag `arfima_acf` will tabulate.
pub const MAX_ACF_LAG: usize = 200_000;

/// |d| below this is treated as exactly zero (the closed form has a pole in Γ(d)).
const D_ZERO: f64 = 1e-12;
/// |φ| below this is treated as a pure fractional-noise AR part.
const PHI_ZERO: f64 = 1e-10;
const HYPERGEOMETRIC_MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArfimaModel {
    pub d: f64,
    #[serde(default)]
    pub ar: Vec<f64>,
    #[serde(default)]
    pub ma: Vec<f64>,
    #[serde(default = "unit")]
    pub sigma2: f64,
}

fn unit() -> f64 {
    1.0
}

impl ArfimaModel {
    /// ARFIMA(1, d, 0) with unit innovation variance, the simulation design's DGP.
    pub fn ar1(d: f64, phi: f64) -> Self {
        let ar = if phi == 0.0 { Vec::new() } else { vec![phi] };
        ArfimaModel { d, ar, ma: Vec::new(), sigma2: 1.0 }
    }

    pub fn fractional_noise(d: f64) -> Self {
        ArfimaModel { d, ar: Vec::new(), ma: Vec::new(), sigma2: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d.abs() < 0.5) {
            return Err(Error::InvalidModel(format!("need |d| < 0.5, got {}", self.d)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidModel(format!("innovation variance must be > 0, got {}", self.sigma2)));
        }
        // Φ(z) = 1 - Σ φ_j z^j in the `1 + Σ a_j z^j` form expected by the step-down test.
        let ar_poly: Vec<f64> = self.ar.iter().map(|p| -p).collect();
        if !roots_outside_unit_circle(&ar_poly) {
            return Err(Error::InvalidModel("AR polynomial is not stationary".into()));
        }
        if !roots_outside_unit_circle(&self.ma) {
            return Err(Error::InvalidModel("MA polynomial is not invertible".into()));
        }
        Ok(())
    }
}

fn roots_outside_unit_circle(tail: &[f64]) -> bool {
    if tail.iter().any(|c| !c.is_finite()) {
        return false;
    }
    match reflection_coefficients(tail) {
        Some(k) => k.iter().all(|r| r.abs() < 1.0),
        None => false,
    }
}

/// Autocovariances γ(0..=L) at unit lag spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfSequence {
    values: Vec<f64>,
}

impl AcfSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let Some(&g0) = values.first() else {
            return Err(Error::InvalidAcf("empty autocovariance sequence".into()));
        };
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(Error::InvalidAcf(format!("γ(0) must be positive, got {g0}")));
        }
        if let Some((lag, g)) = values
            .iter()
            .enumerate()
            .find(|(_, g)| !g.is_finite() || g.abs() > g0 * (1.0 + 1e-12))
        {
            return Err(Error::InvalidAcf(format!("|γ({lag})| = {} exceeds γ(0) = {g0}", g.abs())));
        }
        Ok(AcfSequence { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn variance(&self) -> f64 {
        self.values[0]
    }
}

/// Exact autocovariances of `model` for lags `0..=max_lag`.
///
/// Supports any MA order with an AR part of order at most one, which covers
/// the ARFIMA(1, d, 0) design; higher AR orders return `InvalidModel`.
pub fn arfima_acf(model: &ArfimaModel, max_lag: usize) -> Result<AcfSequence> {
    model.validate()?;
    if max_lag > MAX_ACF_LAG {
        return Err(Error::ResourceLimit(format!("max_lag {max_lag} exceeds table limit {MAX_ACF_LAG}")));
    }
    if model.ar.len() > 1 {
        return Err(Error::InvalidModel("autocovariances are implemented for AR order ≤ 1".into()));
    }
    let phi = model.ar.first().copied().unwrap_or(0.0);
    let d = model.d;
    let psi = ma_autocorrelation_weights(&model.ma);
    let q = model.ma.len() as isize;

    let values: Vec<f64> = if d.abs() < D_ZERO || phi.abs() < PHI_ZERO {
        // γ_y(h) = σ² Σ_l ψ(l) γ_x(h - l), with x the pure AR(1) or fractional noise part.
        let base: Vec<f64> = if d.abs() < D_ZERO {
            let scale = 1.0 / (1.0 - phi * phi);
            let mut v = Vec::with_capacity(max_lag + model.ma.len() + 1);
            let mut p = scale;
            for _ in 0..=max_lag + model.ma.len() {
                v.push(p);
                p *= phi;
            }
            v
        } else {
            fractional_noise_acf(d, max_lag + model.ma.len())
        };
        (0..=max_lag as isize)
            .map(|h| {
                (-q..=q)
                    .map(|l| psi[(l + q) as usize] * base[(h - l).unsigned_abs()])
                    .sum::<f64>()
                    * model.sigma2
            })
            .collect()
    } else {
        sowell_ar1_acf(d, phi, &psi, q, max_lag)?
            .into_iter()
            .map(|g| g * model.sigma2)
            .collect()
    };
    AcfSequence::new(values)
}

/// ψ(l) = Σ_s θ_s θ_{s-l} for l = -q..=q (θ_0 = 1), stored at index l + q.
fn ma_autocorrelation_weights(ma: &[f64]) -> Vec<f64> {
    let theta: Vec<f64> = std::iter::once(1.0).chain(ma.iter().copied()).collect();
    let q = ma.len() as isize;
    (-q..=q)
        .map(|l| {
            let lo = l.max(0);
            let hi = q.min(q + l);
            (lo..=hi).map(|s| theta[s as usize] * theta[(s - l) as usize]).sum()
        })
        .collect()
}

/// Unit-variance-innovation autocovariances of `(1 - z)^{-d} ε`.
fn fractional_noise_acf(d: f64, max_lag: usize) -> Vec<f64> {
    let g0 = gamma(1.0 - 2.0 * d) / gamma(1.0 - d).powi(2);
    let mut out = Vec::with_capacity(max_lag + 1);
    let mut rho = 1.0;
    out.push(g0);
    for k in 1..=max_lag {
        let kf = k as f64;
        rho *= (kf - 1.0 + d) / (kf - d);
        out.push(g0 * rho);
    }
    out
}

/// Gauss hypergeometric ₂F₁(a, 1; c; x) by its power series, |x| < 1.
fn hyp2f1_unit_b(a: f64, c: f64, x: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..HYPERGEOMETRIC_MAX_TERMS {
        let nf = n as f64;
        let ratio = (a + nf) / (c + nf) * x;
        term *= ratio;
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() && ratio.abs() < 1.0 {
            return Ok(sum);
        }
    }
    Err(Error::ResourceLimit(format!(
        "2F1({a}, 1; {c}; {x}) did not converge in {HYPERGEOMETRIC_MAX_TERMS} terms"
    )))
}

/// Sowell's representation specialised to one real AR root `rho`:
/// γ(s) = Σ_l ψ(l) ζ C(d, 1 + l - s, ρ) with ζ = 1 / (ρ (1 - ρ²)) and
/// C(d, h, ρ) = γ_fn(h) [ρ² F(d + h, 1; 1 - d + h; ρ) + F(d - h, 1; 1 - d - h; ρ) - 1].
fn sowell_ar1_acf(d: f64, rho: f64, psi: &[f64], q: isize, max_lag: usize) -> Result<Vec<f64>> {
    let zeta = 1.0 / (rho * (1.0 - rho * rho));
    let span = max_lag + q as usize + 2;
    let fn_acf = fractional_noise_acf(d, span);
    let c_term = |h: isize| -> Result<f64> {
        let hf = h as f64;
        let f_plus = hyp2f1_unit_b(d + hf, 1.0 - d + hf, rho)?;
        let f_minus = hyp2f1_unit_b(d - hf, 1.0 - d - hf, rho)?;
        Ok(fn_acf[h.unsigned_abs()] * (rho * rho * f_plus + f_minus - 1.0))
    };
    (0..=max_lag as isize)
        .map(|s| {
            let mut acc = 0.0;
            for l in -q..=q {
                acc += psi[(l + q) as usize] * zeta * c_term(1 + l - s)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Precomputed Durbin-Levinson predictors for repeated exact draws of a
/// zero-mean Gaussian process of fixed length.
#[derive(Debug, Clone)]
pub struct GaussianSimulator {
    /// Row `t` holds the coefficients predicting observation `t` from
    /// observations `t-1, …, 0` (in that order).
    predictors: Vec<Vec<f64>>,
    std_devs: Vec<f64>,
}

impl GaussianSimulator {
    pub fn new(acf: &AcfSequence, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::arg("simulation length must be at least 1"));
        }
        if acf.values().len() < len {
            return Err(Error::arg(format!(
                "autocovariances cover {} lags, need {} for length {len}",
                acf.values().len(),
                len
            )));
        }
        let models = levinson_solve(acf, len - 1)?;
        let mut predictors = Vec::with_capacity(len);
        let mut std_devs = Vec::with_capacity(len);
        for m in models {
            // ε = y + Σ φ_j y(t-j), so the predictor coefficients are -φ_j.
            predictors.push(m.phi.iter().map(|p| -p).collect());
            std_devs.push(m.sigma2.sqrt());
        }
        Ok(GaussianSimulator { predictors, std_devs })
    }

    pub fn len(&self) -> usize {
        self.std_devs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.std_devs.is_empty()
    }

    /// One-step prediction variances v_0, …, v_{T-1}.
    pub fn prediction_variances(&self) -> impl Iterator<Item = f64> + '_ {
        self.std_devs.iter().map(|s| s * s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.len();
        let mut y = Vec::with_capacity(n);
        for t in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let pred: f64 = self.predictors[t].iter().zip(y.iter().rev()).map(|(a, v)| a * v).sum();
            y.push(pred + self.std_devs[t] * z);
        }
        y
    }
}

/// Exact draw of length `len` from the zero-mean Gaussian process with autocovariances `acf`.
pub fn simulate_gaussian<R: Rng + ?Sized>(acf: &AcfSequence, len: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(GaussianSimulator::new(acf, len)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// γ(τ) from the truncated MA(∞) weights of κ(z)/(1 - z)^d with κ = Θ/Φ.
    fn ma_infinity_oracle(model: &ArfimaModel, lags: usize, terms: usize) -> Vec<f64> {
        // (1 - z)^{-d} weights.
        let mut psi = vec![0.0; terms];
        psi[0] = 1.0;
        for j in 1..terms {
            psi[j] = psi[j - 1] * ((j as f64 - 1.0 + model.d) / j as f64);
        }
        // Divide by Φ(z): k_j = psi_j + Σ φ_i k_{j-i}.
        let mut k = vec![0.0; terms];
        for j in 0..terms {
            let mut v = psi[j];
            for (i, phi) in model.ar.iter().enumerate() {
                if j > i {
                    v += phi * k[j - i - 1];
                }
            }
            k[j] = v;
        }
        // Multiply by Θ(z).
        let theta: Vec<f64> = std::iter::once(1.0).chain(model.ma.iter().copied()).collect();
        let w: Vec<f64> = (0..terms)
            .map(|j| (0..theta.len()).filter(|&s| s <= j).map(|s| theta[s] * k[j - s]).sum())
            .collect();
        (0..=lags)
            .map(|tau| model.sigma2 * (0..terms - tau).map(|j| w[j] * w[j + tau]).sum::<f64>())
            .collect()
    }

    /// Fractional noise ACF from the gamma closed form, passed through Θ(B)
    /// and then the AR(1) filter as a geometric double sum.
    fn filtered_noise_oracle(model: &ArfimaModel, lags: usize) -> Vec<f64> {
        use statrs::function::gamma::gamma;
        let d = model.d;
        let phi = model.ar.first().copied().unwrap_or(0.0);
        let m = if phi == 0.0 { 1 } else { 800 };
        let q = model.ma.len();
        let span = lags + 2 * m + 2 * q + 2;
        let mut fnacf = vec![model.sigma2 * gamma(1.0 - 2.0 * d) / gamma(1.0 - d).powi(2); span + 1];
        for k in 1..=span {
            fnacf[k] = fnacf[k - 1] * (k as f64 - 1.0 + d) / (k as f64 - d);
        }
        let theta: Vec<f64> = std::iter::once(1.0).chain(model.ma.iter().copied()).collect();
        let ma_span = lags + 2 * m;
        let gv: Vec<f64> = (0..=ma_span)
            .map(|k| {
                let mut s = 0.0;
                for (a, ta) in theta.iter().enumerate() {
                    for (b, tb) in theta.iter().enumerate() {
                        s += ta * tb * fnacf[(k as i64 + a as i64 - b as i64).unsigned_abs() as usize];
                    }
                }
                s
            })
            .collect();
        (0..=lags)
            .map(|h| {
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        s += phi.powi((i + j) as i32) * gv[(h as i64 + i as i64 - j as i64).unsigned_abs() as usize];
                    }
                }
                s
            })
            .collect()
    }

    #[test]
    fn ar1_closed_form() {
        let acf = arfima_acf(&ArfimaModel::ar1(0.0, 0.6), 2).unwrap();
        let v = acf.values();
        assert_relative_eq!(v[0], 1.5625, max_relative = 1e-14);
        assert_relative_eq!(v[1], 0.9375, max_relative = 1e-14);
        assert_relative_eq!(v[2], 0.5625, max_relative = 1e-14);
    }

    #[test]
    fn fractional_noise_lag_one_correlation() {
        let acf = arfima_acf(&ArfimaModel::fractional_noise(0.2), 1).unwrap();
        assert_relative_eq!(acf.values()[1] / acf.values()[0], 0.25, max_relative = 1e-13);
    }

    #[test]
    fn sowell_matches_filtered_noise_oracle() {
        let model = ArfimaModel::ar1(0.3, 0.6);
        let exact = arfima_acf(&model, 50).unwrap();
        let oracle = filtered_noise_oracle(&model, 50);
        for (lag, (a, b)) in exact.values().iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() <= 1e-9 * b.abs(), "lag {lag}: {a} vs {b}");
        }
    }

    #[test]
    fn sowell_handles_negative_memory_and_ar_sign() {
        for (d, phi) in [(-0.3, 0.5), (0.2, -0.7), (0.45, 0.9)] {
            let model = ArfimaModel::ar1(d, phi);
            let exact = arfima_acf(&model, 20).unwrap();
            let oracle = filtered_noise_oracle(&model, 20);
            for (lag, (a, b)) in exact.values().iter().zip(&oracle).enumerate() {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "d={d} φ={phi} lag {lag}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn moving_average_parts() {
        let model = ArfimaModel { d: 0.25, ar: vec![0.4], ma: vec![0.5, -0.2], sigma2: 2.0 };
        let exact = arfima_acf(&model, 10).unwrap();
        let oracle = filtered_noise_oracle(&model, 10);
        for (a, b) in exact.values().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
        }
        let arma = ArfimaModel { d: 0.0, ar: vec![0.4], ma: vec![0.5], sigma2: 1.0 };
        let exact = arfima_acf(&arma, 5).unwrap();
        let oracle = ma_infinity_oracle(&arma, 5, 2_000);
        for (a, b) in exact.values().iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_memory_matches_arma_formula() {
        let acf = arfima_acf(&ArfimaModel::ar1(0.0, 0.3), 30).unwrap();
        for (tau, g) in acf.values().iter().enumerate() {
            let expect = 0.3f64.powi(tau as i32) / (1.0 - 0.09);
            assert_relative_eq!(*g, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_models() {
        assert!(matches!(arfima_acf(&ArfimaModel::ar1(0.5, 0.0), 3), Err(Error::InvalidModel(_))));
        assert!(matches!(arfima_acf(&ArfimaModel::ar1(0.2, 1.0), 3), Err(Error::InvalidModel(_))));
        let bad_ma = ArfimaModel { d: 0.1, ar: vec![], ma: vec![1.5], sigma2: 1.0 };
        assert!(matches!(arfima_acf(&bad_ma, 3), Err(Error::InvalidModel(_))));
        let bad_var = ArfimaModel { sigma2: 0.0, ..ArfimaModel::fractional_noise(0.1) };
        assert!(matches!(arfima_acf(&bad_var, 3), Err(Error::InvalidModel(_))));
        assert!(matches!(
            arfima_acf(&ArfimaModel::fractional_noise(0.1), MAX_ACF_LAG + 1),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn white_noise_simulation_returns_raw_draws() {
        let acf = AcfSequence::new(vec![1.0, 0.0, 0.0]).unwrap();
        let y = simulate_gaussian(&acf, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        assert_eq!(y, raw);
    }

    #[test]
    fn single_observation_has_variance_gamma0() {
        let acf = AcfSequence::new(vec![4.0, 1.0]).unwrap();
        let y = simulate_gaussian(&acf, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let z: f64 = ChaCha8Rng::seed_from_u64(9).sample(StandardNormal);
        assert_eq!(y, vec![2.0 * z]);
    }

    #[test]
    fn prediction_variances_decrease() {
        let acf = arfima_acf(&ArfimaModel::ar1(0.3, 0.6), 199).unwrap();
        let sim = GaussianSimulator::new(&acf, 200).unwrap();
        let v: Vec<f64> = sim.prediction_variances().collect();
        assert!(v.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn rejects_short_acf_and_breakdown() {
        let acf = AcfSequence::new(vec![1.0, 0.5]).unwrap();
        assert!(GaussianSimulator::new(&acf, 3).is_err());
        // |γ(1)| = γ(0) makes the 2x2 Toeplitz matrix singular.
        let acf = AcfSequence::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(GaussianSimulator::new(&acf, 3), Err(Error::InvalidAcf(_))));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let acf = arfima_acf(&ArfimaModel::ar1(0.2, 0.3), 99).unwrap();
        let a = simulate_gaussian(&acf, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = simulate_gaussian(&acf, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn lag_one_autocorrelation_of_simulated_fractional_noise() {
        let t = 2000;
        let acf = arfima_acf(&ArfimaModel::fractional_noise(0.4), t - 1).unwrap();
        let sim = GaussianSimulator::new(&acf, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let reps = 500;
        // Known zero mean: lag-0 and lag-1 sample moments are unbiased, so the
        // ratio of their replication means estimates ρ(1) consistently.
        let (mut c0, mut c1) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
        for _ in 0..reps {
            let y = sim.sample(&mut rng);
            c0.push(y.iter().map(|v| v * v).sum::<f64>() / t as f64);
            c1.push(y.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (t - 1) as f64);
        }
        let n = reps as f64;
        let m0 = c0.iter().sum::<f64>() / n;
        let m1 = c1.iter().sum::<f64>() / n;
        let ratio = m1 / m0;
        // delta-method standard error of m1 / m0
        let resid: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| (b - ratio * a) / m0).collect();
        let rm = resid.iter().sum::<f64>() / n;
        let se = (resid.iter().map(|r| (r - rm).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let target = 0.4 / 0.6;
        assert!((ratio - target).abs() <= 3.0 * se, "ρ1 estimate {ratio}, target {target}, se {se}");
    }

    #[test]
    fn sample_variance_matches_gamma0() {
        let t = 200;
        let acf = arfima_acf(&ArfimaModel::ar1(0.2, 0.3), t - 1).unwrap();
        let sim = GaussianSimulator::new(&acf, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let reps = 1000;
        // Zero-mean process: use the known mean so the estimator is unbiased for γ(0).
        let vars: Vec<f64> = (0..reps)
            .map(|_| sim.sample(&mut rng).iter().map(|v| v * v).sum::<f64>() / t as f64)
            .collect();
        let m = vars.iter().sum::<f64>() / reps as f64;
        let sd = (vars.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((m - acf.variance()).abs() <= 4.0 * se, "{m} vs {}", acf.variance());
    }
}
