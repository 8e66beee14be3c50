//! Finite-order autoregressive approximations.
//!
//! Coefficients use the prediction-error convention
//! `ε_h(t) = Σ_{j=0}^{h} φ_h(j) y(t-j)` with `φ_h(0) = 1`, so the one-step
//! predictor is `-Σ_{j≥1} φ_h(j) y(t-j)`. Series are used as given; nothing
//! here removes a mean.

use crate::arfima::AcfSequence;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// φ_h(1..=h); φ_h(0) = 1 is implicit.
    pub phi: Vec<f64>,
    /// Prediction error variance σ_h².
    pub sigma2: f64,
}

impl ArModel {
    pub fn white_noise(sigma2: f64) -> Self {
        ArModel { phi: Vec::new(), sigma2 }
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// True when `1 + Σ φ(j) z^j` has every root strictly outside the unit circle.
    pub fn is_stable(&self) -> bool {
        reflection_coefficients(&self.phi).is_some_and(|k| k.iter().all(|r| r.abs() < 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArFitter {
    #[default]
    Burg,
    YuleWalker,
    LeastSquares,
}

impl ArFitter {
    pub fn fit(self, series: &[f64], h: usize) -> Result<ArModel> {
        match self {
            ArFitter::Burg => burg_fit(series, h),
            ArFitter::YuleWalker => yw_fit(series, h),
            ArFitter::LeastSquares => ls_fit(series, h),
        }
    }
}

/// Step-down (Schur-Cohn) recursion: the reflection coefficients of the
/// monic polynomial `1 + Σ a_j z^j`, highest order first reduced. Returns
/// `None` if a coefficient of magnitude one makes the recursion undefined.
pub fn reflection_coefficients(tail: &[f64]) -> Option<Vec<f64>> {
    let mut a = tail.to_vec();
    let mut ks = vec![0.0; a.len()];
    for m in (1..=a.len()).rev() {
        let k = a[m - 1];
        ks[m - 1] = k;
        let denom = 1.0 - k * k;
        if denom <= 0.0 || !denom.is_finite() {
            return None;
        }
        let prev: Vec<f64> = (0..m - 1).map(|j| (a[j] - k * a[m - 2 - j]) / denom).collect();
        a = prev;
    }
    Some(ks)
}

/// Default maximum AR order: `max(1, floor(ln(T)^2))`, capped at `floor(T / 4)`.
pub fn default_max_order(len: usize) -> usize {
    let ln = (len.max(1) as f64).ln();
    let h = ((ln * ln).floor() as usize).max(1);
    h.min(len / 4)
}

/// Durbin-Levinson solution of the Yule-Walker equations for every order
/// `0..=h`.
pub fn levinson_solve(acf: &AcfSequence, h: usize) -> Result<Vec<ArModel>> {
    let g = acf.values();
    if g.len() <= h {
        return Err(Error::arg(format!("need autocovariances through lag {h}, have {}", g.len() - 1)));
    }
    let mut models = Vec::with_capacity(h + 1);
    let mut phi: Vec<f64> = Vec::with_capacity(h);
    let mut v = g[0];
    models.push(ArModel::white_noise(v));
    for m in 1..=h {
        // k = -(γ(m) + Σ_{j<m} φ(j) γ(m-j)) / v
        let mut acc = g[m];
        for (j, p) in phi.iter().enumerate() {
            acc += p * g[m - 1 - j];
        }
        let k = -acc / v;
        let mut next = Vec::with_capacity(m);
        for j in 0..m - 1 {
            next.push(phi[j] + k * phi[m - 2 - j]);
        }
        next.push(k);
        v *= 1.0 - k * k;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidAcf(format!("prediction variance non-positive at order {m}")));
        }
        phi = next;
        models.push(ArModel { phi: phi.clone(), sigma2: v });
    }
    Ok(models)
}

fn check_fit_args(series: &[f64], h: usize) -> Result<()> {
    if series.len() <= 2 * h {
        return Err(Error::arg(format!("need T > 2h, got T = {} and h = {h}", series.len())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    Ok(())
}

/// Burg fits of every order `0..=h_max`. Burg is order-recursive, so entry
/// `h` equals `burg_fit(series, h)`.
pub fn burg_path(series: &[f64], h_max: usize) -> Result<Vec<ArModel>> {
    check_fit_args(series, h_max)?;
    let n = series.len();
    let energy = series.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if energy <= 0.0 {
        return Err(Error::InvalidInput("series has zero energy".into()));
    }
    let mut fwd = series.to_vec();
    let mut bwd = series.to_vec();
    let mut phi: Vec<f64> = Vec::with_capacity(h_max);
    let mut err = energy;
    let mut path = Vec::with_capacity(h_max + 1);
    path.push(ArModel::white_noise(err));
    for m in 1..=h_max {
        let mut num = 0.0;
        let mut den = 0.0;
        for t in m..n {
            num += fwd[t] * bwd[t - 1];
            den += fwd[t] * fwd[t] + bwd[t - 1] * bwd[t - 1];
        }
        if den <= 0.0 {
            return Err(Error::InvalidInput(format!("zero prediction-error energy at order {m}")));
        }
        let k = -2.0 * num / den;
        let mut next = Vec::with_capacity(m);
        for j in 0..m - 1 {
            next.push(phi[j] + k * phi[m - 2 - j]);
        }
        next.push(k);
        phi = next;
        for t in (m..n).rev() {
            let f = fwd[t];
            let b = bwd[t - 1];
            fwd[t] = f + k * b;
            bwd[t] = b + k * f;
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return Err(Error::InvalidInput(format!("series is perfectly predictable at order {m}")));
        }
        path.push(ArModel { phi: phi.clone(), sigma2: err });
    }
    Ok(path)
}

pub fn burg_fit(series: &[f64], h: usize) -> Result<ArModel> {
    let mut path = burg_path(series, h)?;
    Ok(path.pop().expect("path holds order 0"))
}

/// Sample autocovariances with divisor T, taken about zero.
pub fn sample_autocovariances(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| series[k..].iter().zip(series).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

pub fn yw_fit(series: &[f64], h: usize) -> Result<ArModel> {
    check_fit_args(series, h)?;
    let acf = AcfSequence::new(sample_autocovariances(series, h))
        .map_err(|_| Error::InvalidInput("series has zero energy".into()))?;
    let mut models = levinson_solve(&acf, h)
        .map_err(|e| Error::InvalidInput(format!("Yule-Walker breakdown: {e}")))?;
    Ok(models.pop().expect("orders 0..=h"))
}

/// Ordinary least squares of y(t) on y(t-1), …, y(t-h) for t = h+1..T, no intercept.
pub fn ls_fit(series: &[f64], h: usize) -> Result<ArModel> {
    check_fit_args(series, h)?;
    let n = series.len();
    let rows = n - h;
    if h == 0 {
        let s2 = series.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if s2 <= 0.0 {
            return Err(Error::InvalidInput("series has zero energy".into()));
        }
        return Ok(ArModel::white_noise(s2));
    }
    let x = DMatrix::from_fn(rows, h, |r, c| series[h + r - 1 - c]);
    let y = DVector::from_iterator(rows, series[h..].iter().copied());
    let beta = least_squares(x.clone(), &y)?;
    let resid = &y - &x * &beta;
    let sigma2 = resid.norm_squared() / rows as f64;
    if sigma2 <= 0.0 {
        return Err(Error::InvalidInput("series is perfectly predictable".into()));
    }
    Ok(ArModel { phi: beta.iter().map(|b| -b).collect(), sigma2 })
}

/// QR least squares, rejecting numerically rank-deficient designs.
pub(crate) fn least_squares(x: DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = x.ncols();
    if x.nrows() < cols {
        return Err(Error::RankDeficient(format!("{} rows for {cols} unknowns", x.nrows())));
    }
    let col_scale = (0..cols).map(|c| x.column(c).norm()).fold(0.0, f64::max);
    let qr = x.qr();
    let r = qr.r();
    let min_diag = (0..cols).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_diag > 1e-10 * col_scale) {
        return Err(Error::RankDeficient("design matrix is numerically singular".into()));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))
}

/// AIC order: argmin over h in 0..=h_max of ln σ̂_h² + 2h/T using Burg
/// variances, ties to the smaller order.
pub fn select_order_aic(series: &[f64], h_max: usize) -> Result<usize> {
    Ok(aic_path(series, h_max)?.0)
}

/// Selected order together with the Burg path it was chosen from.
pub(crate) fn aic_path(series: &[f64], h_max: usize) -> Result<(usize, Vec<ArModel>)> {
    let path = burg_path(series, h_max)?;
    let n = series.len() as f64;
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (h, m) in path.iter().enumerate() {
        let val = m.sigma2.ln() + 2.0 * h as f64 / n;
        if val < best_val {
            best_val = val;
            best = h;
        }
    }
    Ok((best, path))
}

/// Residuals of an AR fit with circular initial values, and their standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub raw: Vec<f64>,
    pub standardized: Vec<f64>,
    pub mean: f64,
    pub scale: f64,
}

/// ε̄(t) = Σ_j φ(j) y(t-j) with y(1-j) := y(T-j+1), then centred and scaled
/// by the divisor-T standard deviation.
pub fn ar_residuals(series: &[f64], model: &ArModel) -> Result<ResidualSet> {
    let n = series.len();
    let h = model.order();
    if h >= n {
        return Err(Error::arg(format!("AR order {h} must be below the series length {n}")));
    }
    let raw: Vec<f64> = (0..n)
        .map(|t| {
            let mut e = series[t];
            for (j, p) in model.phi.iter().enumerate() {
                let lag = j + 1;
                let idx = if t >= lag { t - lag } else { t + n - lag };
                e += p * series[idx];
            }
            e
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let scale = (raw.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateInput("residuals have zero spread".into()));
    }
    let standardized = raw.iter().map(|e| (e - mean) / scale).collect();
    Ok(ResidualSet { raw, standardized, mean, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arfima::{arfima_acf, ArfimaModel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// y(t) = φ y(t-1) + e(t), started from the stationary distribution.
    fn ar1_path(phi: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let e = white_noise(n, seed);
        let mut y = Vec::with_capacity(n);
        y.push(e[0] / (1.0 - phi * phi).sqrt());
        for t in 1..n {
            y.push(phi * y[t - 1] + e[t]);
        }
        (y, e)
    }

    /// Dense solve of the Yule-Walker system with φ(0) = 1.
    fn dense_yule_walker(g: &[f64], h: usize) -> (Vec<f64>, f64) {
        let a = DMatrix::from_fn(h, h, |r, c| g[r.abs_diff(c)]);
        let b = DVector::from_iterator(h, (1..=h).map(|k| -g[k]));
        let phi = a.lu().solve(&b).unwrap();
        let sigma2 = g[0] + (1..=h).map(|j| phi[j - 1] * g[j]).sum::<f64>();
        (phi.iter().copied().collect(), sigma2)
    }

    #[test]
    fn levinson_recovers_ar1() {
        let acf = arfima_acf(&ArfimaModel::ar1(0.0, 0.6), 3).unwrap();
        let models = levinson_solve(&acf, 1).unwrap();
        assert_relative_eq!(models[1].phi[0], -0.6, max_relative = 1e-14);
        assert_relative_eq!(models[1].sigma2, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn levinson_white_noise() {
        let acf = AcfSequence::new(vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let models = levinson_solve(&acf, 3).unwrap();
        assert_eq!(models.len(), 4);
        assert!(models[3].phi.iter().all(|&p| p == 0.0));
        assert_eq!(models[3].sigma2, 2.0);
    }

    #[test]
    fn levinson_matches_dense_solve() {
        let acf = arfima_acf(&ArfimaModel::fractional_noise(0.3), 12).unwrap();
        for h in 1..=12 {
            let m = &levinson_solve(&acf, h).unwrap()[h];
            let (phi, s2) = dense_yule_walker(acf.values(), h);
            for (a, b) in m.phi.iter().zip(&phi) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "h={h}: {a} vs {b}");
            }
            assert_relative_eq!(m.sigma2, s2, max_relative = 1e-9);
        }
    }

    #[test]
    fn burg_order_zero_is_mean_square() {
        let y = [1.0, -2.0, 3.0, 0.5];
        let m = burg_fit(&y, 0).unwrap();
        assert!(m.phi.is_empty());
        assert_relative_eq!(m.sigma2, (1.0 + 4.0 + 9.0 + 0.25) / 4.0);
    }

    #[test]
    fn burg_consistent_on_ar1() {
        let (y, _) = ar1_path(0.9, 5000, 3);
        let m = burg_fit(&y, 1).unwrap();
        let se = ((1.0 - 0.81) / 5000.0f64).sqrt();
        assert!((m.phi[0] + 0.9).abs() <= (3.0 * se).max(0.02), "{}", m.phi[0]);
    }

    #[test]
    fn fitters_on_white_noise() {
        let y = white_noise(10_000, 4);
        let bound = 3.0 / 100.0;
        let m = burg_fit(&y, 2).unwrap();
        assert!(m.phi.iter().all(|p| p.abs() <= bound));
        for fitter in [ArFitter::YuleWalker, ArFitter::LeastSquares] {
            let m = fitter.fit(&y, 1).unwrap();
            assert!(m.phi[0].abs() <= bound, "{fitter:?}: {}", m.phi[0]);
        }
    }

    #[test]
    fn yule_walker_consistent_on_ar1() {
        let (y, _) = ar1_path(0.5, 20_000, 8);
        let m = yw_fit(&y, 1).unwrap();
        assert!((m.phi[0] + 0.5).abs() <= 0.02);
        let ls = ls_fit(&y, 1).unwrap();
        assert!((ls.phi[0] + 0.5).abs() <= 0.02);
    }

    #[test]
    fn order_zero_fits_give_second_moment() {
        let y = [2.0, -1.0, 0.5, 1.5, -0.5];
        let ms = y.iter().map(|v| v * v).sum::<f64>() / 5.0;
        assert_relative_eq!(yw_fit(&y, 0).unwrap().sigma2, ms);
        assert_relative_eq!(ls_fit(&y, 0).unwrap().sigma2, ms);
    }

    #[test]
    fn fit_argument_errors() {
        assert!(matches!(burg_fit(&[1.0, 2.0, 3.0, 4.0], 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(burg_fit(&[0.0; 10], 1), Err(Error::InvalidInput(_))));
        assert!(matches!(yw_fit(&[0.0; 10], 1), Err(Error::InvalidInput(_))));
        // a constant series has a singular lag design for h = 2
        assert!(matches!(ls_fit(&[1.0; 12], 2), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn aic_order_selection() {
        let mut zeros = 0;
        for seed in 0..40 {
            if select_order_aic(&white_noise(2000, 100 + seed), 20).unwrap() == 0 {
                zeros += 1;
            }
        }
        assert!(zeros > 20, "white noise picked h = 0 in {zeros}/40 seeds");

        let mut positive = 0;
        for seed in 0..100 {
            let (y, _) = ar1_path(0.9, 2000, 500 + seed);
            if select_order_aic(&y, 20).unwrap() >= 1 {
                positive += 1;
            }
        }
        assert!(positive >= 99);

        assert_eq!(select_order_aic(&white_noise(50, 1), 0).unwrap(), 0);
    }

    #[test]
    fn default_max_order_values() {
        assert_eq!(default_max_order(100), 21);
        assert_eq!(default_max_order(500), 38);
        assert_eq!(default_max_order(20), 5);
        assert_eq!(default_max_order(4), 1);
    }

    #[test]
    fn residuals_of_white_noise_model() {
        let y = white_noise(50, 2);
        let r = ar_residuals(&y, &ArModel::white_noise(1.0)).unwrap();
        assert_eq!(r.raw, y);
        let mean = y.iter().sum::<f64>() / 50.0;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
        for (z, v) in r.standardized.iter().zip(&y) {
            assert_relative_eq!(*z, (v - mean) / sd, max_relative = 1e-12);
        }
    }

    #[test]
    fn residuals_recover_innovations() {
        let (y, e) = ar1_path(0.7, 300, 12);
        let r = ar_residuals(&y, &ArModel { phi: vec![-0.7], sigma2: 1.0 }).unwrap();
        for t in 1..300 {
            assert_relative_eq!(r.raw[t], e[t], epsilon = 1e-12);
        }
        assert_relative_eq!(r.raw[0], y[0] - 0.7 * y[299], epsilon = 1e-12);
    }

    #[test]
    fn residual_order_must_be_below_length() {
        let m = ArModel { phi: vec![0.1, 0.1, 0.1], sigma2: 1.0 };
        assert!(matches!(ar_residuals(&[1.0, 2.0, 3.0], &m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn step_down_detects_instability() {
        assert!(ArModel { phi: vec![-0.5], sigma2: 1.0 }.is_stable());
        assert!(!ArModel { phi: vec![-1.5], sigma2: 1.0 }.is_stable());
        // (1 - 0.5z)(1 - 0.8z) = 1 - 1.3z + 0.4z^2
        assert!(ArModel { phi: vec![-1.3, 0.4], sigma2: 1.0 }.is_stable());
        // (1 - 2z)(1 - 0.2z) = 1 - 2.2z + 0.4z^2
        assert!(!ArModel { phi: vec![-2.2, 0.4], sigma2: 1.0 }.is_stable());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn standardized_residuals_are_z_scores(seed in 0u64..10_000, h in 0usize..5) {
            let y = white_noise(120, seed);
            let m = burg_fit(&y, h).unwrap();
            let r = ar_residuals(&y, &m).unwrap();
            let n = r.standardized.len() as f64;
            let mean = r.standardized.iter().sum::<f64>() / n;
            let var = r.standardized.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-10);
        }

        #[test]
        fn burg_and_yw_variances_non_increasing(seed in 0u64..10_000) {
            let y: Vec<f64> = white_noise(200, seed).windows(3).map(|w| w[0] + 0.6 * w[1] - 0.3 * w[2]).collect();
            let path = burg_path(&y, 10).unwrap();
            prop_assert!(path.windows(2).all(|w| w[1].sigma2 <= w[0].sigma2));
            let acf = AcfSequence::new(sample_autocovariances(&y, 10)).unwrap();
            let yw = levinson_solve(&acf, 10).unwrap();
            prop_assert!(yw.windows(2).all(|w| w[1].sigma2 <= w[0].sigma2));
            prop_assert!(path.iter().all(|m| m.is_stable()));
            prop_assert!(yw.iter().all(|m| m.is_stable()));
        }

        #[test]
        fn aic_invariant_to_rescaling(seed in 0u64..10_000, scale in 0.01f64..100.0) {
            let y: Vec<f64> = white_noise(300, seed).windows(2).map(|w| w[0] + 0.5 * w[1]).collect();
            let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
            prop_assert_eq!(select_order_aic(&y, 8).unwrap(), select_order_aic(&scaled, 8).unwrap());
        }
    }
}
