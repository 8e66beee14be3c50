//! Fractional differencing `(1 - z)^d` on finite series.
//!
//! Coefficients come from the multiplicative recursion
//! `a_j = a_{j-1} * (j - 1 - d) / j`, which stays finite for any length,
//! unlike gamma-function ratios. Filtering is an expanding-window
//! convolution with no presample values: the output at (0-based) index `t`
//! only sees `series[0..=t]`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The first `n` binomial coefficients of `(1 - z)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracCoeffs {
    d: f64,
    coeffs: Vec<f64>,
}

impl FracCoeffs {
    pub fn new(d: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("coefficient count must be at least 1"));
        }
        if !d.is_finite() || d <= -1.0 {
            return Err(Error::arg(format!("memory exponent must be finite and > -1, got {d}")));
        }
        let mut coeffs = Vec::with_capacity(n);
        coeffs.push(1.0);
        for j in 1..n {
            let prev = coeffs[j - 1];
            coeffs.push(prev * ((j as f64 - 1.0 - d) / j as f64));
        }
        Ok(FracCoeffs { d, coeffs })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Applies the truncated filter to `series`. Needs at least as many
    /// coefficients as the series has observations.
    pub fn apply(&self, series: &[f64]) -> Result<Vec<f64>> {
        if series.is_empty() {
            return Err(Error::arg("cannot filter an empty series"));
        }
        if series.len() > self.coeffs.len() {
            return Err(Error::arg(format!(
                "series length {} exceeds the {} available filter coefficients",
                series.len(),
                self.coeffs.len()
            )));
        }
        let mut out = vec![0.0; series.len()];
        self.apply_into(series, &mut out);
        Ok(out)
    }

    /// Unchecked variant for hot loops; `out` and `series` must have equal
    /// length no greater than the coefficient count.
    pub(crate) fn apply_into(&self, series: &[f64], out: &mut [f64]) {
        debug_assert_eq!(series.len(), out.len());
        let a = &self.coeffs;
        for (t, slot) in out.iter_mut().enumerate() {
            // sum_{j=0}^{t} a_j * x_{t-j}
            let head = &a[..=t];
            let tail = &series[..=t];
            let mut acc = 0.0;
            for (aj, x) in head.iter().zip(tail.iter().rev()) {
                acc += aj * x;
            }
            *slot = acc;
        }
    }
}

/// First `n` coefficients of `(1 - z)^d`.
pub fn frac_coeffs(d: f64, n: usize) -> Result<FracCoeffs> {
    FracCoeffs::new(d, n)
}

/// Expanding-window fractional difference of `series` with exponent `d`.
/// Passing `-d` applies the inverse filter.
pub fn frac_filter(series: &[f64], d: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::arg("cannot filter an empty series"));
    }
    FracCoeffs::new(d, series.len())?.apply(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coefficient_examples() {
        let c = frac_coeffs(0.4, 3).unwrap();
        assert_eq!(c.as_slice()[0], 1.0);
        assert_relative_eq!(c.as_slice()[1], -0.4, epsilon = 1e-15);
        assert_relative_eq!(c.as_slice()[2], -0.12, epsilon = 1e-15);

        assert_eq!(frac_coeffs(0.0, 5).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(frac_coeffs(1.0, 4).unwrap().as_slice(), &[1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn integer_exponent_truncates() {
        let c = frac_coeffs(2.0, 8).unwrap();
        assert_eq!(&c.as_slice()[..3], &[1.0, -2.0, 1.0]);
        assert!(c.as_slice()[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(frac_coeffs(0.3, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(frac_coeffs(-1.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(frac_filter(&[], 0.2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn long_coefficient_runs_stay_finite() {
        let c = frac_coeffs(-0.49, 100_000).unwrap();
        assert!(c.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn filter_examples() {
        let c = 3.25;
        assert_eq!(frac_filter(&[c, c, c], 0.0).unwrap(), vec![c, c, c]);
        let imp = frac_filter(&[1.0, 0.0, 0.0], 0.4).unwrap();
        assert_relative_eq!(imp[0], 1.0);
        assert_relative_eq!(imp[1], -0.4, epsilon = 1e-15);
        assert_relative_eq!(imp[2], -0.12, epsilon = 1e-15);
    }

    #[test]
    fn round_trip_at_t256() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = frac_filter(&frac_filter(&x, 0.45).unwrap(), -0.45).unwrap();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-10, "relative error {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ratio_recursion_holds(d in -0.99f64..2.0, n in 2usize..200) {
            let c = frac_coeffs(d, n).unwrap();
            let a = c.as_slice();
            for j in 1..n {
                if a[j - 1] != 0.0 {
                    let expect = a[j - 1] * ((j as f64 - 1.0 - d) / j as f64);
                    prop_assert_eq!(a[j], expect);
                }
            }
        }

        #[test]
        fn linearity(
            x in proptest::collection::vec(-5.0f64..5.0, 1..120),
            d in -0.49f64..0.49,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = x.iter().rev().copied().collect();
            let comb: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = frac_filter(&comb, d).unwrap();
            let fx = frac_filter(&x, d).unwrap();
            let fy = frac_filter(&y, d).unwrap();
            for i in 0..x.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn inverse_filter_round_trips(
            x in proptest::collection::vec(-10.0f64..10.0, 1..400),
            d in -0.49f64..0.49,
        ) {
            let back = frac_filter(&frac_filter(&x, d).unwrap(), -d).unwrap();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err / norm <= 1e-10);
        }
    }
}
