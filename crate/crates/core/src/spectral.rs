//! Raw periodogram at the fundamental Fourier frequencies.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `I_T(λ_j) = |Σ_t y(t) e^{-iλ_j t}|² / (2πT)` at `λ_j = 2πj/T`, j = 1..=J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    pub ordinates: Vec<f64>,
    pub freqs: Vec<f64>,
    /// Length of the series the ordinates came from.
    pub series_len: usize,
}

impl Periodogram {
    pub fn len(&self) -> usize {
        self.ordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinates.is_empty()
    }

    /// The first `n` ordinates.
    pub fn truncate(&self, n: usize) -> Result<Periodogram> {
        if n == 0 || n > self.len() {
            return Err(Error::arg(format!("cannot keep {n} of {} ordinates", self.len())));
        }
        Ok(Periodogram {
            ordinates: self.ordinates[..n].to_vec(),
            freqs: self.freqs[..n].to_vec(),
            series_len: self.series_len,
        })
    }
}

pub fn max_fourier_index(len: usize) -> usize {
    len.saturating_sub(1) / 2
}

/// Periodogram of the raw (untapered, not demeaned) series at j = 1..=n_freqs.
pub fn periodogram(series: &[f64], n_freqs: usize) -> Result<Periodogram> {
    let n = series.len();
    let max = max_fourier_index(n);
    if n_freqs == 0 || n_freqs > max {
        return Err(Error::arg(format!("n_freqs must lie in 1..={max} for T = {n}, got {n_freqs}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let table = TwiddleTable::new(n);
    let mut ordinates = Vec::with_capacity(n_freqs);
    table.ordinates_into(series, n_freqs, &mut ordinates);
    let freqs = (1..=n_freqs).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    Ok(Periodogram { ordinates, freqs, series_len: n })
}

/// cos/sin of 2πk/T for k = 0..T, so each DFT term is a table lookup at
/// `(j·t) mod T` rather than an accumulated rotation.
#[derive(Debug, Clone)]
pub(crate) struct TwiddleTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TwiddleTable {
    pub(crate) fn new(n: usize) -> Self {
        let (cos, sin) = (0..n)
            .map(|k| {
                let w = 2.0 * PI * k as f64 / n as f64;
                (w.cos(), w.sin())
            })
            .unzip();
        TwiddleTable { cos, sin }
    }

    pub(crate) fn series_len(&self) -> usize {
        self.cos.len()
    }

    /// Appends ordinates j = 1..=n_freqs of `series` (length must match the table).
    pub(crate) fn ordinates_into(&self, series: &[f64], n_freqs: usize, out: &mut Vec<f64>) {
        let n = self.cos.len();
        debug_assert_eq!(series.len(), n);
        let norm = 1.0 / (2.0 * PI * n as f64);
        for j in 1..=n_freqs {
            let (mut re, mut im) = (0.0, 0.0);
            // Index t is 0-based; the 1-based phase shift does not change |·|².
            let mut k = 0usize;
            for &y in series {
                re += y * self.cos[k];
                im -= y * self.sin[k];
                k += j;
                if k >= n {
                    k -= n;
                }
            }
            out.push((re * re + im * im) * norm);
        }
    }
}
