//! Log-domain weight arithmetic and the multinomial selection primitive.

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// `log Σ exp(v_i)` with max-shift stabilisation.
///
/// `-inf` entries are allowed as long as at least one entry is finite.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("log_sum_exp of an empty list");
    }
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v.is_nan() || v == f64::INFINITY {
            return invalid(format!("log_sum_exp input {v} is not finite"));
        }
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    Ok(max + lse_shifted(values, max).ln())
}

/// Unchecked kernel of [`log_sum_exp`] for hot loops: `Σ exp(v_i - max)`.
#[inline]
pub(crate) fn lse_shifted(values: &[f64], max: f64) -> f64 {
    values.iter().map(|&v| (v - max).exp()).sum()
}

/// Unchecked log-sum-exp used inside the particle passes, where the inputs
/// are known to contain a finite maximum.
#[inline]
pub(crate) fn lse_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + lse_shifted(values, max).ln()
}

/// A vector of unnormalised log weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightVector {
    pub log_values: Vec<f64>,
}

impl LogWeightVector {
    pub fn new(log_values: Vec<f64>) -> Self {
        Self { log_values }
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    pub fn log_total(&self) -> Result<f64> {
        log_sum_exp(&self.log_values)
    }

    pub fn normalize(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_values)
    }
}

impl From<Vec<f64>> for LogWeightVector {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

/// Probabilities `p_i = exp(w_i - logsumexp(w))`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_weights)?;
    let mut probs: Vec<f64> = log_weights.iter().map(|&w| (w - total).exp()).collect();
    // Remove the last ulp of drift so that the sum is 1 to rounding.
    let s: f64 = probs.iter().sum();
    if s != 1.0 {
        probs.iter_mut().for_each(|p| *p /= s);
    }
    Ok(probs)
}

/// Cumulative table for repeated categorical draws from one distribution.
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    cumulative: Vec<f64>,
}

impl CategoricalTable {
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return invalid("categorical distribution with no atoms");
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            if !(p >= 0.0) || !p.is_finite() {
                return invalid(format!("probability {p} is negative or not finite"));
            }
            acc += p;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-9 {
            return invalid(format!("probabilities sum to {acc}, expected 1"));
        }
        Ok(Self { cumulative })
    }

    /// Builds the table directly from unnormalised log weights.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        Self::new(&normalize_log_weights(log_weights)?)
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // Guard against u landing on the total after rounding and against
        // trailing zero-probability atoms.
        let mut idx = idx.min(self.cumulative.len() - 1);
        while idx > 0 && self.cumulative[idx] == self.cumulative[idx - 1] {
            idx -= 1;
        }
        idx
    }
}

/// Draws index `i` with probability `probs[i]`.
pub fn categorical_sample<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    Ok(CategoricalTable::new(probs)?.sample(rng))
}
