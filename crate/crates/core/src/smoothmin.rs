//! Softmin (negative log-sum-exp) with its convex-combination weights.
//!
//! `softmin_β{s} = -(1/β) log Σ exp(-β s_i)` is a smooth under-approximation of
//! `min s_i`, bounded by `min s - ln(n)/β ≤ softmin ≤ min s`. Its gradient with
//! respect to `s_i` is the weight `w_i = exp(-β s_i) / Σ_j exp(-β s_j)`, so any
//! quantity built on top of it differentiates as a weighted sum of the term
//! gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftminResult {
    pub value: f64,
    /// One weight per input term. Nonnegative and summing to one; a weight
    /// underflows to exactly zero when its term is more than ~745/β above the minimum.
    pub weights: Vec<f64>,
}

impl SoftminResult {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Evaluates the softmin of `values` with sharpness `beta`.
///
/// All terms are shifted by their minimum before exponentiation, so inputs of
/// any finite magnitude evaluate without overflow.
pub fn softmin(values: &[f64], beta: f64) -> Result<SoftminResult> {
    if values.is_empty() {
        return Err(Error::contract("softmin of an empty list"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::contract(format!(
            "softmin beta must be positive and finite, got {beta}"
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::contract(format!("softmin input {bad} is not finite")));
    }

    let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = values.iter().map(|&s| (-beta * (s - shift)).exp()).collect();
    // The minimizing term contributes exactly 1, so sum >= 1 and ln(sum) >= 0.
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(SoftminResult {
        value: shift - sum.ln() / beta,
        weights,
    })
}

/// Convenience wrapper returning only the value.
pub fn softmin_value(values: &[f64], beta: f64) -> Result<f64> {
    softmin(values, beta).map(|r| r.value)
}
