//! Prediction error, selection scores and fit timing.

use crate::error::{FscreError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mspe: f64,
    pub recall: f64,
    /// Missing when nothing was selected.
    pub precision: Option<f64>,
    pub cpu_seconds: f64,
    pub selected_count: usize,
}

/// Mean squared prediction error, divided by `noise_var`.
pub fn mspe(y_true: &[f64], y_hat: &[f64], noise_var: f64) -> Result<f64> {
    if y_true.len() != y_hat.len() {
        return Err(FscreError::shape(y_true.len(), y_hat.len()));
    }
    if y_true.is_empty() {
        return Err(FscreError::shape("at least one prediction", 0));
    }
    if !(noise_var > 0.0) {
        return Err(FscreError::InvalidConfig("noise variance must be positive".into()));
    }
    let sse: f64 = y_true.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / y_true.len() as f64 / noise_var)
}

/// `(recall, precision)` of a selected set against the true active set.
pub fn selection_scores(true_active: &[usize], selected: &[usize]) -> Result<(f64, Option<f64>)> {
    let truth: BTreeSet<usize> = true_active.iter().copied().collect();
    if truth.is_empty() {
        return Err(FscreError::EmptyTruth);
    }
    let chosen: BTreeSet<usize> = selected.iter().copied().collect();
    let hits = chosen.intersection(&truth).count() as f64;
    let precision = (!chosen.is_empty()).then(|| hits / chosen.len() as f64);
    Ok((hits / truth.len() as f64, precision))
}

/// Runs `work` and returns its result with the elapsed wall-clock seconds.
pub fn timed<T>(work: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = work();
    (out, start.elapsed().as_secs_f64())
}
