//! Least-angle candidate proposal carried out entirely in correlation space.
//!
//! A sub-model is described by its signed active set and the vector of
//! current correlations between every predictor and the model's residual.
//! The equiangular direction, the inner products of each available predictor
//! with it, and the step to the next entry all follow from the predictor
//! correlation matrix alone, so a step costs `O(p s)` after an `O(s^3)` solve
//! rather than a pass over the data.

use crate::error::{FscreError, Result};
use crate::linalg::{solve_spd, Matrix};

/// Tolerance of the equi-correlation invariant.
pub const EQUICORRELATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SubModelState {
    /// Active predictor indices in entry order.
    pub active: Vec<usize>,
    /// Entry signs (`±1.0`) aligned with `active`.
    pub signs: Vec<f64>,
    /// Current correlation of every predictor with the model's residual.
    pub corr_state: Vec<f64>,
    /// Common absolute correlation of the active predictors.
    pub active_level: f64,
}

impl SubModelState {
    pub fn new(r_y: &[f64]) -> Self {
        Self {
            active: Vec::new(),
            signs: Vec::new(),
            corr_state: r_y.to_vec(),
            active_level: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Largest deviation of an active `|corr_state|` from `active_level`.
    pub fn equicorrelation_gap(&self) -> f64 {
        self.active
            .iter()
            .map(|&j| (self.corr_state[j].abs() - self.active_level).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Normalizer `(1ᵀ G⁻¹ 1)^(-1/2)` of the signed active correlation matrix `G`.
    pub a_k: f64,
    /// Equiangular weights over the active set.
    pub w: Vec<f64>,
}

/// Equiangular direction of the signed active set.
pub fn equiangular_geometry(r_x: &Matrix, state: &SubModelState) -> Result<Geometry> {
    let s = state.active.len();
    if s == 0 {
        return Err(FscreError::InvalidConfig("empty active set has no direction".into()));
    }
    let mut g = Matrix::zeros(s, s);
    for (a, (&i, &si)) in state.active.iter().zip(&state.signs).enumerate() {
        for (b, (&j, &sj)) in state.active.iter().zip(&state.signs).enumerate() {
            g[(a, b)] = si * r_x[(i, j)] * sj;
        }
    }
    let x = solve_spd(&g, &vec![1.0; s])?;
    let total: f64 = x.iter().sum();
    if !(total > 0.0) {
        return Err(FscreError::NotPositiveDefinite { index: 0, pivot: total });
    }
    let a_k = total.powf(-0.5);
    Ok(Geometry {
        a_k,
        w: x.into_iter().map(|v| a_k * v).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarsProposal {
    pub candidate: Option<usize>,
    /// Step to the candidate's entry, `f64::INFINITY` when there is none.
    /// For an empty model this is the entry correlation `|r_j*|`.
    pub step: f64,
    /// `(j, a_j)` for every available predictor.
    pub inner: Vec<(usize, f64)>,
    pub entry_sign: f64,
    /// Inner product of the direction with each signed active predictor.
    pub a_active: f64,
}

impl LarsProposal {
    fn none(inner: Vec<(usize, f64)>, a_active: f64) -> Self {
        Self {
            candidate: None,
            step: f64::INFINITY,
            inner,
            entry_sign: 1.0,
            a_active,
        }
    }
}

fn sign_of(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Next predictor to enter `state` from `available`, with its step.
pub fn propose(r_x: &Matrix, state: &SubModelState, available: &[usize]) -> Result<LarsProposal> {
    let r = &state.corr_state;
    if state.is_empty() {
        let mut best: Option<usize> = None;
        for &j in available {
            if best.is_none_or(|b| r[j].abs() > r[b].abs()) {
                best = Some(j);
            }
        }
        let Some(jstar) = best else {
            return Ok(LarsProposal::none(Vec::new(), 1.0));
        };
        let s = sign_of(r[jstar]);
        let inner = available.iter().map(|&j| (j, s * r_x[(j, jstar)])).collect();
        return Ok(LarsProposal {
            candidate: Some(jstar),
            step: r[jstar].abs(),
            inner,
            entry_sign: s,
            a_active: 1.0,
        });
    }

    let geo = equiangular_geometry(r_x, state)?;
    let r_a = state.active_level;
    let mut best: Option<(usize, f64, f64)> = None;
    let mut inner = Vec::with_capacity(available.len());
    for &j in available {
        let a_j: f64 = state
            .active
            .iter()
            .zip(&state.signs)
            .zip(&geo.w)
            .map(|((&i, &si), &wi)| si * r_x[(j, i)] * wi)
            .sum();
        inner.push((j, a_j));
        let step = |num: f64, den: f64| {
            let g = num / den;
            if den > 0.0 && g > 0.0 {
                g
            } else {
                f64::INFINITY
            }
        };
        let plus = step(r_a - r[j], geo.a_k - a_j);
        let minus = step(r_a + r[j], geo.a_k + a_j);
        let gamma = plus.min(minus);
        if gamma.is_finite() && best.is_none_or(|(_, g, _)| gamma < g) {
            best = Some((j, gamma, a_j));
        }
    }
    let Some((jstar, gamma, a_star)) = best else {
        return Ok(LarsProposal::none(inner, geo.a_k));
    };
    let post = r[jstar] - gamma * a_star;
    let entry_sign = if post.abs() < 1e-12 { 1.0 } else { sign_of(post) };
    Ok(LarsProposal {
        candidate: Some(jstar),
        step: gamma,
        inner,
        entry_sign,
        a_active: geo.a_k,
    })
}

/// Moves `state` by the proposal's step and admits its candidate.
///
/// The first entry of an empty model opens the path at the candidate's
/// correlation level without moving the residual; later entries move every
/// available and active correlation along the equiangular direction.
pub fn apply_step(
    state: &SubModelState,
    prop: &LarsProposal,
    available: &[usize],
) -> Result<SubModelState> {
    let jstar = prop
        .candidate
        .ok_or_else(|| FscreError::InvariantViolation("proposal has no candidate".into()))?;
    if !available.contains(&jstar) {
        return Err(FscreError::InvariantViolation(format!(
            "candidate {jstar} is not available"
        )));
    }
    let mut next = state.clone();
    if state.is_empty() {
        next.active_level = state.corr_state[jstar].abs();
    } else {
        let gamma = prop.step;
        for &(j, a_j) in &prop.inner {
            next.corr_state[j] -= gamma * a_j;
        }
        for (&i, &si) in state.active.iter().zip(&state.signs) {
            next.corr_state[i] -= gamma * si * prop.a_active;
        }
        next.active_level -= gamma * prop.a_active;
    }
    next.active.push(jstar);
    next.signs.push(prop.entry_sign);
    let gap = next.equicorrelation_gap();
    if !(gap <= EQUICORRELATION_TOL) {
        return Err(FscreError::InvariantViolation(format!(
            "active correlations drifted {gap:e} from the common level"
        )));
    }
    Ok(next)
}
