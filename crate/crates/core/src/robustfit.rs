//! MM-estimation of each sub-model on the imputed data and the averaged
//! ensemble predictor.

use crate::error::{FscreError, Result};
use crate::foundation::ImputationResult;
use crate::linalg::{weighted_least_squares, LinearFit, Matrix};
use crate::rng::RandomSource;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// 50% breakdown constant for the S-stage.
pub const C_BREAKDOWN: f64 = 1.5476;
/// 95% Gaussian efficiency constant for the M-stage.
pub const C_EFFICIENCY: f64 = 4.685;
/// Version stamped into serialized models.
pub const MODEL_VERSION: u32 = 1;

/// Tukey bisquare loss, normalized so that its maximum is 1.
pub fn rho_bisquare(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        1.0
    } else {
        let s = 1.0 - t * t;
        1.0 - s * s * s
    }
}

/// IRLS weight `psi(u)/u` of the bisquare, up to a constant factor.
pub fn weight_bisquare(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        s * s
    }
}

fn mean_rho(residuals: &[f64], sigma: f64, c: f64) -> f64 {
    residuals.iter().map(|r| rho_bisquare(r / sigma, c)).sum::<f64>() / residuals.len() as f64
}

/// M-scale `sigma` with `mean(rho(r / sigma)) = 0.5`, by bisection.
///
/// Returns 0 when at least half the residuals are exactly zero (exact fit of
/// a majority), including the all-zero case.
pub fn s_scale(residuals: &[f64], c0: f64) -> f64 {
    let n = residuals.len();
    let nonzero = residuals.iter().filter(|r| **r != 0.0).count();
    if n == 0 || 2 * nonzero <= n {
        return 0.0;
    }
    let max_abs = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    // mean rho is decreasing in sigma; bracket the root
    let mut hi = 10.0 * max_abs / c0;
    let mut lo = hi;
    while mean_rho(residuals, lo, c0) <= 0.5 {
        hi = lo;
        lo *= 0.5;
        if lo == 0.0 {
            return 0.0;
        }
    }
    while (hi - lo) > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mean_rho(residuals, mid, c0) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmConfig {
    pub c0: f64,
    pub c1: f64,
    /// Random elemental-subset starts in addition to the least-squares start.
    pub starts: usize,
    /// IRWLS refinements per S-stage start.
    pub s_iterations: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            c0: C_BREAKDOWN,
            c1: C_EFFICIENCY,
            starts: 20,
            s_iterations: 50,
            max_iterations: 500,
            tolerance: 1e-8,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// S-scale of the residuals; 0 for an exact fit.
    pub scale: f64,
    pub converged: bool,
    pub iterations: usize,
    /// M-stage objective `sum rho(r_i / scale)` after each iterate.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl RobustFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

fn residuals(cols: &[&[f64]], y: &[f64], fit: &LinearFit) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] - fit.intercept - cols.iter().zip(&fit.coefficients).map(|(c, b)| b * c[i]).sum::<f64>())
        .collect()
}

fn max_change(a: &LinearFit, b: &LinearFit) -> (f64, f64) {
    let mut diff = (a.intercept - b.intercept).abs();
    let mut size = a.intercept.abs();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        diff = diff.max((x - y).abs());
        size = size.max(x.abs());
    }
    (diff, size)
}

/// Refines a start by S-type IRWLS; returns the fit and its S-scale.
fn refine_s(cols: &[&[f64]], y: &[f64], start: LinearFit, intercept: bool, cfg: &MmConfig) -> (LinearFit, f64) {
    let mut fit = start;
    let mut sigma = s_scale(&residuals(cols, y, &fit), cfg.c0);
    for _ in 0..cfg.s_iterations {
        if sigma == 0.0 {
            break;
        }
        let r = residuals(cols, y, &fit);
        let w: Vec<f64> = r.iter().map(|ri| weight_bisquare(ri / sigma, cfg.c0)).collect();
        let Ok(next) = weighted_least_squares(cols, y, Some(&w), intercept) else { break };
        let next_sigma = s_scale(&residuals(cols, y, &next), cfg.c0);
        if next_sigma > sigma {
            break;
        }
        let (diff, size) = max_change(&next, &fit);
        fit = next;
        let done = (sigma - next_sigma) <= 1e-12 * sigma && diff <= cfg.tolerance * (1.0 + size);
        sigma = next_sigma;
        if done {
            break;
        }
    }
    (fit, sigma)
}

/// MM regression with the default configuration.
pub fn mm_fit(x: &Matrix, y: &[f64], intercept: bool) -> Result<RobustFit> {
    mm_fit_with(x, y, intercept, &MmConfig::default())
}

pub fn mm_fit_with(x: &Matrix, y: &[f64], intercept: bool, cfg: &MmConfig) -> Result<RobustFit> {
    let cols = x.columns();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    mm_fit_columns(&refs, y, intercept, cfg)
}

/// MM regression on column-major predictors (zero columns allowed).
pub fn mm_fit_columns(cols: &[&[f64]], y: &[f64], intercept: bool, cfg: &MmConfig) -> Result<RobustFit> {
    let n = y.len();
    let q = cols.len() + usize::from(intercept);
    if q >= n {
        return Err(FscreError::InvalidConfig(format!(
            "{} coefficients need more than {n} observations",
            q
        )));
    }
    if q == 0 {
        return Ok(RobustFit {
            coefficients: Vec::new(),
            intercept: 0.0,
            scale: s_scale(y, cfg.c0),
            converged: true,
            iterations: 0,
            objective_trace: Vec::new(),
        });
    }

    // S-stage
    let ols = weighted_least_squares(cols, y, None, intercept)?;
    let (mut best, mut best_sigma) = refine_s(cols, y, ols, intercept, cfg);
    let mut rng = RandomSource::new(cfg.seed);
    let mut w = vec![0.0; n];
    for _ in 0..cfg.starts {
        if best_sigma == 0.0 {
            break;
        }
        let rows = rng.sample_without_replacement(n, q);
        w.iter_mut().for_each(|v| *v = 0.0);
        rows.iter().for_each(|&i| w[i] = 1.0);
        let Ok(start) = weighted_least_squares(cols, y, Some(&w), intercept) else { continue };
        let (fit, sigma) = refine_s(cols, y, start, intercept, cfg);
        if sigma < best_sigma {
            best = fit;
            best_sigma = sigma;
        }
    }
    if best_sigma == 0.0 {
        return Ok(RobustFit {
            coefficients: best.coefficients,
            intercept: best.intercept,
            scale: 0.0,
            converged: true,
            iterations: 0,
            objective_trace: Vec::new(),
        });
    }

    // M-stage with the scale held fixed
    let objective = |f: &LinearFit| -> f64 {
        residuals(cols, y, f).iter().map(|r| rho_bisquare(r / best_sigma, cfg.c1)).sum()
    };
    let mut fit = best;
    let mut trace = vec![objective(&fit)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let r = residuals(cols, y, &fit);
        let wt: Vec<f64> = r.iter().map(|ri| weight_bisquare(ri / best_sigma, cfg.c1)).collect();
        let next = match weighted_least_squares(cols, y, Some(&wt), intercept) {
            Ok(f) => f,
            Err(FscreError::RankDeficient) => break,
            Err(e) => return Err(e),
        };
        let (diff, size) = max_change(&next, &fit);
        fit = next;
        trace.push(objective(&fit));
        if diff <= cfg.tolerance * (1.0 + size) {
            converged = true;
            break;
        }
    }
    Ok(RobustFit {
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        scale: best_sigma,
        converged,
        iterations,
        objective_trace: trace,
    })
}

/// K robust sub-model fits and their index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub version: u32,
    /// Number of predictors the model expects.
    pub p: usize,
    #[serde(default)]
    pub names: Vec<String>,
    pub intercept: bool,
    pub sets: Vec<Vec<usize>>,
    pub fits: Vec<RobustFit>,
}

impl EnsembleModel {
    pub fn new(p: usize, intercept: bool, sets: Vec<Vec<usize>>, fits: Vec<RobustFit>) -> Result<Self> {
        if sets.len() != fits.len() {
            return Err(FscreError::shape(format!("{} fits", sets.len()), fits.len()));
        }
        for (s, f) in sets.iter().zip(&fits) {
            if s.len() != f.coefficients.len() || s.iter().any(|&j| j >= p) {
                return Err(FscreError::InvalidConfig("fit does not match its index set".into()));
            }
        }
        Ok(Self {
            version: MODEL_VERSION,
            p,
            names: Vec::new(),
            intercept,
            sets,
            fits,
        })
    }

    pub fn k(&self) -> usize {
        self.fits.len()
    }

    /// Mean of the sub-model predictions for each row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.p {
            return Err(FscreError::shape(format!("{} columns", self.p), format!("{} columns", x.cols())));
        }
        let k = self.k() as f64;
        Ok((0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.sets
                    .iter()
                    .zip(&self.fits)
                    .map(|(s, f)| f.intercept + s.iter().zip(&f.coefficients).map(|(&j, b)| b * row[j]).sum::<f64>())
                    .sum::<f64>()
                    / k
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: EnsembleModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(FscreError::Parse(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                model.version
            )));
        }
        let checked = EnsembleModel::new(model.p, model.intercept, model.sets, model.fits)?;
        Ok(EnsembleModel { names: model.names, ..checked })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        EnsembleModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Fits every sub-model on the imputed data, in parallel.
pub fn fit_ensemble(imp: &ImputationResult, sets: &[Vec<usize>], intercept: bool) -> Result<EnsembleModel> {
    let y = imp.y();
    let cols = imp.z_imp.columns();
    let cfg = MmConfig::default();
    let fits = sets
        .par_iter()
        .map(|s| {
            let refs: Vec<&[f64]> = s.iter().map(|&j| cols[j + 1].as_slice()).collect();
            mm_fit_columns(&refs, &y, intercept, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(imp.p(), intercept, sets.to_vec(), fits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisquare_shape() {
        assert_eq!(rho_bisquare(0.0, 1.0), 0.0);
        assert_eq!(rho_bisquare(2.0, 1.0), 1.0);
        assert!((rho_bisquare(0.5, 1.0) - (1.0 - 0.75f64.powi(3))).abs() < 1e-15);
        assert_eq!(weight_bisquare(1.5, 1.0), 0.0);
    }

    #[test]
    fn scale_is_equivariant() {
        let r = [1.0, -1.0, 1.0, -1.0, 1.0];
        let s1 = s_scale(&r, C_BREAKDOWN);
        let s2 = s_scale(&r.map(|v| 2.0 * v), C_BREAKDOWN);
        assert!((s2 - 2.0 * s1).abs() < 1e-9 * s1);
    }

    #[test]
    fn scale_of_plus_minus_one_matches_grid_search() {
        let c = C_BREAKDOWN;
        let got = s_scale(&[1.0, -1.0], c);
        // grid search on the defining equation, refined over shrinking windows
        let f = |s: f64| (rho_bisquare(1.0 / s, c) - 0.5).abs();
        let (mut lo, mut hi) = (0.01, 10.0);
        let mut best = lo;
        for _ in 0..12 {
            let step = (hi - lo) / 1000.0;
            best = (0..=1000)
                .map(|k| lo + step * k as f64)
                .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                .unwrap();
            lo = best - step;
            hi = best + step;
        }
        assert!((got - best).abs() < 1e-8, "{got} vs {best}");
        let closed = 1.0 / (c * (1.0 - 0.5f64.powf(1.0 / 3.0)).sqrt());
        assert!((got - closed).abs() < 1e-9);
    }

    #[test]
    fn scale_is_consistent_for_normal_residuals() {
        let mut rng = RandomSource::new(100);
        let r: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
        let s = s_scale(&r, C_BREAKDOWN);
        assert!((s - 1.0).abs() < 0.02, "{s}");
    }

    #[test]
    fn zero_residuals_give_zero_scale() {
        assert_eq!(s_scale(&[0.0, 0.0, 0.0], C_BREAKDOWN), 0.0);
        assert_eq!(s_scale(&[0.0, 0.0, 3.0, 0.0], C_BREAKDOWN), 0.0);
    }

    fn design(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = RandomSource::new(seed);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        Matrix::from_columns(&cols).unwrap()
    }

    #[test]
    fn exact_fit_is_a_fixed_point() {
        let x = design(30, 3, 1);
        let beta = [1.5, -2.0, 0.25];
        let y: Vec<f64> = (0..30).map(|i| 4.0 + crate::linalg::dot(x.row(i), &beta)).collect();
        let fit = mm_fit(&x, &y, true).unwrap();
        for (b, t) in fit.coefficients.iter().zip(beta) {
            assert!((b - t).abs() < 1e-8);
        }
        assert!((fit.intercept - 4.0).abs() < 1e-8);
        assert!(fit.scale < 1e-8);
    }

    #[test]
    fn regression_equivariance() {
        let x = design(60, 2, 2);
        let mut rng = RandomSource::new(3);
        let y: Vec<f64> = (0..60).map(|i| x.row(i)[0] + rng.normal()).collect();
        let b = [3.0, -1.0];
        let y2: Vec<f64> = (0..60).map(|i| y[i] + crate::linalg::dot(x.row(i), &b)).collect();
        let f1 = mm_fit(&x, &y, true).unwrap();
        let f2 = mm_fit(&x, &y2, true).unwrap();
        for k in 0..2 {
            assert!((f2.coefficients[k] - f1.coefficients[k] - b[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn resists_response_outliers() {
        let n = 100;
        let mut rng = RandomSource::new(4);
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let clean: Vec<f64> = xs.iter().map(|v| 1.0 + 2.0 * v + 0.5 * rng.normal()).collect();
        let mut dirty = clean.clone();
        for (i, v) in dirty.iter_mut().enumerate() {
            if i % 5 == 0 {
                *v = 50.0;
            }
        }
        let x = Matrix::from_columns(&[xs]).unwrap();
        let clean_ols = crate::linalg::ols_fit(&x, &clean, true).unwrap().coefficients[0];
        let dirty_ols = crate::linalg::ols_fit(&x, &dirty, true).unwrap().coefficients[0];
        let mm = mm_fit(&x, &dirty, true).unwrap().coefficients[0];
        assert!((mm - clean_ols).abs() < 0.05, "{mm} vs {clean_ols}");
        assert!((dirty_ols - clean_ols).abs() > 0.5, "{dirty_ols}");
    }

    #[test]
    fn m_stage_descends() {
        let x = design(80, 3, 5);
        let mut rng = RandomSource::new(6);
        let y: Vec<f64> = (0..80)
            .map(|i| {
                let base = x.row(i)[1] - x.row(i)[2] + rng.normal();
                if i % 7 == 0 { base + 20.0 } else { base }
            })
            .collect();
        let fit = mm_fit(&x, &y, true).unwrap();
        assert!(fit.converged);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{:?}", w);
        }
    }

    #[test]
    fn empty_models() {
        let y = [1.0, 2.0, 3.0, 100.0, 2.5];
        let with = mm_fit_columns(&[], &y, true, &MmConfig::default()).unwrap();
        assert!(with.intercept > 1.0 && with.intercept < 3.0);
        let without = mm_fit_columns(&[], &y, false, &MmConfig::default()).unwrap();
        assert_eq!(without.intercept, 0.0);
    }

    #[test]
    fn too_many_coefficients_rejected() {
        let x = design(3, 2, 7);
        assert!(mm_fit(&x, &[1.0, 2.0, 3.0], true).is_err());
    }

    fn fit_with(intercept: f64, coefficients: Vec<f64>) -> RobustFit {
        RobustFit {
            coefficients,
            intercept,
            scale: 1.0,
            converged: true,
            iterations: 1,
            objective_trace: Vec::new(),
        }
    }

    #[test]
    fn prediction_is_the_mean_of_sub_models() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 0.5]]).unwrap();
        let one = EnsembleModel::new(3, true, vec![vec![0, 2]], vec![fit_with(1.0, vec![2.0, -1.0])]).unwrap();
        assert_eq!(one.predict(&x).unwrap(), vec![0.0, -1.5]);
        let twin = EnsembleModel::new(
            3,
            true,
            vec![vec![0, 2], vec![0, 2]],
            vec![fit_with(1.0, vec![2.0, -1.0]), fit_with(1.0, vec![2.0, -1.0])],
        )
        .unwrap();
        assert_eq!(twin.predict(&x).unwrap(), one.predict(&x).unwrap());
        let two = EnsembleModel::new(
            3,
            true,
            vec![vec![1], vec![]],
            vec![fit_with(0.0, vec![4.0]), fit_with(2.0, vec![])],
        )
        .unwrap();
        assert_eq!(two.predict(&x).unwrap(), vec![(8.0 + 2.0) / 2.0, (0.0 + 2.0) / 2.0]);
        assert!(two.predict(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let m = EnsembleModel::new(2, false, vec![vec![1]], vec![fit_with(0.0, vec![0.1])]).unwrap();
        let back = EnsembleModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bumped = m.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(EnsembleModel::from_json(&bumped).is_err());
    }
}
