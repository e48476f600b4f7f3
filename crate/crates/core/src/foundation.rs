//! Cellwise detection and imputation on the joint matrix `[y, X]`, followed by
//! sample correlations of the cleaned columns.
//!
//! The detector works in three phases. Columns are standardized with the
//! median and the normal-consistent MAD. Each cell is then predicted from the
//! most correlated partner columns through robust slopes, and cells with a
//! large standardized residual (or a large standardized value) are flagged.
//! Flagged cells are replaced by the destandardized prediction. Every rule
//! depends on the data only through quantities that flip sign with a column,
//! so the whole procedure commutes with per-column affine maps and with
//! column permutations.

use crate::data::BinaryMask;
use crate::error::{FscreError, Result};
use crate::linalg::{median_in_place, Matrix};
use rayon::prelude::*;

/// Normal consistency factor for the MAD.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// `sqrt(chi2_{0.99}(1))`, the two-sided 99% normal quantile.
pub const DEFAULT_CUTOFF: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq)]
pub struct DdcConfig {
    /// Flag threshold on absolute standardized values and residuals.
    pub cutoff: f64,
    /// Maximum number of partner columns used to predict a column.
    pub max_neighbors: usize,
    /// Partners need at least this absolute robust correlation.
    pub min_partner_corr: f64,
    /// Fraction of the largest absolute products dropped from each pairwise
    /// correlation.
    pub trim_fraction: f64,
    /// Rows with `|z_ih|` at or below this are skipped when estimating slopes.
    pub slope_floor: f64,
}

impl Default for DdcConfig {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            max_neighbors: 15,
            min_partner_corr: 0.5,
            trim_fraction: 0.1,
            slope_floor: 0.1,
        }
    }
}

/// Per-column robust location and scale (`1.4826 * MAD`).
#[derive(Debug, Clone, PartialEq)]
pub struct RobustScale {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ImputationResult {
    /// Cleaned joint matrix, response in column 0.
    pub z_imp: Matrix,
    /// Cells that were replaced.
    pub flags: BinaryMask,
    pub scales: RobustScale,
}

impl ImputationResult {
    /// Leaves the data untouched (used to ablate the imputation stage).
    pub fn passthrough(z: &Matrix) -> Result<Self> {
        let (_, scales) = robust_standardize(z)?;
        Ok(Self {
            z_imp: z.clone(),
            flags: BinaryMask::new(z.rows(), z.cols()),
            scales,
        })
    }

    pub fn n(&self) -> usize {
        self.z_imp.rows()
    }

    /// Number of predictors (columns after the response).
    pub fn p(&self) -> usize {
        self.z_imp.cols() - 1
    }

    pub fn y(&self) -> Vec<f64> {
        self.z_imp.column(0)
    }

    /// Imputed predictor matrix.
    pub fn x(&self) -> Matrix {
        let idx: Vec<usize> = (1..self.z_imp.cols()).collect();
        self.z_imp.select_columns(&idx).expect("at least one predictor")
    }
}

/// Predictor correlation matrix and predictor-response correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStructure {
    pub r_x: Matrix,
    pub r_y: Vec<f64>,
}

impl CorrelationStructure {
    pub fn p(&self) -> usize {
        self.r_y.len()
    }

    /// Sample correlations straight from raw data (no imputation).
    pub fn from_data(y: &[f64], x: &Matrix) -> Result<Self> {
        let mut cols = vec![y.to_vec()];
        cols.extend(x.columns());
        structure_from_columns(&cols)
    }
}

fn column_median_mad(col: &[f64], buf: &mut Vec<f64>) -> (f64, f64) {
    buf.clear();
    buf.extend_from_slice(col);
    let med = median_in_place(buf);
    buf.iter_mut().for_each(|v| *v = (*v - med).abs());
    let mad = median_in_place(buf);
    (med, mad)
}

/// Robust z-scores `(x - median) / (1.4826 * MAD)` per column.
pub fn robust_standardize(z: &Matrix) -> Result<(Matrix, RobustScale)> {
    let (n, d) = (z.rows(), z.cols());
    let mut location = Vec::with_capacity(d);
    let mut scale = Vec::with_capacity(d);
    let mut buf = Vec::with_capacity(n);
    for j in 0..d {
        let col = z.column(j);
        let (med, mad) = column_median_mad(&col, &mut buf);
        if !(mad > 1e-14 * (1.0 + med.abs())) {
            return Err(FscreError::DegenerateColumn {
                index: j,
                name: format!("column {j}"),
            });
        }
        location.push(med);
        scale.push(MAD_CONSISTENCY * mad);
    }
    let mut out = z.clone();
    for i in 0..n {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - location[j]) / scale[j];
        }
    }
    Ok((out, RobustScale { location, scale }))
}

/// Correlation of two standardized columns after dropping the `trim` fraction
/// of rows with the largest absolute products. Missing cells are NaN.
fn trimmed_correlation(a: &[f64], b: &[f64], trim: f64, buf: &mut Vec<(f64, f64, f64)>) -> f64 {
    buf.clear();
    for (&u, &v) in a.iter().zip(b) {
        if !u.is_nan() && !v.is_nan() {
            buf.push(((u * v).abs(), u, v));
        }
    }
    let m = buf.len();
    if m < 3 {
        return f64::NAN;
    }
    let drop = (trim * m as f64).floor() as usize;
    let keep = m - drop;
    if drop > 0 {
        buf.select_nth_unstable_by(keep - 1, |x, y| x.0.total_cmp(&y.0));
    }
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for &(_, u, v) in &buf[..keep] {
        suv += u * v;
        suu += u * u;
        svv += v * v;
    }
    let den = (suu * svv).sqrt();
    if den > 0.0 {
        (suv / den).clamp(-1.0, 1.0)
    } else {
        f64::NAN
    }
}

#[derive(Debug, Clone, Copy)]
struct Partner {
    col: usize,
    weight: f64,
    slope: f64,
}

/// Detects deviating cells in `z` and imputes them.
pub fn ddc_impute(z: &Matrix, cfg: &DdcConfig) -> Result<ImputationResult> {
    let (n, d) = (z.rows(), z.cols());
    if d < 2 {
        return Err(FscreError::TooFewColumns(d));
    }
    if n < 3 {
        return Err(FscreError::InvalidConfig(format!("need at least 3 rows, found {n}")));
    }
    let (zstd, scales) = robust_standardize(z)?;
    let std_cols = zstd.columns();
    // univariate outliers are masked out of every bivariate computation
    let work: Vec<Vec<f64>> = std_cols
        .iter()
        .map(|c| c.iter().map(|&v| if v.abs() > cfg.cutoff { f64::NAN } else { v }).collect())
        .collect();

    let corr: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map_init(Vec::new, |buf, j| {
            let mut row = vec![f64::NAN; d];
            for h in (j + 1)..d {
                row[h] = trimmed_correlation(&work[j], &work[h], cfg.trim_fraction, buf);
            }
            row
        })
        .collect();
    let corr_at = |j: usize, h: usize| if j < h { corr[j][h] } else { corr[h][j] };

    let per_column: Vec<(Vec<f64>, Vec<bool>)> = (0..d)
        .into_par_iter()
        .map(|j| {
            let partners = select_partners(j, d, &corr_at, &work, cfg);
            predict_column(j, &std_cols[j], &work, &partners, cfg)
        })
        .collect();

    let mut z_imp = z.clone();
    let mut flags = BinaryMask::new(n, d);
    for (j, (imputed, flagged)) in per_column.iter().enumerate() {
        for i in 0..n {
            if flagged[i] {
                flags.set(i, j, true);
                z_imp[(i, j)] = imputed[i] * scales.scale[j] + scales.location[j];
            }
        }
    }
    Ok(ImputationResult { z_imp, flags, scales })
}

fn select_partners(
    j: usize,
    d: usize,
    corr_at: &impl Fn(usize, usize) -> f64,
    work: &[Vec<f64>],
    cfg: &DdcConfig,
) -> Vec<Partner> {
    let mut cands: Vec<(usize, f64)> = (0..d)
        .filter(|&h| h != j)
        .map(|h| (h, corr_at(j, h)))
        .filter(|(_, c)| c.is_finite() && c.abs() >= cfg.min_partner_corr)
        .collect();
    cands.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    cands.truncate(cfg.max_neighbors);
    let mut ratios = Vec::new();
    cands
        .into_iter()
        .filter_map(|(h, c)| {
            ratios.clear();
            for (&zj, &zh) in work[j].iter().zip(&work[h]) {
                if !zj.is_nan() && !zh.is_nan() && zh.abs() > cfg.slope_floor {
                    ratios.push(zj / zh);
                }
            }
            if ratios.is_empty() {
                return None;
            }
            let slope = median_in_place(&mut ratios);
            Some(Partner {
                col: h,
                weight: c.abs(),
                slope,
            })
        })
        .collect()
}

/// Returns the standardized imputation value for every row of column `j`
/// together with its flags.
fn predict_column(
    j: usize,
    zcol: &[f64],
    work: &[Vec<f64>],
    partners: &[Partner],
    cfg: &DdcConfig,
) -> (Vec<f64>, Vec<bool>) {
    let n = zcol.len();
    let preds: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for pt in partners {
                let zh = work[pt.col][i];
                if !zh.is_nan() {
                    num += pt.weight * pt.slope * zh;
                    den += pt.weight;
                }
            }
            (den > 0.0).then(|| num / den)
        })
        .collect();

    let mut resid: Vec<f64> = (0..n)
        .filter_map(|i| match preds[i] {
            Some(p) if !work[j][i].is_nan() => Some(zcol[i] - p),
            _ => None,
        })
        .collect();
    let (res_loc, res_scale) = if resid.len() >= 3 {
        let med = median_in_place(&mut resid);
        resid.iter_mut().for_each(|r| *r = (*r - med).abs());
        let mad = median_in_place(&mut resid);
        (med, (MAD_CONSISTENCY * mad).max(1e-12))
    } else {
        (0.0, f64::INFINITY)
    };

    let mut imputed = vec![0.0; n];
    let mut flagged = vec![false; n];
    for i in 0..n {
        let univariate = zcol[i].abs() > cfg.cutoff;
        let bivariate = preds[i]
            .is_some_and(|p| ((zcol[i] - p - res_loc) / res_scale).abs() > cfg.cutoff);
        if univariate || bivariate {
            flagged[i] = true;
            imputed[i] = preds[i].unwrap_or(0.0);
        }
    }
    (imputed, flagged)
}

fn structure_from_columns(cols: &[Vec<f64>]) -> Result<CorrelationStructure> {
    let d = cols.len();
    if d < 2 {
        return Err(FscreError::TooFewColumns(d));
    }
    let unit: Vec<Vec<f64>> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let centered: Vec<f64> = c.iter().map(|v| v - m).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 1e-300) || !norm.is_finite() {
                return Err(FscreError::DegenerateColumn {
                    index: j,
                    name: format!("column {j}"),
                });
            }
            Ok(centered.into_iter().map(|v| v / norm).collect())
        })
        .collect::<Result<_>>()?;
    let p = d - 1;
    let rows: Vec<Vec<f64>> = (1..d)
        .into_par_iter()
        .map(|a| {
            (1..d)
                .map(|b| {
                    if b < a {
                        f64::NAN
                    } else if b == a {
                        1.0
                    } else {
                        crate::linalg::dot(&unit[a], &unit[b]).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut r_x = Matrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            r_x[(a, b)] = rows[a][b];
            r_x[(b, a)] = rows[a][b];
        }
    }
    let r_y = (1..d)
        .map(|a| crate::linalg::dot(&unit[0], &unit[a]).clamp(-1.0, 1.0))
        .collect();
    Ok(CorrelationStructure { r_x, r_y })
}

/// Sample correlations of the imputed predictors with each other and with the
/// imputed response.
pub fn correlation_structure(imp: &ImputationResult) -> Result<CorrelationStructure> {
    structure_from_columns(&imp.z_imp.columns())
}
