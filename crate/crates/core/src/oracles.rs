//! Brute-force reference implementations for tests. Nothing here reuses the
//! production numerics: data are plain nested vectors and every solve is
//! Gauss-Jordan elimination with partial pivoting.

use crate::error::{FscreError, Result};

/// Entry order and step sizes of a least-angle path. `step_sizes[0]` is the
/// absolute correlation at which the first predictor enters.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePath {
    pub entry_order: Vec<usize>,
    pub step_sizes: Vec<f64>,
    /// Maximal absolute residual correlation at each entry.
    pub max_correlation: Vec<f64>,
}

/// Solves `a x = b` by Gauss-Jordan elimination.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(FscreError::RankDeficient);
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

fn center_unit(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.into_iter().map(|x| x / norm).collect()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Classical least-angle regression in data space on centered, unit-norm
/// columns and a centered, unit-norm response. `columns[j]` is predictor `j`.
pub fn classical_lars_path(columns: &[Vec<f64>], y: &[f64], steps: usize) -> Result<OraclePath> {
    let p = columns.len();
    let n = y.len();
    if steps > p || steps + 2 > n {
        return Err(FscreError::InvalidConfig("too many steps for this design".into()));
    }
    let xs: Vec<Vec<f64>> = columns.iter().map(|c| center_unit(c)).collect();
    let yu = center_unit(y);
    let mut mu = vec![0.0; n];
    let mut active: Vec<usize> = Vec::new();
    let mut path = OraclePath {
        entry_order: Vec::new(),
        step_sizes: Vec::new(),
        max_correlation: Vec::new(),
    };

    let residual_corr = |mu: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = yu.iter().zip(mu).map(|(a, b)| a - b).collect();
        xs.iter().map(|x| inner(x, &r)).collect()
    };

    let c = residual_corr(&mu);
    let first = (0..p).max_by(|&i, &j| c[i].abs().total_cmp(&c[j].abs())).unwrap();
    active.push(first);
    path.entry_order.push(first);
    path.step_sizes.push(c[first].abs());
    path.max_correlation.push(c[first].abs());

    while path.entry_order.len() < steps {
        let c = residual_corr(&mu);
        let big_c = active.iter().map(|&j| c[j].abs()).fold(0.0, f64::max);
        let signs: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let xa: Vec<Vec<f64>> = active
            .iter()
            .zip(&signs)
            .map(|(&j, &s)| xs[j].iter().map(|v| s * v).collect())
            .collect();
        let g: Vec<Vec<f64>> = xa.iter().map(|u| xa.iter().map(|v| inner(u, v)).collect()).collect();
        let ginv1 = gauss_solve(&g, &vec![1.0; active.len()])?;
        let a_big = ginv1.iter().sum::<f64>().powf(-0.5);
        let w: Vec<f64> = ginv1.iter().map(|v| a_big * v).collect();
        let u: Vec<f64> = (0..n).map(|i| xa.iter().zip(&w).map(|(col, wk)| col[i] * wk).sum()).collect();

        let mut best: Option<(usize, f64)> = None;
        for j in (0..p).filter(|j| !active.contains(j)) {
            let a_j = inner(&xs[j], &u);
            for (num, den) in [(big_c - c[j], a_big - a_j), (big_c + c[j], a_big + a_j)] {
                if den > 0.0 {
                    let gamma = num / den;
                    if gamma > 0.0 && best.is_none_or(|(_, g)| gamma < g) {
                        best = Some((j, gamma));
                    }
                }
            }
        }
        let Some((j, gamma)) = best else { break };
        for (m, ui) in mu.iter_mut().zip(&u) {
            *m += gamma * ui;
        }
        active.push(j);
        path.entry_order.push(j);
        path.step_sizes.push(gamma);
        path.max_correlation.push(big_c - gamma * a_big);
    }
    Ok(path)
}

/// Sample Pearson correlation of every column pair, from textbook sums.
pub fn pairwise_pearson(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = columns.len();
    let mut out = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let n = columns[a].len() as f64;
            let (xa, xb) = (&columns[a], &columns[b]);
            let sa: f64 = xa.iter().sum();
            let sb: f64 = xb.iter().sum();
            let sab: f64 = xa.iter().zip(xb).map(|(u, v)| u * v).sum();
            let saa: f64 = xa.iter().map(|u| u * u).sum();
            let sbb: f64 = xb.iter().map(|v| v * v).sum();
            out[a][b] = (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt());
        }
    }
    out
}

/// Mean over folds of out-of-fold MSE, each fold fit by raw normal equations.
pub fn cv_error_oracle(y: &[f64], columns: &[Vec<f64>], labels: &[usize], folds: usize, intercept: bool) -> Result<f64> {
    let n = y.len();
    let row = |i: usize| -> Vec<f64> {
        let mut r = if intercept { vec![1.0] } else { Vec::new() };
        r.extend(columns.iter().map(|c| c[i]));
        r
    };
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        let q = columns.len() + usize::from(intercept);
        let mut a = vec![vec![0.0; q]; q];
        let mut b = vec![0.0; q];
        for &i in &train {
            let r = row(i);
            for u in 0..q {
                b[u] += r[u] * y[i];
                for v in 0..q {
                    a[u][v] += r[u] * r[v];
                }
            }
        }
        let beta = if q == 0 { Vec::new() } else { gauss_solve(&a, &b)? };
        let sse: f64 = test.iter().map(|&i| (y[i] - inner(&row(i), &beta)).powi(2)).sum();
        total += sse / test.len() as f64;
    }
    Ok(total / folds as f64)
}

/// S-scale by progressively refined grid search on `|mean rho - 0.5|`.
pub fn grid_search_s_scale(residuals: &[f64], c0: f64) -> f64 {
    let rho = |u: f64| {
        let t = (u / c0).abs();
        if t >= 1.0 { 1.0 } else { 1.0 - (1.0 - t * t).powi(3) }
    };
    let f = |s: f64| (residuals.iter().map(|r| rho(r / s)).sum::<f64>() / residuals.len() as f64 - 0.5).abs();
    let top = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())) * 10.0 / c0;
    let (mut lo, mut hi) = (top * 1e-6, top);
    let mut best = lo;
    for _ in 0..15 {
        let step = (hi - lo) / 2000.0;
        best = (0..=2000)
            .map(|k| lo + step * k as f64)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        lo = (best - step).max(f64::MIN_POSITIVE);
        hi = best + step;
    }
    best
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    vals.sort_by(f64::total_cmp);
    vals
}
