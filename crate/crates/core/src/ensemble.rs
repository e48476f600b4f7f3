//! Competitive selection: every sub-model proposes its next least-angle
//! candidate from the shared pool, cross-validated least squares on the
//! imputed data arbitrates, and the single best move is applied.

use crate::error::{FscreError, Result};
use crate::foundation::{CorrelationStructure, ImputationResult};
use crate::lars::{self, SubModelState};
use crate::linalg::weighted_least_squares;
use crate::rng::RandomSource;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

/// How winning proposals are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Arbitration {
    /// Accept iff the benefit is positive and its ratio to the model's
    /// current CV error exceeds `tau`.
    #[default]
    CrossValidated,
    /// Accept every winner. Test hook for comparing against a plain LARS path.
    AcceptAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FscreConfig {
    /// Number of sub-models.
    #[serde(rename = "K")]
    pub k: usize,
    pub tau: f64,
    pub cv_folds: usize,
    /// Cap on the total number of selected predictors; `None` means
    /// `min(n - cv_folds, p)`.
    pub max_vars: Option<usize>,
    pub intercept: bool,
    pub seed: u64,
    pub arbitration: Arbitration,
}

impl Default for FscreConfig {
    fn default() -> Self {
        Self {
            k: 10,
            tau: 0.01,
            cv_folds: 5,
            max_vars: None,
            intercept: true,
            seed: 0,
            arbitration: Arbitration::CrossValidated,
        }
    }
}

impl FscreConfig {
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let bad = |m: String| Err(FscreError::InvalidConfig(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive".into());
        }
        if self.cv_folds < 2 || self.cv_folds > n {
            return bad(format!("cv_folds must lie in 2..={n}"));
        }
        if self.max_vars.is_some_and(|m| m > p) {
            return bad(format!("max_vars exceeds p = {p}"));
        }
        Ok(())
    }

    pub fn effective_max_vars(&self, n: usize, p: usize) -> usize {
        self.max_vars
            .unwrap_or_else(|| n.saturating_sub(self.cv_folds).min(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    BelowTolerance,
    NoCandidates,
    PoolExhausted,
    MaxVars,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::BelowTolerance => "below_tolerance",
            StopReason::NoCandidates => "no_candidates",
            StopReason::PoolExhausted => "pool_exhausted",
            StopReason::MaxVars => "max_vars",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub model: usize,
    pub candidate: usize,
    pub gamma: f64,
    /// CV error reduction; `-inf` when the enlarged fit is rank deficient.
    pub benefit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionRecord {
    pub iteration: usize,
    pub proposals: Vec<ProposalRecord>,
    /// `(model, predictor)` of the accepted move.
    pub winner: Option<(usize, usize)>,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Predictor indices of each sub-model, in entry order.
    pub sets: Vec<Vec<usize>>,
    pub trace: Vec<CompetitionRecord>,
    pub stop_reason: StopReason,
}

impl SelectionResult {
    /// Union of all sub-model sets, ascending.
    pub fn selected(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.sets.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// `(model, predictor)` winners in acceptance order.
    pub fn winners(&self) -> Vec<(usize, usize)> {
        self.trace.iter().filter_map(|r| r.winner).collect()
    }

    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "model", "candidate", "gamma", "benefit", "winner", "stop_reason"])?;
        for rec in &self.trace {
            let stop = rec.stop_reason.map(|s| s.to_string()).unwrap_or_default();
            if rec.proposals.is_empty() {
                w.write_record([rec.iteration.to_string(), String::new(), String::new(), String::new(), String::new(), "0".into(), stop.clone()])?;
            }
            for pr in &rec.proposals {
                let won = rec.winner == Some((pr.model, pr.candidate));
                w.write_record([
                    rec.iteration.to_string(),
                    pr.model.to_string(),
                    pr.candidate.to_string(),
                    format!("{:?}", pr.gamma),
                    format!("{:?}", pr.benefit),
                    u8::from(won).to_string(),
                    stop.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fold label of each observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    labels: Vec<usize>,
    count: usize,
}

impl Folds {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Smallest number of training rows over all folds.
    pub fn min_train_size(&self) -> usize {
        let mut sizes = vec![0usize; self.count];
        self.labels.iter().for_each(|&f| sizes[f] += 1);
        self.labels.len() - sizes.into_iter().max().unwrap_or(0)
    }
}

/// Random partition of `n` rows into `v` folds whose sizes differ by at most
/// one.
pub fn fold_assignment(n: usize, v: usize, rng: &mut RandomSource) -> Result<Folds> {
    if v == 0 || v > n {
        return Err(FscreError::InvalidConfig(format!("cannot split {n} rows into {v} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % v;
    }
    Ok(Folds { labels, count: v })
}

/// Mean over folds of the out-of-fold squared error of a least-squares fit of
/// the imputed response on the imputed predictors in `subset`.
pub fn cv_error(imp: &ImputationResult, subset: &[usize], folds: &Folds, intercept: bool) -> Result<f64> {
    let z = &imp.z_imp;
    let n = z.rows();
    if folds.labels.len() != n {
        return Err(FscreError::shape(n, folds.labels.len()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if sorted.iter().any(|&j| j >= imp.p()) {
        return Err(FscreError::InvalidConfig("subset index out of range".into()));
    }
    let y = z.column(0);
    let cols: Vec<Vec<f64>> = sorted.iter().map(|&j| z.column(j + 1)).collect();

    let mut total = 0.0;
    for f in 0..folds.count {
        let train: Vec<usize> = (0..n).filter(|&i| folds.labels[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds.labels[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xtr: Vec<Vec<f64>> = cols.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
        let refs: Vec<&[f64]> = xtr.iter().map(Vec::as_slice).collect();
        let fit = weighted_least_squares(&refs, &ytr, None, intercept)?;
        let sse: f64 = test
            .iter()
            .map(|&i| {
                let pred = fit.intercept
                    + fit.coefficients.iter().zip(&cols).map(|(b, c)| b * c[i]).sum::<f64>();
                (y[i] - pred).powi(2)
            })
            .sum();
        total += sse / test.len() as f64;
    }
    Ok(total / folds.count as f64)
}

/// Memoizes CV errors by sorted subset.
struct CvCache<'a> {
    imp: &'a ImputationResult,
    folds: &'a Folds,
    intercept: bool,
    memo: HashMap<Vec<usize>, Option<f64>>,
}

impl CvCache<'_> {
    fn get(&mut self, subset: &[usize]) -> Result<Option<f64>> {
        let mut key = subset.to_vec();
        key.sort_unstable();
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let v = match cv_error(self.imp, &key, self.folds, self.intercept) {
            Ok(e) => Some(e),
            Err(FscreError::RankDeficient) => None,
            Err(e) => return Err(e),
        };
        self.memo.insert(key, v);
        Ok(v)
    }
}

/// Runs the K-model competition on a robust foundation.
pub fn run_selection(
    structure: &CorrelationStructure,
    imp: &ImputationResult,
    cfg: &FscreConfig,
) -> Result<SelectionResult> {
    let p = structure.p();
    let n = imp.n();
    if imp.p() != p || structure.r_x.rows() != p || structure.r_x.cols() != p {
        return Err(FscreError::shape(
            format!("{p} predictors throughout"),
            format!("imputed data with {} predictors", imp.p()),
        ));
    }
    cfg.validate(n, p)?;
    let mut rng = RandomSource::new(cfg.seed);
    let folds = fold_assignment(n, cfg.cv_folds, &mut rng)?;
    let k_max = cfg.effective_max_vars(n, p);
    // a model may grow while its enlarged fit stays solvable on every fold
    let size_cap = folds.min_train_size().saturating_sub(usize::from(cfg.intercept) + 1);

    let mut cache = CvCache {
        imp,
        folds: &folds,
        intercept: cfg.intercept,
        memo: HashMap::new(),
    };
    let mut states: Vec<SubModelState> = (0..cfg.k).map(|_| SubModelState::new(&structure.r_y)).collect();
    let mut broken = vec![false; cfg.k];
    let mut in_pool = vec![true; p];
    let mut pool_size = p;
    let mut selected = 0usize;
    let mut trace = Vec::new();

    let stop = loop {
        let iteration = trace.len();
        let halt = if pool_size == 0 {
            Some(StopReason::PoolExhausted)
        } else if selected >= k_max {
            Some(StopReason::MaxVars)
        } else {
            None
        };
        if let Some(reason) = halt {
            trace.push(CompetitionRecord {
                iteration,
                proposals: Vec::new(),
                winner: None,
                stop_reason: Some(reason),
            });
            break reason;
        }
        let available: Vec<usize> = (0..p).filter(|&j| in_pool[j]).collect();

        let mut props = Vec::new();
        for (k, st) in states.iter().enumerate() {
            if broken[k] || st.len() >= size_cap {
                continue;
            }
            let prop = match lars::propose(&structure.r_x, st, &available) {
                Ok(prop) => prop,
                Err(FscreError::NotPositiveDefinite { .. }) => {
                    broken[k] = true;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let Some(j) = prop.candidate else { continue };
            let current = cache.get(&st.active)?;
            let mut grown = st.active.clone();
            grown.push(j);
            let benefit = match (current, cache.get(&grown)?) {
                (Some(e0), Some(e1)) => e0 - e1,
                _ => f64::NEG_INFINITY,
            };
            props.push((
                ProposalRecord {
                    model: k,
                    candidate: j,
                    gamma: prop.step,
                    benefit,
                },
                prop,
            ));
        }
        if props.is_empty() {
            trace.push(CompetitionRecord {
                iteration,
                proposals: Vec::new(),
                winner: None,
                stop_reason: Some(StopReason::NoCandidates),
            });
            break StopReason::NoCandidates;
        }

        let best = props
            .iter()
            .map(|(r, _)| r.benefit)
            .fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..props.len()).filter(|&i| props[i].0.benefit == best).collect();
        let pick = if tied.len() > 1 { tied[rng.index(tied.len())] } else { tied[0] };
        let (win_rec, win_prop) = &props[pick];
        let k_win = win_rec.model;
        let accept = match cfg.arbitration {
            Arbitration::AcceptAll => best > f64::NEG_INFINITY,
            Arbitration::CrossValidated => {
                let e_win = cache.get(&states[k_win].active)?.unwrap_or(f64::NAN);
                best > 0.0 && best / e_win > cfg.tau
            }
        };
        let records: Vec<ProposalRecord> = props.iter().map(|(r, _)| r.clone()).collect();
        if !accept {
            trace.push(CompetitionRecord {
                iteration,
                proposals: records,
                winner: None,
                stop_reason: Some(StopReason::BelowTolerance),
            });
            break StopReason::BelowTolerance;
        }
        let j_win = win_rec.candidate;
        states[k_win] = lars::apply_step(&states[k_win], win_prop, &available)?;
        in_pool[j_win] = false;
        pool_size -= 1;
        selected += 1;
        trace.push(CompetitionRecord {
            iteration,
            proposals: records,
            winner: Some((k_win, j_win)),
            stop_reason: None,
        });
    };

    Ok(SelectionResult {
        sets: states.into_iter().map(|s| s.active).collect(),
        trace,
        stop_reason: stop,
    })
}

/// Per-model states after replaying a selection; used by invariant checks.
pub fn replay_states(
    structure: &CorrelationStructure,
    result: &SelectionResult,
) -> Result<Vec<Vec<SubModelState>>> {
    let p = structure.p();
    let k = result.sets.len();
    let mut states: Vec<SubModelState> = (0..k).map(|_| SubModelState::new(&structure.r_y)).collect();
    let mut in_pool = vec![true; p];
    let mut history = vec![Vec::new(); k];
    for (k_win, j_win) in result.winners() {
        let available: Vec<usize> = (0..p).filter(|&j| in_pool[j]).collect();
        let prop = lars::propose(&structure.r_x, &states[k_win], &available)?;
        if prop.candidate != Some(j_win) {
            return Err(FscreError::InvariantViolation(format!(
                "replay proposed {:?}, trace recorded {j_win}",
                prop.candidate
            )));
        }
        states[k_win] = lars::apply_step(&states[k_win], &prop, &available)?;
        history[k_win].push(states[k_win].clone());
        in_pool[j_win] = false;
    }
    Ok(history)
}
