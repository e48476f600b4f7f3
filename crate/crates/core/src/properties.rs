//! Invariance and equivalence suites. Each suite runs seeded instances and
//! reports every failure; the CLI `selftest` mode and the acceptance tests
//! share them.

use crate::data::Dataset;
use crate::ensemble::{replay_states, run_selection, Arbitration, FscreConfig, SelectionResult};
use crate::error::Result;
use crate::foundation::{correlation_structure, ddc_impute, CorrelationStructure, DdcConfig, ImputationResult};
use crate::lars::EQUICORRELATION_TOL;
use crate::metrics::timed;
use crate::oracles::classical_lars_path;
use crate::pipeline::{self, PipelineConfig};
use crate::rng::{split_seed, RandomSource};
use crate::simgen::{ContaminationSpec, Generator, Scenario, SimConfig};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub runs: usize,
    pub failures: Vec<String>,
    /// Largest numeric deviation observed, where the suite measures one.
    pub max_deviation: f64,
    pub seconds: f64,
}

impl SuiteOutcome {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            runs: 0,
            failures: Vec::new(),
            max_deviation: 0.0,
            seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.runs > 0
    }
}

/// Contaminated block-correlated data for invariance runs.
pub fn generic_dataset(seed: u64, n: usize, p: usize, scenario: Scenario) -> Result<Dataset> {
    let sim = SimConfig {
        n,
        p,
        sparsity: 10.min(p),
        snr: 2.0,
        block_size: 5,
        seed,
        ..SimConfig::default()
    };
    let gen = Generator::new(sim)?;
    let clean = gen.generate_clean();
    gen.contaminate(&clean, &ContaminationSpec::standard(scenario))
}

fn family(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut f: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s
        })
        .collect();
    f.sort();
    f
}

fn fscre_for(seed: u64) -> FscreConfig {
    FscreConfig {
        seed,
        ..FscreConfig::default()
    }
}

/// Correlation-space engine against data-space least angle regression, plus
/// the equi-correlation invariant along every accepted step. Returns the path
/// suite and the invariant suite.
pub fn lars_equivalence(runs: usize, n: usize, p: usize, steps: usize, seed: u64) -> Result<(SuiteOutcome, SuiteOutcome)> {
    let mut path = SuiteOutcome::new("lars path equivalence");
    let mut equi = SuiteOutcome::new("equi-correlation invariant");
    let (res, secs) = timed(|| -> Result<()> {
        for r in 0..runs {
            let s = split_seed(seed, r as u64);
            let data = generic_dataset(s, n, p, Scenario::Clean)?;
            let cols = data.x.columns();
            let oracle = classical_lars_path(&cols, &data.y, steps)?;

            let imp = ImputationResult::passthrough(&data.joint())?;
            let structure = correlation_structure(&imp)?;
            let cfg = FscreConfig {
                k: 1,
                arbitration: Arbitration::AcceptAll,
                seed: s,
                ..FscreConfig::default()
            };
            let sel = run_selection(&structure, &imp, &cfg)?;
            let order: Vec<usize> = sel.winners().into_iter().map(|w| w.1).take(steps).collect();
            let gammas: Vec<f64> = sel
                .trace
                .iter()
                .filter_map(|rec| {
                    let (k, j) = rec.winner?;
                    rec.proposals.iter().find(|p| p.model == k && p.candidate == j).map(|p| p.gamma)
                })
                .take(steps)
                .collect();
            path.runs += 1;
            if order != oracle.entry_order {
                path.failures.push(format!("run {r}: order {order:?} vs oracle {:?}", oracle.entry_order));
            } else {
                for (k, (g, o)) in gammas.iter().zip(&oracle.step_sizes).enumerate() {
                    let d = (g - o).abs();
                    path.max_deviation = path.max_deviation.max(d);
                    if !(d <= 1e-8) {
                        path.failures.push(format!("run {r}, step {k}: gamma {g} vs oracle {o}"));
                    }
                }
            }

            equi.runs += 1;
            match replay_states(&structure, &sel) {
                Ok(history) => {
                    for st in history.iter().flatten() {
                        let gap = st.equicorrelation_gap();
                        equi.max_deviation = equi.max_deviation.max(gap);
                        if !(gap <= EQUICORRELATION_TOL) {
                            equi.failures.push(format!("run {r}: gap {gap:e} with {} active", st.len()));
                        }
                    }
                }
                Err(e) => equi.failures.push(format!("run {r}: {e}")),
            }
        }
        Ok(())
    });
    res?;
    path.seconds = secs;
    equi.seconds = secs;
    Ok((path, equi))
}

fn affine_map(data: &Dataset, rng: &mut RandomSource) -> Dataset {
    let draw_scale = |rng: &mut RandomSource| rng.sign() * rng.uniform_range(0.1, 3.0);
    let (cy, ay) = (draw_scale(rng), rng.uniform_range(-5.0, 5.0));
    let mut out = data.clone();
    out.y.iter_mut().for_each(|v| *v = ay + cy * *v);
    for j in 0..data.p() {
        let (c, a) = (draw_scale(rng), rng.uniform_range(-5.0, 5.0));
        for i in 0..data.n() {
            out.x[(i, j)] = a + c * data.x[(i, j)];
        }
    }
    out
}

/// Selected families are unchanged by per-column affine maps of `[y, X]`.
pub fn affine_invariance(runs: usize, n: usize, p: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new("affine invariance");
    let (res, secs) = timed(|| -> Result<()> {
        for r in 0..runs {
            let s = split_seed(seed, r as u64);
            let data = generic_dataset(s, n, p, Scenario::CellwiseMarginal)?;
            let moved = affine_map(&data, &mut RandomSource::new(split_seed(s, 99)));
            let cfg = PipelineConfig::new(fscre_for(s));
            let a = pipeline::select(&data, &cfg)?;
            let b = pipeline::select(&moved, &cfg)?;
            out.runs += 1;
            if family(&a.sets) != family(&b.sets) {
                out.failures.push(format!("run {r}: {:?} vs {:?}", family(&a.sets), family(&b.sets)));
            }
        }
        Ok(())
    });
    res?;
    out.seconds = secs;
    Ok(out)
}

/// Permuting predictors permutes the selected family accordingly.
pub fn permutation_equivariance(runs: usize, n: usize, p: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new("permutation equivariance");
    let (res, secs) = timed(|| -> Result<()> {
        for r in 0..runs {
            let s = split_seed(seed, r as u64);
            let data = generic_dataset(s, n, p, Scenario::CellwiseMarginal)?;
            // column j of the permuted data is column perm[j] of the original
            let mut perm: Vec<usize> = (0..p).collect();
            RandomSource::new(split_seed(s, 98)).shuffle(&mut perm);
            let mut moved = data.clone();
            moved.x = data.x.select_columns(&perm)?;
            let cfg = PipelineConfig::new(fscre_for(s));
            let a = pipeline::select(&data, &cfg)?;
            let b = pipeline::select(&moved, &cfg)?;
            let mapped: Vec<Vec<usize>> = b.sets.iter().map(|set| set.iter().map(|&j| perm[j]).collect()).collect();
            out.runs += 1;
            if family(&a.sets) != family(&mapped) {
                out.failures.push(format!("run {r}: {:?} vs {:?}", family(&a.sets), family(&mapped)));
            }
        }
        Ok(())
    });
    res?;
    out.seconds = secs;
    Ok(out)
}

fn centered(data: &Dataset) -> Dataset {
    let mut out = data.clone();
    let my = crate::linalg::mean(&data.y);
    out.y.iter_mut().for_each(|v| *v -= my);
    for j in 0..data.p() {
        let m = crate::linalg::mean(&data.x.column(j));
        for i in 0..data.n() {
            out.x[(i, j)] -= m;
        }
    }
    out
}

/// On column-centered data the selection sequence does not depend on the
/// intercept.
pub fn intercept_invariance(runs: usize, n: usize, p: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new("intercept invariance");
    let (res, secs) = timed(|| -> Result<()> {
        for r in 0..runs {
            let s = split_seed(seed, r as u64);
            let data = centered(&generic_dataset(s, n, p, Scenario::Clean)?);
            let with = PipelineConfig::new(fscre_for(s));
            let mut without = with.clone();
            without.fscre.intercept = false;
            let a = pipeline::select(&data, &with)?;
            let b = pipeline::select(&data, &without)?;
            let seq = |sel: &SelectionResult| sel.winners().into_iter().map(|w| w.1).collect::<Vec<_>>();
            out.runs += 1;
            if seq(&a) != seq(&b) {
                out.failures.push(format!("run {r}: {:?} vs {:?}", seq(&a), seq(&b)));
            }
        }
        Ok(())
    });
    res?;
    out.seconds = secs;
    Ok(out)
}

/// Decisions recorded in a trace, without the floating-point payload.
fn decisions(sel: &SelectionResult) -> Vec<(Vec<(usize, usize)>, Option<(usize, usize)>, String)> {
    sel.trace
        .iter()
        .map(|rec| {
            (
                rec.proposals.iter().map(|p| (p.model, p.candidate)).collect(),
                rec.winner,
                rec.stop_reason.map(|s| s.to_string()).unwrap_or_default(),
            )
        })
        .collect()
}

fn perturb(structure: &CorrelationStructure, imp: &ImputationResult, eps: f64, rng: &mut RandomSource) -> (CorrelationStructure, ImputationResult) {
    let p = structure.p();
    let mut r_x = structure.r_x.clone();
    for i in 0..p {
        for j in i + 1..p {
            let d = rng.uniform_range(-eps, eps);
            r_x[(i, j)] += d;
            r_x[(j, i)] += d;
        }
    }
    let r_y = structure.r_y.iter().map(|v| v + rng.uniform_range(-eps, eps)).collect();
    let mut z = imp.z_imp.clone();
    z.as_mut_slice().iter_mut().for_each(|v| *v += rng.uniform_range(-eps, eps));
    (
        CorrelationStructure { r_x, r_y },
        ImputationResult {
            z_imp: z,
            flags: imp.flags.clone(),
            scales: imp.scales.clone(),
        },
    )
}

/// Tiny perturbations of the correlations and the imputed data leave every
/// decision of the competition unchanged.
pub fn local_stability(runs: usize, n: usize, p: usize, eps: f64, seed: u64) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new("local stability");
    let (res, secs) = timed(|| -> Result<()> {
        for r in 0..runs {
            let s = split_seed(seed, r as u64);
            let data = generic_dataset(s, n, p, Scenario::CellwiseMarginal)?;
            let imp = ddc_impute(&data.joint(), &DdcConfig::default())?;
            let structure = correlation_structure(&imp)?;
            let cfg = fscre_for(s);
            let base = run_selection(&structure, &imp, &cfg)?;
            let (ps, pi) = perturb(&structure, &imp, eps, &mut RandomSource::new(split_seed(s, 97)));
            let moved = run_selection(&ps, &pi, &cfg)?;
            out.runs += 1;
            if decisions(&base) != decisions(&moved) {
                out.failures.push(format!("run {r}: traces differ"));
            }
        }
        Ok(())
    });
    res?;
    out.seconds = secs;
    Ok(out)
}

/// Imputation commutes with per-column affine maps: identical flags, values
/// transformed within `1e-10`.
pub fn ddc_equivariance(runs: usize, n: usize, p: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new("imputation equivariance");
    let (res, secs) = timed(|| -> Result<()> {
        for r in 0..runs {
            let s = split_seed(seed, r as u64);
            let data = generic_dataset(s, n, p, Scenario::MixtureMarginal)?;
            let z = data.joint();
            let mut rng = RandomSource::new(split_seed(s, 96));
            let d = z.cols();
            let maps: Vec<(f64, f64)> = (0..d)
                .map(|_| (rng.sign() * rng.uniform_range(0.1, 3.0), rng.uniform_range(-5.0, 5.0)))
                .collect();
            let mut moved = z.clone();
            for i in 0..z.rows() {
                for (j, &(c, a)) in maps.iter().enumerate() {
                    moved[(i, j)] = a + c * z[(i, j)];
                }
            }
            let cfg = DdcConfig::default();
            let base = ddc_impute(&z, &cfg)?;
            let img = ddc_impute(&moved, &cfg)?;
            out.runs += 1;
            if base.flags != img.flags {
                out.failures.push(format!("run {r}: flags differ"));
                continue;
            }
            let mut worst = 0.0f64;
            for i in 0..z.rows() {
                for (j, &(c, a)) in maps.iter().enumerate() {
                    worst = worst.max((img.z_imp[(i, j)] - (a + c * base.z_imp[(i, j)])).abs());
                }
            }
            out.max_deviation = out.max_deviation.max(worst);
            if !(worst <= 1e-10) {
                out.failures.push(format!("run {r}: imputed values off by {worst:e}"));
            }
        }
        Ok(())
    });
    res?;
    out.seconds = secs;
    Ok(out)
}

/// Every suite at reduced size, for the CLI self-check.
pub fn selftest(seed: u64) -> Result<Vec<SuiteOutcome>> {
    let (path, equi) = lars_equivalence(10, 60, 25, 20, seed)?;
    Ok(vec![
        path,
        equi,
        affine_invariance(5, 50, 80, seed)?,
        permutation_equivariance(5, 50, 80, seed)?,
        intercept_invariance(5, 50, 80, seed)?,
        local_stability(5, 50, 80, 1e-9, seed)?,
        ddc_equivariance(5, 50, 80, seed)?,
    ])
}
