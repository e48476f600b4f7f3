//! Block-correlated regression data and the five contamination mechanisms
//! (casewise leverage, marginal cellwise, correlation cellwise, and the two
//! mixtures).

use crate::data::{BinaryMask, Dataset, GroundTruth};
use crate::error::{FscreError, Result};
use crate::linalg::{dot, min_eigenvector, variance, Cholesky, Matrix};
use crate::rng::{split_seed, RandomSource};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

const STREAM_CLEAN: u64 = 0;
const STREAM_CONTAMINATION: u64 = 1;
const STREAM_TEST: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Number of nonzero coefficients.
    pub sparsity: usize,
    pub snr: f64,
    pub block_size: usize,
    pub rho_within: f64,
    pub rho_background: f64,
    pub coef_range: (f64, f64),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 50,
            p: 500,
            sparsity: 50,
            snr: 1.0,
            block_size: 25,
            rho_within: 0.8,
            rho_background: 0.2,
            coef_range: (0.0, 5.0),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FscreError::InvalidConfig(m.to_string()));
        if self.n == 0 || self.p == 0 {
            return bad("n and p must be positive");
        }
        if self.sparsity > self.p {
            return bad("sparsity exceeds p");
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return bad("snr must be a positive finite number");
        }
        if self.block_size == 0 {
            return bad("block_size must be positive");
        }
        if !(self.rho_within.abs() < 1.0 && self.rho_background.abs() < 1.0) {
            return bad("correlations must lie in (-1, 1)");
        }
        if !(self.rho_within > self.rho_background) {
            return bad("rho_within must exceed rho_background");
        }
        let (lo, hi) = self.coef_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad("coef_range must satisfy low <= high");
        }
        Ok(())
    }

    /// Block index of predictor `j`, or `None` for background predictors.
    pub fn block_of(&self, j: usize) -> Option<usize> {
        (j < self.sparsity).then(|| j / self.block_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Clean,
    Casewise,
    CellwiseMarginal,
    CellwiseCorrelation,
    MixtureMarginal,
    MixtureCorrelation,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Clean,
        Scenario::Casewise,
        Scenario::CellwiseMarginal,
        Scenario::CellwiseCorrelation,
        Scenario::MixtureMarginal,
        Scenario::MixtureCorrelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Casewise => "casewise",
            Scenario::CellwiseMarginal => "cellwise_marginal",
            Scenario::CellwiseCorrelation => "cellwise_correlation",
            Scenario::MixtureMarginal => "mixture_marginal",
            Scenario::MixtureCorrelation => "mixture_correlation",
        }
    }

    fn is_mixture(self) -> bool {
        matches!(self, Scenario::MixtureMarginal | Scenario::MixtureCorrelation)
    }
}

impl std::str::FromStr for Scenario {
    type Err = FscreError;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s.replace('-', "_") || format!("{sc:?}") == s)
            .ok_or_else(|| FscreError::InvalidConfig(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContaminationSpec {
    pub scenario: Scenario,
    /// Row fraction (casewise, mixtures) or cell fraction (pure cellwise).
    pub alpha: f64,
    /// Cellwise rate on the non-casewise rows of a mixture.
    pub alpha2: f64,
    pub leverage_c: f64,
    pub marginal_shift: f64,
    pub gamma_corr: f64,
    pub beta_distort: f64,
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Clean,
            alpha: 0.0,
            alpha2: 0.0,
            leverage_c: 2.0,
            marginal_shift: 10.0,
            gamma_corr: 3.0,
            beta_distort: 100.0,
        }
    }
}

impl ContaminationSpec {
    /// Standard rates per scenario: 10% casewise rows, 5% cellwise cells,
    /// mixtures at 10% rows plus 5% cells.
    pub fn standard(scenario: Scenario) -> Self {
        let (alpha, alpha2) = match scenario {
            Scenario::Clean => (0.0, 0.0),
            Scenario::Casewise => (0.1, 0.0),
            Scenario::CellwiseMarginal | Scenario::CellwiseCorrelation => (0.05, 0.0),
            Scenario::MixtureMarginal | Scenario::MixtureCorrelation => (0.1, 0.05),
        };
        Self {
            scenario,
            alpha,
            alpha2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FscreError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.alpha) || !(0.0..1.0).contains(&self.alpha2) {
            return bad("alpha and alpha2 must lie in [0, 1)".into());
        }
        if self.alpha + self.alpha2 >= 1.0 {
            return bad("alpha + alpha2 must be below 1".into());
        }
        if !self.scenario.is_mixture() && self.alpha2 > 0.0 {
            return bad(format!(
                "alpha2 only applies to mixture scenarios, not {}",
                self.scenario.name()
            ));
        }
        Ok(())
    }
}

/// Block-diagonal predictor covariance: unit variances, `rho_within` inside
/// each active block, `rho_background` for every other pair.
pub fn block_covariance(cfg: &SimConfig) -> Matrix {
    let p = cfg.p;
    let mut s = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] = if i == j {
                1.0
            } else {
                match (cfg.block_of(i), cfg.block_of(j)) {
                    (Some(a), Some(b)) if a == b => cfg.rho_within,
                    _ => cfg.rho_background,
                }
            };
        }
    }
    s
}

/// Holds the covariance and its factor so repeated draws share them.
#[derive(Debug)]
pub struct Generator {
    cfg: SimConfig,
    sigma: Matrix,
    chol: Cholesky,
    min_eig: OnceLock<Vec<f64>>,
}

impl Generator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let sigma = block_covariance(&cfg);
        let chol = Cholesky::factor(&sigma).map_err(|_| {
            FscreError::InvalidConfig("block covariance is not positive definite".into())
        })?;
        Ok(Self {
            cfg,
            sigma,
            chol,
            min_eig: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// `m` rows from N(0, Σ).
    pub fn sample_design(&self, m: usize, rng: &mut RandomSource) -> Matrix {
        let p = self.cfg.p;
        let mut data = Vec::with_capacity(m * p);
        let mut z = vec![0.0; p];
        for _ in 0..m {
            z.iter_mut().for_each(|v| *v = rng.normal());
            data.extend(self.chol.mul_lower(&z));
        }
        Matrix::new(m, p, data).expect("design dimensions")
    }

    fn draw_beta(&self, rng: &mut RandomSource) -> Vec<f64> {
        let (lo, hi) = self.cfg.coef_range;
        let mut beta = vec![0.0; self.cfg.p];
        for b in beta.iter_mut().take(self.cfg.sparsity) {
            let mag = rng.uniform_range(lo, hi);
            *b = rng.sign() * mag;
        }
        beta
    }

    pub fn generate_clean(&self) -> Dataset {
        let mut rng = RandomSource::new(split_seed(self.cfg.seed, STREAM_CLEAN));
        let beta = self.draw_beta(&mut rng);
        let x = self.sample_design(self.cfg.n, &mut rng);
        let signal = x.matvec(&beta).expect("beta length");
        let var_signal = if signal.len() > 1 { variance(&signal) } else { 0.0 };
        let noise_sd = if var_signal > 0.0 {
            (var_signal / self.cfg.snr).sqrt()
        } else {
            1.0
        };
        let y = signal.iter().map(|s| s + noise_sd * rng.normal()).collect();
        let n = self.cfg.n;
        Dataset::new(y, x)
            .expect("consistent shapes")
            .with_truth(GroundTruth::new(beta, n, noise_sd))
    }

    /// `m` fresh clean rows sharing the realized coefficients and noise scale.
    pub fn make_test_set(&self, beta: &[f64], noise_sd: f64, m: usize) -> Result<Dataset> {
        if beta.len() != self.cfg.p {
            return Err(FscreError::shape(self.cfg.p, beta.len()));
        }
        if m == 0 {
            return Err(FscreError::InvalidConfig("test set size must be positive".into()));
        }
        let mut rng = RandomSource::new(split_seed(self.cfg.seed, STREAM_TEST));
        let x = self.sample_design(m, &mut rng);
        let y = x
            .matvec(beta)?
            .into_iter()
            .map(|s| s + noise_sd * rng.normal())
            .collect();
        Ok(Dataset::new(y, x)?.with_truth(GroundTruth::new(beta.to_vec(), m, noise_sd)))
    }

    fn min_eigenvector(&self) -> &[f64] {
        self.min_eig.get_or_init(|| {
            min_eigenvector(&self.sigma)
                .expect("square covariance")
                .1
        })
    }

    /// Contaminates with the stream reserved for this configuration's seed.
    pub fn contaminate(&self, data: &Dataset, spec: &ContaminationSpec) -> Result<Dataset> {
        let mut rng = RandomSource::new(split_seed(self.cfg.seed, STREAM_CONTAMINATION));
        let needs_eig = matches!(
            spec.scenario,
            Scenario::Casewise | Scenario::MixtureMarginal | Scenario::MixtureCorrelation
        );
        let u = needs_eig.then(|| self.min_eigenvector());
        contaminate_impl(data, spec, &self.sigma, u, &mut rng)
    }
}

/// One-shot clean generation from a configuration.
pub fn generate_clean(cfg: &SimConfig) -> Result<Dataset> {
    Ok(Generator::new(cfg.clone())?.generate_clean())
}

/// One-shot test set for realized coefficients.
pub fn make_test_set(cfg: &SimConfig, beta: &[f64], noise_sd: f64, m: usize) -> Result<Dataset> {
    Generator::new(cfg.clone())?.make_test_set(beta, noise_sd, m)
}

/// Applies `spec` to `data`, whose predictors were generated with covariance
/// `sigma`. Masks in the returned ground truth mark exactly the rewritten
/// cells.
pub fn contaminate(
    data: &Dataset,
    spec: &ContaminationSpec,
    sigma: &Matrix,
    rng: &mut RandomSource,
) -> Result<Dataset> {
    contaminate_impl(data, spec, sigma, None, rng)
}

fn contaminate_impl(
    data: &Dataset,
    spec: &ContaminationSpec,
    sigma: &Matrix,
    min_eig: Option<&[f64]>,
    rng: &mut RandomSource,
) -> Result<Dataset> {
    spec.validate()?;
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| FscreError::InvalidConfig("contamination needs ground truth".into()))?;
    let (n, p) = (data.n(), data.p());
    if sigma.rows() != p || sigma.cols() != p {
        return Err(FscreError::shape(format!("{p}x{p} covariance"), format!("{}x{}", sigma.rows(), sigma.cols())));
    }
    let mut out = data.clone();
    let mut gt = truth.clone();
    gt.mask_x = BinaryMask::new(n, p);
    gt.mask_y = vec![false; n];

    let casewise_rows = match spec.scenario {
        Scenario::Casewise | Scenario::MixtureMarginal | Scenario::MixtureCorrelation => {
            let owned;
            let u = match min_eig {
                Some(u) => u,
                None => {
                    owned = min_eigenvector(sigma)?.1;
                    &owned
                }
            };
            apply_casewise(&mut out, &mut gt, spec, u, rng)
        }
        _ => Vec::new(),
    };
    let eligible: Vec<usize> = {
        let mut taken = vec![false; n];
        casewise_rows.iter().for_each(|&i| taken[i] = true);
        (0..n).filter(|&i| !taken[i]).collect()
    };
    let cell_rate = if spec.scenario.is_mixture() { spec.alpha2 } else { spec.alpha };
    match spec.scenario {
        Scenario::CellwiseMarginal | Scenario::MixtureMarginal => {
            apply_marginal(&mut out, &mut gt, spec, cell_rate, &eligible, rng)
        }
        Scenario::CellwiseCorrelation | Scenario::MixtureCorrelation => {
            apply_correlation(&mut out, &mut gt, spec, cell_rate, &eligible, sigma, rng)?
        }
        _ => {}
    }
    out.truth = Some(gt);
    Ok(out)
}

fn apply_casewise(
    out: &mut Dataset,
    gt: &mut GroundTruth,
    spec: &ContaminationSpec,
    u: &[f64],
    rng: &mut RandomSource,
) -> Vec<usize> {
    let (n, p) = (out.n(), out.p());
    let k = (spec.alpha * n as f64).round() as usize;
    let rows = rng.sample_without_replacement(n, k);
    let beta_cont: Vec<f64> = gt.beta.iter().map(|b| b * spec.beta_distort).collect();
    let sd = 0.1f64.sqrt();
    for &i in &rows {
        let row = out.x.row_mut(i);
        for j in 0..p {
            row[j] = sd * rng.normal() + spec.leverage_c * u[j];
            gt.mask_x.set(i, j, true);
        }
        out.y[i] = dot(out.x.row(i), &beta_cont);
        gt.mask_y[i] = true;
    }
    rows
}

fn apply_marginal(
    out: &mut Dataset,
    gt: &mut GroundTruth,
    spec: &ContaminationSpec,
    rate: f64,
    rows: &[usize],
    rng: &mut RandomSource,
) {
    for &i in rows {
        for j in 0..out.p() {
            if rng.bernoulli(rate) {
                out.x[(i, j)] = spec.marginal_shift + rng.normal();
                gt.mask_x.set(i, j, true);
            }
        }
    }
}

/// Replaces groups of 5..=15 cells per visited row by
/// `gamma * sqrt(|J|) * v_min(Σ_J)` until the cell budget is spent. Rows are
/// revisited in a fixed random order when one group per row cannot meet the
/// budget; the last group is truncated to the remaining budget.
fn apply_correlation(
    out: &mut Dataset,
    gt: &mut GroundTruth,
    spec: &ContaminationSpec,
    rate: f64,
    rows: &[usize],
    sigma: &Matrix,
    rng: &mut RandomSource,
) -> Result<()> {
    let p = out.p();
    let mut budget = (rate * (rows.len() * p) as f64).round() as usize;
    if budget == 0 || rows.is_empty() {
        return Ok(());
    }
    let mut order = rows.to_vec();
    rng.shuffle(&mut order);
    let mut free: Vec<Vec<usize>> = vec![Vec::new(); out.n()];
    for &i in &order {
        free[i] = (0..p).collect();
    }
    while budget > 0 {
        let mut progressed = false;
        for &i in &order {
            if budget == 0 {
                break;
            }
            if free[i].is_empty() {
                continue;
            }
            let size = (5 + rng.index(11)).min(budget).min(free[i].len());
            let picks = rng.sample_without_replacement(free[i].len(), size);
            let mut group: Vec<usize> = picks.iter().map(|&k| free[i][k]).collect();
            group.sort_unstable();
            free[i].retain(|j| group.binary_search(j).is_err());
            let (_, v) = min_eigenvector(&sigma.submatrix(&group))?;
            let scale = spec.gamma_corr * (group.len() as f64).sqrt();
            for (&j, &vj) in group.iter().zip(&v) {
                out.x[(i, j)] = scale * vj;
                gt.mask_x.set(i, j, true);
            }
            budget -= size;
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mean;

    fn small_cfg() -> SimConfig {
        SimConfig {
            n: 50,
            p: 40,
            sparsity: 10,
            block_size: 5,
            seed: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn headline_configuration_shapes() {
        let ds = generate_clean(&SimConfig::default()).unwrap();
        assert_eq!((ds.n(), ds.p()), (50, 500));
        let truth = ds.truth.unwrap();
        assert_eq!(truth.active_set.len(), 50);
        assert_eq!(truth.active_set, (0..50).collect::<Vec<_>>());
        assert_eq!(truth.mask_x.count(), 0);
    }

    #[test]
    fn snr_matches_empirical_variances() {
        let cfg = SimConfig {
            n: 1000,
            p: 60,
            sparsity: 10,
            block_size: 5,
            seed: 9,
            ..SimConfig::default()
        };
        let ds = generate_clean(&cfg).unwrap();
        let truth = ds.truth.as_ref().unwrap();
        let signal = ds.x.matvec(&truth.beta).unwrap();
        let eps: Vec<f64> = ds.y.iter().zip(&signal).map(|(y, s)| y - s).collect();
        let ratio = variance(&eps) / variance(&signal);
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn null_model_has_pure_noise_response() {
        let cfg = SimConfig {
            sparsity: 0,
            ..small_cfg()
        };
        let ds = generate_clean(&cfg).unwrap();
        let truth = ds.truth.unwrap();
        assert!(truth.beta.iter().all(|&b| b == 0.0));
        assert!(truth.active_set.is_empty());
        assert_eq!(truth.noise_sd, 1.0);
        assert!(mean(&ds.y).abs() < 1.0);
    }

    #[test]
    fn clean_scenario_is_identity() {
        let g = Generator::new(small_cfg()).unwrap();
        let ds = g.generate_clean();
        let out = g.contaminate(&ds, &ContaminationSpec::default()).unwrap();
        assert_eq!(out.x, ds.x);
        assert_eq!(out.y, ds.y);
        assert_eq!(out.truth.unwrap().mask_x.count(), 0);
    }

    #[test]
    fn masks_mark_exactly_the_rewritten_cells() {
        let g = Generator::new(small_cfg()).unwrap();
        let ds = g.generate_clean();
        for sc in Scenario::ALL {
            let out = g.contaminate(&ds, &ContaminationSpec::standard(sc)).unwrap();
            let t = out.truth.as_ref().unwrap();
            for i in 0..ds.n() {
                for j in 0..ds.p() {
                    assert_eq!(out.x[(i, j)] != ds.x[(i, j)], t.mask_x.get(i, j), "{sc:?} ({i},{j})");
                }
                assert_eq!(out.y[i] != ds.y[i], t.mask_y[i]);
            }
        }
    }

    #[test]
    fn casewise_rows_follow_the_distorted_model() {
        let g = Generator::new(small_cfg()).unwrap();
        let ds = g.generate_clean();
        let out = g.contaminate(&ds, &ContaminationSpec::standard(Scenario::Casewise)).unwrap();
        let t = out.truth.as_ref().unwrap();
        let rows: Vec<usize> = (0..ds.n()).filter(|&i| t.mask_y[i]).collect();
        assert_eq!(rows.len(), 5);
        for i in rows {
            let expect: f64 = out.x.row(i).iter().zip(&t.beta).map(|(x, b)| x * b * 100.0).sum();
            assert!((out.y[i] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn mixture_cellwise_avoids_casewise_rows() {
        let g = Generator::new(small_cfg()).unwrap();
        let ds = g.generate_clean();
        let out = g
            .contaminate(&ds, &ContaminationSpec::standard(Scenario::MixtureCorrelation))
            .unwrap();
        let t = out.truth.as_ref().unwrap();
        let case_rows = t.mask_y.iter().filter(|&&b| b).count();
        assert_eq!(case_rows, 5);
        let cell_count = t.mask_x.count() - case_rows * ds.p();
        assert_eq!(cell_count, (0.05 * (45 * 40) as f64).round() as usize);
    }

    #[test]
    fn incompatible_rates_rejected() {
        let spec = ContaminationSpec {
            scenario: Scenario::CellwiseMarginal,
            alpha: 0.05,
            alpha2: 0.05,
            ..ContaminationSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = ContaminationSpec {
            scenario: Scenario::MixtureMarginal,
            alpha: 0.6,
            alpha2: 0.5,
            ..ContaminationSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn invalid_covariance_rejected() {
        let cfg = SimConfig {
            rho_within: 0.5,
            rho_background: -0.6,
            sparsity: 0,
            ..small_cfg()
        };
        assert!(matches!(Generator::new(cfg), Err(FscreError::InvalidConfig(_))));
    }

    #[test]
    fn test_sets_are_deterministic() {
        let cfg = small_cfg();
        let ds = generate_clean(&cfg).unwrap();
        let t = ds.truth.unwrap();
        let a = make_test_set(&cfg, &t.beta, t.noise_sd, 7).unwrap();
        let b = make_test_set(&cfg, &t.beta, t.noise_sd, 7).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(make_test_set(&cfg, &t.beta, t.noise_sd, 1).unwrap().n(), 1);
    }
}
