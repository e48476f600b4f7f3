//! Config-driven simulation runs, benchmarks and CSV fit/predict.

use crate::data::{parse_record, Dataset};
use crate::ensemble::FscreConfig;
use crate::error::{FscreError, Result};
use crate::linalg::{median, Matrix};
use crate::metrics::{mspe, selection_scores, EvalReport};
use crate::pipeline::{self, PipelineConfig};
use crate::properties::{self, SuiteOutcome};
use crate::robustfit::EnsembleModel;
use crate::rng::split_seed;
use crate::simgen::{ContaminationSpec, Generator, Scenario, SimConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Version of the results CSV layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 17] = [
    "schema_version",
    "mode",
    "scenario",
    "n",
    "p",
    "sparsity",
    "snr",
    "alpha",
    "K",
    "tau",
    "rep",
    "seed",
    "mspe",
    "recall",
    "precision",
    "selected_count",
    "cpu_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Fit,
    SweepK,
    SweepContamination,
    Benchmark,
    Selftest,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::SweepK => "sweep-k",
            Mode::SweepContamination => "sweep-contamination",
            Mode::Benchmark => "benchmark",
            Mode::Selftest => "selftest",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = FscreError;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::Fit, Mode::SweepK, Mode::SweepContamination, Mode::Benchmark, Mode::Selftest]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| FscreError::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkGrid {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
}

impl Default for BenchmarkGrid {
    fn default() -> Self {
        Self {
            n: vec![50, 100],
            p: vec![250, 500, 1000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub contamination: ContaminationSpec,
    pub fscre: FscreConfig,
    pub replications: usize,
    pub test_size: usize,
    pub output_path: PathBuf,
    pub mode: Mode,
    /// Imputation stage on or off.
    pub impute: bool,
    /// Divide MSPE by the true noise variance.
    pub normalize_mspe: bool,
    /// Ensemble sizes visited by `sweep-k`.
    pub k_grid: Vec<usize>,
    /// Scenarios visited by `sweep-contamination`, at their standard rates.
    pub scenarios: Vec<Scenario>,
    pub benchmark: BenchmarkGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            contamination: ContaminationSpec::default(),
            fscre: FscreConfig::default(),
            replications: 50,
            test_size: 5000,
            output_path: PathBuf::from("results.csv"),
            mode: Mode::Fit,
            impute: true,
            normalize_mspe: true,
            k_grid: (1..=20).collect(),
            scenarios: Scenario::ALL.to_vec(),
            benchmark: BenchmarkGrid::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON document; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FscreError::Parse(format!("config line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            FscreError::Parse(m) => FscreError::Parse(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FscreError::InvalidConfig(m.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.test_size == 0 {
            return bad("test_size must be positive");
        }
        self.sim.validate()?;
        self.contamination.validate()?;
        self.fscre.validate(self.sim.n, self.sim.p)?;
        match self.mode {
            Mode::SweepK if self.k_grid.is_empty() || self.k_grid.contains(&0) => bad("k_grid needs positive entries"),
            Mode::SweepContamination if self.scenarios.is_empty() => bad("scenarios is empty"),
            Mode::Benchmark if self.benchmark.n.is_empty() || self.benchmark.p.is_empty() => bad("benchmark grid is empty"),
            _ => Ok(()),
        }
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: Mode,
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub sparsity: usize,
    pub snr: f64,
    pub alpha: f64,
    pub k: usize,
    pub tau: f64,
    pub rep: usize,
    pub seed: u64,
    pub report: EvalReport,
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            SCHEMA_VERSION.to_string(),
            self.mode.to_string(),
            self.scenario.name().to_string(),
            self.n.to_string(),
            self.p.to_string(),
            self.sparsity.to_string(),
            self.snr.to_string(),
            self.alpha.to_string(),
            self.k.to_string(),
            self.tau.to_string(),
            self.rep.to_string(),
            self.seed.to_string(),
            format!("{:?}", r.mspe),
            format!("{:?}", r.recall),
            r.precision.map(|v| format!("{v:?}")).unwrap_or_default(),
            r.selected_count.to_string(),
            format!("{:.6}", r.cpu_seconds),
        ]
    }
}

/// Simulates one replication and scores the fitted ensemble on a clean test set.
pub fn run_replication(
    sim: &SimConfig,
    spec: &ContaminationSpec,
    fscre: &FscreConfig,
    test_size: usize,
    impute: bool,
    normalize: bool,
) -> Result<EvalReport> {
    let gen = Generator::new(sim.clone())?;
    let clean = gen.generate_clean();
    let data = gen.contaminate(&clean, spec)?;
    let truth = clean.truth.as_ref().expect("simulated data carry truth");
    let cfg = PipelineConfig {
        impute,
        ..PipelineConfig::new(fscre.clone())
    };
    let out = pipeline::fit(&data, &cfg)?;
    let test = gen.make_test_set(&truth.beta, truth.noise_sd, test_size)?;
    let pred = out.model.predict(&test.x)?;
    let noise_var = if normalize { truth.noise_sd * truth.noise_sd } else { 1.0 };
    let selected = out.selection.selected();
    let (recall, precision) = if truth.active_set.is_empty() {
        (f64::NAN, None)
    } else {
        selection_scores(&truth.active_set, &selected)?
    };
    Ok(EvalReport {
        mspe: mspe(&test.y, &pred, noise_var)?,
        recall,
        precision,
        cpu_seconds: out.cpu_seconds,
        selected_count: selected.len(),
    })
}

#[derive(Debug, Clone)]
struct Job {
    sim: SimConfig,
    spec: ContaminationSpec,
    fscre: FscreConfig,
    rep: usize,
}

fn jobs(cfg: &ExperimentConfig, seed: u64) -> Vec<Job> {
    let reps = cfg.replications;
    let mut out = Vec::new();
    let mut push = |sim: SimConfig, spec: ContaminationSpec, fscre: FscreConfig| {
        for rep in 0..reps {
            let s = split_seed(seed, rep as u64);
            out.push(Job {
                sim: SimConfig { seed: s, ..sim.clone() },
                spec: spec.clone(),
                fscre: FscreConfig { seed: s, ..fscre.clone() },
                rep,
            });
        }
    };
    match cfg.mode {
        Mode::Fit | Mode::Selftest => push(cfg.sim.clone(), cfg.contamination.clone(), cfg.fscre.clone()),
        Mode::SweepK => {
            for &k in &cfg.k_grid {
                push(cfg.sim.clone(), cfg.contamination.clone(), FscreConfig { k, ..cfg.fscre.clone() });
            }
        }
        Mode::SweepContamination => {
            for &sc in &cfg.scenarios {
                let spec = ContaminationSpec {
                    leverage_c: cfg.contamination.leverage_c,
                    marginal_shift: cfg.contamination.marginal_shift,
                    gamma_corr: cfg.contamination.gamma_corr,
                    beta_distort: cfg.contamination.beta_distort,
                    ..ContaminationSpec::standard(sc)
                };
                push(cfg.sim.clone(), spec, cfg.fscre.clone());
            }
        }
        Mode::Benchmark => {
            for &n in &cfg.benchmark.n {
                for &p in &cfg.benchmark.p {
                    let sim = SimConfig {
                        n,
                        p,
                        sparsity: cfg.sim.sparsity.min(p),
                        ..cfg.sim.clone()
                    };
                    push(sim, cfg.contamination.clone(), cfg.fscre.clone());
                }
            }
        }
    }
    out
}

/// Runs every replication of the configured mode, in parallel, returning the
/// rows in job order.
pub fn collect_rows(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let jobs = jobs(cfg, seed);
    // benchmark cells time sequentially so fits do not compete for cores
    let run = |job: &Job| -> Result<ResultRow> {
        let report = run_replication(&job.sim, &job.spec, &job.fscre, cfg.test_size, cfg.impute, cfg.normalize_mspe)?;
        Ok(ResultRow {
            mode: cfg.mode,
            scenario: job.spec.scenario,
            n: job.sim.n,
            p: job.sim.p,
            sparsity: job.sim.sparsity,
            snr: job.sim.snr,
            alpha: job.spec.alpha + job.spec.alpha2,
            k: job.fscre.k,
            tau: job.fscre.tau,
            rep: job.rep,
            seed: job.sim.seed,
            report,
        })
    };
    if cfg.mode == Mode::Benchmark {
        jobs.iter().map(run).collect()
    } else {
        jobs.par_iter().map(run).collect()
    }
}

fn config_comment(cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let mut doc = serde_json::to_value(cfg)?;
    doc["seed"] = serde_json::Value::from(seed);
    Ok(format!("# {}\n", serde_json::to_string(&doc)?))
}

/// Writes the results CSV: a `#` comment with the full config, then the
/// header and one line per row.
pub fn write_results(path: impl AsRef<Path>, cfg: &ExperimentConfig, seed: u64, rows: &[ResultRow]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(config_comment(cfg, seed)?.as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Median fit time per `(n, p)` cell, in first-seen order.
pub fn benchmark_medians(rows: &[ResultRow]) -> Vec<(usize, usize, f64)> {
    let mut cells: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for r in rows {
        match cells.iter_mut().find(|c| c.0 == r.n && c.1 == r.p) {
            Some(c) => c.2.push(r.report.cpu_seconds),
            None => cells.push((r.n, r.p, vec![r.report.cpu_seconds])),
        }
    }
    cells.into_iter().map(|(n, p, t)| (n, p, median(&t))).collect()
}

/// Path of the benchmark summary next to the results file.
pub fn median_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}_median.csv"))
}

#[derive(Debug)]
pub enum ExperimentOutcome {
    Rows(Vec<ResultRow>),
    Selftest(Vec<SuiteOutcome>),
}

/// Runs the configured mode and writes its outputs under `cfg.output_path`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let out = &cfg.output_path;
    if cfg.mode == Mode::Selftest {
        let suites = properties::selftest(seed)?;
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["suite", "runs", "failures", "max_deviation", "passed"])?;
        for s in &suites {
            w.write_record([
                s.name.clone(),
                s.runs.to_string(),
                s.failures.len().to_string(),
                format!("{:e}", s.max_deviation),
                s.passed().to_string(),
            ])?;
        }
        w.flush()?;
        return Ok(ExperimentOutcome::Selftest(suites));
    }
    let rows = collect_rows(cfg, seed)?;
    write_results(out, cfg, seed, &rows)?;
    if cfg.mode == Mode::Benchmark {
        let mut w = csv::Writer::from_path(median_path(out))?;
        w.write_record(["n", "p", "median_cpu_seconds"])?;
        for (n, p, t) in benchmark_medians(&rows) {
            w.write_record([n.to_string(), p.to_string(), format!("{t:.6}")])?;
        }
        w.flush()?;
    }
    Ok(ExperimentOutcome::Rows(rows))
}

/// Summary of a CSV fit.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model: EnsembleModel,
    pub trace_length: usize,
    pub stop_reason: String,
}

impl fmt::Display for FitSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "models: {}", self.model.k())?;
        for (k, s) in self.model.sets.iter().enumerate() {
            let names: Vec<&str> = s
                .iter()
                .map(|&j| self.model.names.get(j).map_or("?", String::as_str))
                .collect();
            writeln!(f, "  model {k}: {names:?}")?;
        }
        writeln!(f, "iterations: {}", self.trace_length)?;
        write!(f, "stopped: {}", self.stop_reason)
    }
}

/// Fits a CSV with header `y,x1..xp` and writes the model JSON.
pub fn fit_csv(data_path: impl AsRef<Path>, fscre: &FscreConfig, model_out: impl AsRef<Path>) -> Result<FitSummary> {
    let data = Dataset::read_csv(data_path)?;
    if data.n() < 10 {
        return Err(FscreError::InvalidConfig(format!("need at least 10 rows, found {}", data.n())));
    }
    let out = pipeline::fit(&data, &PipelineConfig::new(fscre.clone()))?;
    out.model.save(model_out)?;
    Ok(FitSummary {
        trace_length: out.selection.trace.len(),
        stop_reason: out.selection.stop_reason.to_string(),
        model: out.model,
    })
}

/// Reads a predictor CSV with a header. A leading `y` column is ignored.
pub fn read_predictors(path: impl AsRef<Path>, p: usize) -> Result<Matrix> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let skip = usize::from(header.len() == p + 1 && header[0] == "y");
    if header.len() - skip != p {
        return Err(FscreError::shape(format!("{p} predictor columns"), format!("{} columns in {}", header.len(), path.display())));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let row = parse_record(&rec?, header.len(), line + 2, path)?;
        data.extend_from_slice(&row[skip..]);
        rows += 1;
    }
    if rows == 0 {
        return Err(FscreError::Parse(format!("{}: no data rows", path.display())));
    }
    Matrix::new(rows, p, data)
}

/// Predicts every row of a predictor CSV and writes one value per line.
pub fn predict_csv(model_path: impl AsRef<Path>, x_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let model = EnsembleModel::load(model_path)?;
    let x = read_predictors(x_path, model.p)?;
    let pred = model.predict(&x)?;
    let mut w = csv::Writer::from_path(out_path)?;
    w.write_record(["prediction"])?;
    for v in &pred {
        w.write_record([format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(pred)
}

/// The bundled 50 x 20 example dataset.
pub const EXAMPLE_CSV: &str = include_str!("../fixtures/example_50x20.csv");

/// Parameters that regenerate [`EXAMPLE_CSV`].
pub fn example_config() -> (SimConfig, ContaminationSpec) {
    (
        SimConfig {
            n: 50,
            p: 20,
            sparsity: 4,
            snr: 3.0,
            block_size: 4,
            seed: 2024,
            ..SimConfig::default()
        },
        ContaminationSpec::standard(Scenario::CellwiseMarginal),
    )
}
