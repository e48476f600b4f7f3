use clap::{Parser, Subcommand};
use fscre::experiment::{self, ExperimentConfig, ExperimentOutcome, Mode};
use fscre::{FscreConfig, FscreError, Generator, Scenario, SimConfig};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "fscre", version, about = "Cellwise-robust competitive ensemble regression")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    /// JSON experiment configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fit, sweep-k, sweep-contamination, benchmark or selftest.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results CSV (overrides the config's output_path).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a CSV with header y,x1..xp and write the model JSON.
    FitCsv {
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.01)]
        tau: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        no_intercept: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Predict every row of a predictor CSV with a saved model.
    PredictCsv {
        #[arg(long)]
        model: PathBuf,
        x: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one simulated dataset and its contamination mask.
    Simulate {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        p: usize,
        #[arg(long, default_value_t = 4)]
        sparsity: usize,
        #[arg(long, default_value_t = 3.0)]
        snr: f64,
        #[arg(long, default_value_t = 4)]
        block_size: usize,
        #[arg(long, default_value = "cellwise-marginal")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
    },
}

fn config_error(e: &FscreError) -> bool {
    matches!(e, FscreError::InvalidConfig(_) | FscreError::Parse(_) | FscreError::Json(_))
}

fn fail(e: FscreError, config_stage: bool) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if config_stage || config_error(&e) { EXIT_CONFIG } else { EXIT_RUNTIME })
}

fn run_command(cmd: Command) -> Result<(), FscreError> {
    match cmd {
        Command::FitCsv { data, model, k, tau, folds, no_intercept, seed } => {
            let cfg = FscreConfig {
                k,
                tau,
                cv_folds: folds,
                intercept: !no_intercept,
                seed,
                ..FscreConfig::default()
            };
            let summary = experiment::fit_csv(&data, &cfg, &model)?;
            println!("{summary}");
        }
        Command::PredictCsv { model, x, out } => {
            let pred = experiment::predict_csv(&model, &x, &out)?;
            println!("wrote {} predictions to {}", pred.len(), out.display());
        }
        Command::Simulate { n, p, sparsity, snr, block_size, scenario, seed, out, mask } => {
            let sim = SimConfig { n, p, sparsity, snr, block_size, seed, ..SimConfig::default() };
            let scenario: Scenario = scenario.parse()?;
            let gen = Generator::new(sim)?;
            let data = gen.contaminate(&gen.generate_clean(), &fscre::ContaminationSpec::standard(scenario))?;
            data.write_csv(&out)?;
            if let Some(m) = mask {
                data.write_mask_csv(m)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    if let Some(cmd) = cli.command {
        return match run_command(cmd) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e, false),
        };
    }

    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => return fail(e, true),
        },
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &cli.mode {
        match m.parse::<Mode>() {
            Ok(mode) => cfg.mode = mode,
            Err(e) => return fail(e, true),
        }
    }
    if let Some(out) = cli.out {
        cfg.output_path = out;
    }
    if let Err(e) = cfg.validate() {
        return fail(e, true);
    }

    match experiment::run_experiment(&cfg, cli.seed) {
        Ok(ExperimentOutcome::Selftest(suites)) => {
            let mut ok = true;
            for s in &suites {
                ok &= s.passed();
                println!(
                    "{} {} ({} runs, max deviation {:e})",
                    if s.passed() { "PASS" } else { "FAIL" },
                    s.name,
                    s.runs,
                    s.max_deviation
                );
                for f in s.failures.iter().take(3) {
                    println!("    {f}");
                }
            }
            if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_SELFTEST) }
        }
        Ok(ExperimentOutcome::Rows(rows)) => {
            println!("wrote {} rows to {}", rows.len(), cfg.output_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e, false),
    }
}
