//! `sbh` — survival bump hunting from the command line.
//!
//! Four subcommands cover the pipeline: `simulate` draws benchmark data,
//! `fit` peels boxes on the full data, `cv` tunes the trajectory length by
//! replicated cross-validation, and `permtest` adds permutation p-values.
//! Every run writes its artifacts into `--out` and exits nonzero (leaving
//! an `error.json`) on failure; warnings go to stderr and do not change
//! the exit status.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbh::io::{
    parse_criterion, parse_opt, parse_technique, run_cv, run_fit, run_permtest, run_simulate,
    write_artifacts, write_error_record, RunConfig, RunOutput,
};

#[derive(Parser)]
#[command(
    name = "sbh",
    version,
    about = "Finds box-shaped high-risk subgroups in right-censored survival data"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Peel boxes on the full data without cross-validation.
    Fit(FitArgs),
    /// Tune the trajectory length by replicated cross-validation.
    Cv(CvArgs),
    /// Cross-validate, then assess significance by outcome permutation.
    Permtest(PermtestArgs),
    /// Draw a data set from one of the built-in simulation models.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Input CSV with time, status, and covariate columns.
    #[arg(long, value_name = "CSV", conflicts_with = "model")]
    input: Option<PathBuf>,

    /// Simulation model to draw the data from.
    #[arg(long, value_parser = ["1", "1b", "2", "3", "4"])]
    model: Option<String>,

    /// Simulated sample size (model default if omitted).
    #[arg(long)]
    n: Option<usize>,

    /// Simulated number of covariates (model 4 only).
    #[arg(long)]
    p: Option<usize>,

    /// Target censoring fraction of the simulated data.
    #[arg(long, value_name = "FRACTION")]
    pi: Option<f64>,

    /// Covariate scale of simulation model 4.
    #[arg(long)]
    sigma: Option<f64>,

    /// Master seed for all randomness in the run.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Worker threads (default: all cores).  Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, default_value = "sbh_out")]
    out: PathBuf,
}

#[derive(Args)]
struct PeelArgs {
    /// Fraction of the box peeled per step.
    #[arg(long, default_value_t = 0.10)]
    alpha0: f64,

    /// Minimal box support.
    #[arg(long, default_value_t = 0.05)]
    beta0: f64,

    /// Peeling criterion.
    #[arg(long, default_value = "lrt", value_parser = ["lrt", "chs", "lhr"])]
    criterion: String,

    /// Refine each fitted box by bottom-up pasting.
    #[arg(long)]
    paste: bool,

    /// Peeling directions: `auto` (simulated sources only) or a
    /// comma-separated list of high/low/free, one per covariate.
    #[arg(long, value_name = "SPEC")]
    directed: Option<String>,

    /// Cap on the number of peels.
    #[arg(long, value_name = "STEPS")]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct TuneArgs {
    /// Cross-validation technique.
    #[arg(long, default_value = "combined", value_parser = ["averaged", "combined", "none"])]
    technique: String,

    /// Cross-validation folds.
    #[arg(long = "K", default_value_t = 5)]
    folds: usize,

    /// Cross-validation replicates.
    #[arg(long = "B", default_value_t = 16)]
    replicates: usize,

    /// Statistic that selects the trajectory length.
    #[arg(long, default_value = "lrt", value_parser = ["lhr", "lrt", "cer"])]
    opt: String,

    /// Prefer the shortest length within one standard error of the best.
    #[arg(long)]
    one_se: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    peel: PeelArgs,
    /// Number of boxes the coverage loop may discover.
    #[arg(long = "M", default_value_t = 1)]
    coverage: usize,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    peel: PeelArgs,
    #[command(flatten)]
    tune: TuneArgs,
}

#[derive(Args)]
struct PermtestArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    peel: PeelArgs,
    #[command(flatten)]
    tune: TuneArgs,
    /// Number of outcome permutations.
    #[arg(long = "A", default_value_t = 256)]
    permutations: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
}

fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("warning: could not size the worker pool: {err}");
        }
    }
}

fn base_config(source: &SourceArgs, peel: Option<&PeelArgs>) -> sbh::Result<RunConfig> {
    let mut config = RunConfig {
        input: source.input.as_ref().map(|p| p.display().to_string()),
        model: source.model.clone(),
        n: source.n,
        p: source.p,
        censoring: source.pi,
        sigma: source.sigma,
        seed: source.seed,
        ..RunConfig::default()
    };
    if let Some(peel) = peel {
        config.alpha0 = peel.alpha0;
        config.beta0 = peel.beta0;
        config.criterion = parse_criterion(&peel.criterion)?;
        config.paste = peel.paste;
        config.directed = peel.directed.clone();
        config.max_steps = peel.max_steps;
    }
    Ok(config)
}

fn tuned_config(
    source: &SourceArgs,
    peel: &PeelArgs,
    tune: &TuneArgs,
) -> sbh::Result<RunConfig> {
    let mut config = base_config(source, Some(peel))?;
    config.technique = parse_technique(&tune.technique)?;
    config.folds = tune.folds;
    config.replicates = tune.replicates;
    config.opt = parse_opt(&tune.opt)?;
    config.one_se = tune.one_se;
    Ok(config)
}

fn dispatch(cli: Cli) -> (PathBuf, sbh::Result<RunOutput>) {
    match cli.command {
        Cmd::Fit(args) => {
            configure_threads(args.source.threads);
            let out = args.source.out.clone();
            let result = base_config(&args.source, Some(&args.peel))
                .map(|mut c| {
                    c.coverage = args.coverage;
                    c
                })
                .and_then(run_fit);
            (out, result)
        }
        Cmd::Cv(args) => {
            configure_threads(args.source.threads);
            let out = args.source.out.clone();
            let result = tuned_config(&args.source, &args.peel, &args.tune).and_then(run_cv);
            (out, result)
        }
        Cmd::Permtest(args) => {
            configure_threads(args.source.threads);
            let out = args.source.out.clone();
            let result = tuned_config(&args.source, &args.peel, &args.tune)
                .map(|mut c| {
                    c.permutations = args.permutations;
                    c
                })
                .and_then(run_permtest);
            (out, result)
        }
        Cmd::Simulate(args) => {
            configure_threads(args.source.threads);
            let out = args.source.out.clone();
            let result = base_config(&args.source, None).and_then(run_simulate);
            (out, result)
        }
    }
}

fn summarize(output: &RunOutput) {
    let report = &output.report;
    if let Some(fit) = &report.fit {
        for b in &fit.boxes {
            println!(
                "box {}: {} of {} active observations, rule: {}",
                b.index,
                b.members.len(),
                b.n_active,
                b.rule
            );
        }
    }
    if let Some(cv) = &report.cv {
        println!(
            "optimal length {} of {} (membership agreement {:.3})",
            cv.optimal_length, cv.length, cv.membership_agreement[cv.optimal_length]
        );
        println!("rule: {}", cv.rule);
    }
    if let Some(perm) = &report.permutation {
        let smallest = perm
            .steps
            .iter()
            .skip(1)
            .map(|s| s.pvalue)
            .fold(1.0, f64::min);
        println!(
            "smallest p-value {} over {} permutations",
            smallest, perm.permutations
        );
    }
    if let Some(sim) = &report.simulation {
        println!(
            "simulated {} observations ({} events) from model {}",
            report.data.n,
            sim.n_events,
            report.config.model.as_deref().unwrap_or("?")
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn fail(out_dir: &Path, err: &sbh::Error) -> ExitCode {
    let record = write_error_record(out_dir, err);
    eprintln!("error: {err}");
    eprintln!("recorded in {}", record.display());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out_dir, result) = dispatch(cli);
    match result {
        Ok(output) => match write_artifacts(&out_dir, &output) {
            Ok(paths) => {
                summarize(&output);
                for p in paths {
                    println!("wrote {}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(err) => fail(&out_dir, &err),
        },
        Err(err) => fail(&out_dir, &err),
    }
}
