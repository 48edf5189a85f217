//! Command-line surface: fit a dataset with a chosen method, run named
//! Monte Carlo experiments, probe bias functions, and dump convergence
//! traces.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, malformed
//! input, invalid combinations), 2 on numeric failures (a fit or solver
//! run that could not be completed).

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use jini_core::bias_correct::{bbc, jini, Corrected, FailurePolicy, IbConfig};
use jini_core::crn::RngStream;
use jini_core::estimators::{FitConfig, Fitter};
use jini_core::models::{Dataset, MisclassLatents, ModelFamily, ModelSpec, ParamVec};

use jini::exec::{resolve_workers, ThreadPoolExecutor};
use jini::harness::{
    bias_probe, run_experiment, summarize, ExperimentConfig, MethodId, SettingId,
};
use jini::io::{atomic_write, config_hash, estimates_csv, read_dataset_csv, summary_json};

#[derive(Parser)]
#[command(
    name = "jini",
    version,
    about = "Simulation-based bias correction: corrected fits, Monte Carlo studies, bias-function probes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a dataset with a chosen estimation method.
    Fit(FitArgs),
    /// Run a named Monte Carlo experiment and write its outputs.
    Experiment(ExperimentArgs),
    /// Probe the simulated bias function of an initial estimator along
    /// one coordinate.
    BiasProbe(BiasProbeArgs),
    /// Run the corrected fit and dump the full iterate trace as CSV.
    Trace(TraceArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model id: logistic | logistic-misclass | poisson |
    /// poisson-censored | negbin | negbin-censored.
    #[arg(long)]
    model: String,
    /// Dataset CSV (header y,x1..xp; optional "#censor_at=C" line).
    #[arg(long)]
    data: PathBuf,
    /// Censoring threshold; overrides any file metadata.
    #[arg(long)]
    censor_at: Option<u64>,
    /// Beta shapes of the false-positive-rate latents (misclassified
    /// logistic only).
    #[arg(long, default_value_t = 2.0)]
    fp_a: f64,
    #[arg(long, default_value_t = 50.0)]
    fp_b: f64,
    /// Beta shapes of the false-negative-rate latents.
    #[arg(long, default_value_t = 2.0)]
    fn_a: f64,
    #[arg(long, default_value_t = 10.0)]
    fn_b: f64,
}

#[derive(Args)]
struct SolveArgs {
    /// Simulated samples per solver iteration.
    #[arg(long = "H", default_value_t = 200)]
    h: usize,
    /// Master seed; fully determines all stochastic behavior.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step-norm stopping tolerance of the solver.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Worker threads (default: JINI_WORKERS env var, then all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// mle | naive-mle | benchmark-mle | bbc | jini.
    #[arg(long)]
    method: String,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output JSON path.
    #[arg(long, default_value = "jini-fit.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Built-in setting name (negbin-t2, negbin-censored-t3,
    /// logistic-misclass-t4-i/-ii, logistic-t6-i/-ii,
    /// censored-poisson-t8, synthetic).
    #[arg(long, conflicts_with = "config")]
    setting: Option<String>,
    /// JSON experiment configuration (mirrors the built-in presets).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the simulated samples per iteration.
    #[arg(long = "H")]
    h: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method list override.
    #[arg(long)]
    methods: Option<String>,
    /// Full-scale study sizes (1000 replications, H = 200).
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Output prefix; writes <prefix>-estimates.csv and
    /// <prefix>-summary.json.
    #[arg(long, default_value = "experiment")]
    out_prefix: String,
}

#[derive(Args)]
struct BiasProbeArgs {
    /// Built-in setting providing the model and true parameter.
    #[arg(long)]
    setting: String,
    /// Probed coordinate, 1-based.
    #[arg(long)]
    coord: usize,
    /// Grid as lo:hi:steps (inclusive endpoints; steps=1 probes lo only).
    #[arg(long)]
    grid: String,
    /// Simulated samples per grid point (default: 1000 for the large-n
    /// logistic settings, 10000 otherwise).
    #[arg(long = "H")]
    h: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV path; a JSON sidecar goes next to it with a .json
    /// extension.
    #[arg(long, default_value = "bias-probe.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output CSV path (columns k, step_norm, residual).
    #[arg(long, default_value = "jini-trace.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                1
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::BiasProbe(args) => cmd_bias_probe(args),
        Command::Trace(args) => cmd_trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Numeric failures exit 2; everything else is a usage error (1).
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<jini_core::Error>() {
            return match core {
                jini_core::Error::InvalidArgument(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn parse_family(id: &str) -> Result<ModelFamily> {
    Ok(match id {
        "logistic" => ModelFamily::Logistic,
        "logistic-misclass" => ModelFamily::LogisticMisclassified,
        "poisson" => ModelFamily::Poisson,
        "poisson-censored" => ModelFamily::PoissonCensored,
        "negbin" => ModelFamily::NegBin,
        "negbin-censored" => ModelFamily::NegBinCensored,
        other => bail!(
            "unknown model '{other}'; available: logistic, logistic-misclass, poisson, \
             poisson-censored, negbin, negbin-censored"
        ),
    })
}

/// Loads the dataset and assembles the model around it. Misclassification
/// latents are drawn once from a substream of the master seed.
fn build_model(args: &ModelArgs, seed: u64) -> Result<(ModelSpec, Dataset)> {
    let family = parse_family(&args.model)?;
    let data = read_dataset_csv(&args.data, family.response_kind(), args.censor_at)?;
    let model = match family {
        ModelFamily::Logistic => ModelSpec::logistic(data.design.clone())?,
        ModelFamily::LogisticMisclassified => {
            let mut latent_stream = RngStream::new(seed).substream(0xA1);
            let latents = MisclassLatents::sample(
                data.n(),
                (args.fp_a, args.fp_b),
                (args.fn_a, args.fn_b),
                &mut latent_stream,
            )?;
            ModelSpec::logistic_misclassified(data.design.clone(), latents)?
        }
        ModelFamily::Poisson => ModelSpec::poisson(data.design.clone())?,
        ModelFamily::PoissonCensored => {
            let c = data.censor_at.ok_or_else(|| {
                anyhow!("model poisson-censored needs --censor-at or a #censor_at line")
            })?;
            ModelSpec::poisson_censored(data.design.clone(), c)?
        }
        ModelFamily::NegBin => ModelSpec::negbin(data.design.clone())?,
        ModelFamily::NegBinCensored => {
            let c = data.censor_at.ok_or_else(|| {
                anyhow!("model negbin-censored needs --censor-at or a #censor_at line")
            })?;
            ModelSpec::negbin_censored(data.design.clone(), c)?
        }
        ModelFamily::SyntheticLinearBias => unreachable!(),
    };
    Ok((model, data))
}

#[derive(Serialize)]
struct TraceSummaryJson {
    iterations: usize,
    converged: bool,
    fit_failures: usize,
    final_residual: Option<f64>,
    box_projected: bool,
}

#[derive(Serialize)]
struct FitOutputJson {
    model: String,
    method: String,
    estimate: Vec<f64>,
    initial_estimate: Vec<f64>,
    converged: bool,
    loglik: Option<f64>,
    h: usize,
    seed: u64,
    trace: Option<TraceSummaryJson>,
    wall_secs: f64,
}

fn run_solver(
    method: &str,
    model: &ModelSpec,
    data: &Dataset,
    solve: &SolveArgs,
) -> Result<Corrected> {
    let fit_cfg = FitConfig::default();
    let exec = ThreadPoolExecutor::new(resolve_workers(solve.workers))?;
    let fitter = Fitter::initial_for(model.family).expect("data families have a fitter");
    let ib_cfg = IbConfig {
        h: solve.h,
        tol: solve.tol,
        max_iter: solve.max_iter,
        seed: solve.seed,
        failure_policy: FailurePolicy::Abort,
    };
    match method {
        "jini" => Ok(jini(data, model, fitter, &fit_cfg, &ib_cfg, &exec)?),
        "bbc" => {
            let fit = fitter.fit(data, &model.bounds, &fit_cfg)?;
            if !fit.converged {
                return Err(anyhow!(jini_core::Error::InitialEstimatorFailure(
                    "initial fit did not converge on the observed sample".into()
                )));
            }
            let bank = jini_core::crn::CrnBank::new(solve.seed, solve.h, model.n())?;
            Ok(bbc(&fit.params, model, &bank, fitter, &fit_cfg, ib_cfg.failure_policy, &exec)?)
        }
        other => bail!("method '{other}' is not solver-based"),
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let start = Instant::now();
    let (model, data) = build_model(&args.model, args.solve.seed)?;
    let fit_cfg = FitConfig::default();
    let mut out = match args.method.as_str() {
        "mle" | "naive-mle" | "benchmark-mle" => {
            // "mle" means the family's consistent likelihood fit: the
            // censored-likelihood fit for censored families, the plain fit
            // otherwise. "naive-mle" is always the plain fit that ignores
            // censoring or misclassification.
            let fitter = match args.method.as_str() {
                "naive-mle" => Fitter::initial_for(model.family),
                _ => Fitter::benchmark_for(model.family),
            }
            .ok_or_else(|| {
                anyhow!(
                    "no consistent likelihood fit is available for model '{}'; \
                     use naive-mle, bbc, or jini",
                    args.model.model
                )
            })?;
            let fit = fitter.fit(&data, &model.bounds, &fit_cfg)?;
            FitOutputJson {
                model: args.model.model.clone(),
                method: args.method.clone(),
                estimate: fit.params.as_slice().to_vec(),
                initial_estimate: fit.params.into_vec(),
                converged: fit.converged,
                loglik: Some(fit.loglik),
                h: args.solve.h,
                seed: args.solve.seed,
                trace: None,
                wall_secs: 0.0,
            }
        }
        "bbc" | "jini" => {
            let corrected = run_solver(&args.method, &model, &data, &args.solve)?;
            let trace = corrected.trace.as_ref().map(|t| TraceSummaryJson {
                iterations: t.step_norms.len(),
                converged: t.converged,
                fit_failures: t.fit_failures,
                final_residual: t.residuals.last().copied(),
                box_projected: corrected.box_projected,
            });
            let converged = corrected.trace.as_ref().map(|t| t.converged).unwrap_or(true);
            FitOutputJson {
                model: args.model.model.clone(),
                method: args.method.clone(),
                estimate: corrected.estimate.as_slice().to_vec(),
                initial_estimate: corrected.initial.as_slice().to_vec(),
                converged,
                loglik: None,
                h: args.solve.h,
                seed: args.solve.seed,
                trace,
                wall_secs: 0.0,
            }
        }
        other => {
            bail!("unknown method '{other}'; available: mle, naive-mle, benchmark-mle, bbc, jini")
        }
    };
    out.wall_secs = start.elapsed().as_secs_f64();
    atomic_write(&args.out, &serde_json::to_string_pretty(&out)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = match (&args.setting, &args.config) {
        (Some(name), None) => ExperimentConfig::preset(SettingId::parse(name)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        _ => bail!("exactly one of --setting or --config is required"),
    };
    if args.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods
            .split(',')
            .map(|m| MethodId::parse(m.trim()))
            .collect::<Result<Vec<_>>>()?;
    }
    let workers = resolve_workers(args.workers);
    let result = run_experiment(&cfg, workers)?;

    let csv_path = PathBuf::from(format!("{}-estimates.csv", args.out_prefix));
    let json_path = PathBuf::from(format!("{}-summary.json", args.out_prefix));
    atomic_write(&csv_path, &estimates_csv(&result))?;
    atomic_write(&json_path, &summary_json(&result)?)?;

    let mut table = String::new();
    let _ = writeln!(table, "{:<14} {:<12} {:>12} {:>12}", "method", "group", "|bias|", "rmse");
    for row in summarize(&result) {
        let _ = writeln!(
            table,
            "{:<14} {:<12} {:>12.6} {:>12.6}",
            row.method, row.group, row.abs_bias, row.rmse
        );
    }
    print!("{table}");
    println!(
        "config {} | {} reps ({} initial-fit failures) in {:.1}s | wrote {} and {}",
        &config_hash(&cfg)?[..12],
        cfg.reps,
        result.initial_failures,
        result.wall_secs,
        csv_path.display(),
        json_path.display(),
    );
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be lo:hi:steps, got '{spec}'");
    }
    let lo: f64 = parts[0].parse().context("grid lo")?;
    let hi: f64 = parts[1].parse().context("grid hi")?;
    let steps: usize = parts[2].parse().context("grid steps")?;
    if steps == 0 {
        bail!("grid needs at least one step");
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    if !(lo < hi) {
        bail!("grid needs lo < hi");
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

#[derive(Serialize)]
struct ProbeSidecarJson {
    setting: String,
    coord: usize,
    h: usize,
    seed: u64,
    halfwidth: f64,
    grid: Vec<f64>,
}

fn cmd_bias_probe(args: BiasProbeArgs) -> Result<()> {
    let setting = SettingId::parse(&args.setting)?;
    let cfg = ExperimentConfig::preset(setting);
    let model = cfg.build_model()?;
    let theta0 = ParamVec::new(cfg.theta0.clone());
    if args.coord == 0 || args.coord > theta0.len() {
        bail!("--coord is 1-based and must lie in 1..={}", theta0.len());
    }
    let grid = parse_grid(&args.grid)?;
    // Large-n logistic settings get by with fewer simulated samples.
    let default_h = match setting {
        SettingId::LogisticMisclassT4I
        | SettingId::LogisticMisclassT4Ii
        | SettingId::LogisticT6I
        | SettingId::LogisticT6Ii => 1000,
        _ => 10_000,
    };
    let h = args.h.unwrap_or(default_h);
    let exec = ThreadPoolExecutor::new(resolve_workers(args.workers))?;
    let fitter = Fitter::initial_for(model.family).unwrap_or(Fitter::LogisticMle);
    let probe = bias_probe(&model, fitter, &theta0, args.coord - 1, &grid, h, args.seed, &exec)?;

    let dim = theta0.len();
    let mut csv = String::from("theta_i");
    for j in 1..=dim {
        let _ = write!(csv, ",dstar_{j}");
    }
    csv.push('\n');
    for (g, row) in probe.grid.iter().zip(&probe.dstar) {
        let _ = write!(csv, "{g}");
        for v in row {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    atomic_write(&args.out, &csv)?;
    let sidecar_path = args.out.with_extension("json");
    let sidecar = ProbeSidecarJson {
        setting: setting.name().into(),
        coord: args.coord,
        h,
        seed: args.seed,
        halfwidth: probe.halfwidth,
        grid: probe.grid.clone(),
    };
    atomic_write(&sidecar_path, &serde_json::to_string_pretty(&sidecar)?)?;
    println!("wrote {} and {}", args.out.display(), sidecar_path.display());
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let (model, data) = build_model(&args.model, args.solve.seed)?;
    let corrected = run_solver("jini", &model, &data, &args.solve)?;
    let trace = corrected.trace.as_ref().expect("solver always traces");
    let mut csv = String::from("k,step_norm,residual\n");
    for k in 0..trace.iterates.len() {
        let step = if k == 0 {
            String::new()
        } else {
            format!("{}", trace.step_norms[k - 1])
        };
        let residual = trace
            .residuals
            .get(k)
            .map(|r| format!("{r}"))
            .unwrap_or_default();
        let _ = writeln!(csv, "{k},{step},{residual}");
    }
    atomic_write(&args.out, &csv)?;
    println!(
        "{} iterations, converged = {}, final residual = {:?}; wrote {}",
        trace.step_norms.len(),
        trace.converged,
        trace.residuals.last(),
        args.out.display()
    );
    Ok(())
}
