//! The `flair` command-line tool: simulate | select-k | fit | evaluate |
//! replicate.
//!
//! Every option can also be given in a flat key=value config file via
//! `--config`; explicit flags override file entries, and each command
//! echoes its fully resolved configuration into the JSON it writes.
//! Exit codes: 0 success, 1 runtime/numerical failure, 2 validation or
//! usage error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use flair_core::model::{Dataset, FitOptions};
use flair_core::numcore::{LinkFunction, RngState, SvdMethod};
use flair_core::posterior::IntervalTarget;

use crate::config::Resolver;
use crate::io::{
    default_header, read_mask_csv, read_matrix_auto, read_matrix_csv, write_json, write_mask_csv,
    write_matrix, write_matrix_csv, MatrixFormat,
};
use crate::pipeline::{fit_pipeline, KChoice, PipelineOptions};
use crate::simeval::{
    auc, empirical_coverage, make_holdout_mask, rel_frob_error_b, rel_frob_error_lambda_outer,
    run_replication, simulate_dataset, ReplicationOptions, SimConfig,
};
use crate::{CliError, CliResult, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "flair",
    version,
    about = "Joint MAP and calibrated Gaussian posteriors for multivariate logistic factor regression"
)]
pub struct Cli {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a synthetic dataset and write it with its generating truth.
    Simulate(SimulateArgs),
    /// Profile the information criterion over candidate latent dimensions.
    SelectK(SelectKArgs),
    /// Fit the full model and write estimates, intervals and trace.
    Fit(FitArgs),
    /// Score fit outputs against ground truth and/or held-out cells.
    Evaluate(EvaluateArgs),
    /// Run the simulation study end to end and aggregate the metrics.
    Replicate(ReplicateArgs),
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Slab variance of the spike-and-slab parameter draws.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Point mass at zero (0.5 in the main protocol, 0 in the
    /// lower-dimensional one).
    #[arg(long)]
    pub spike_prob: Option<f64>,
    /// Truncation bound of the slab.
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a stratified holdout mask over this fraction of cells.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Sample the holdout mask without stratification.
    #[arg(long)]
    pub unstratified: bool,
    /// Write matrices in the binary container instead of CSV.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug, Default)]
pub struct SelectKArgs {
    /// Outcome matrix (CSV or binary container).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Design matrix with an all-ones first column.
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub link: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force the SVD flavor: exact | randomized.
    #[arg(long)]
    pub svd: Option<String>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct FitArgs {
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Holdout mask CSV; masked cells are excluded from the likelihood.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Latent dimension (mutually exclusive with --auto-k).
    #[arg(long)]
    pub k: Option<usize>,
    /// Select the latent dimension over 1..=K by the information criterion.
    #[arg(long, value_name = "K")]
    pub auto_k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub link: Option<String>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub nu_outcome: Option<f64>,
    #[arg(long)]
    pub nu_factor: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub c_lambda: Option<f64>,
    #[arg(long)]
    pub c_b: Option<f64>,
    /// Initialization threshold ε.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub svd: Option<String>,
    /// Calibrate ρ on this many random loading pairs instead of the
    /// exact scan (for very large p).
    #[arg(long)]
    pub rho_subsample: Option<usize>,
    /// Write matrices in the binary container instead of CSV.
    #[arg(long)]
    pub binary: bool,
    /// Also draw posterior samples of (B, Λ) into this binary container.
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct EvaluateArgs {
    /// Directory holding `fit` outputs.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// True loading matrix Λ₀ (CSV).
    #[arg(long)]
    pub truth_lambda: Option<PathBuf>,
    /// True coefficient matrix B₀ (CSV).
    #[arg(long)]
    pub truth_b: Option<PathBuf>,
    /// Outcome matrix, required with --mask for held-out AUC.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Design matrix, required with --mask for held-out AUC.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Holdout mask marking the validation cells.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub spike_prob: Option<f64>,
    #[arg(long)]
    pub bound: Option<f64>,
    /// Replication seed; required so runs are reproducible.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Re-select the latent dimension per replicate over 1..=K.
    #[arg(long, value_name = "K")]
    pub auto_k: Option<usize>,
    /// Stratified entry holdout fraction; enables the AUC column.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub link: Option<String>,
}

/// Provenance wrapper around every JSON document the tool writes.
#[derive(Serialize)]
struct Document<T: Serialize> {
    schema: u32,
    version: &'static str,
    command: &'static str,
    config: BTreeMap<String, String>,
    #[serde(flatten)]
    payload: T,
}

fn document<T: Serialize>(command: &'static str, resolver: &Resolver, payload: T) -> Document<T> {
    Document {
        schema: SCHEMA_VERSION,
        version: crate::version(),
        command,
        config: resolver.resolved(),
        payload,
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        // Ignore the error when a pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let resolver = Resolver::from_file(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&resolver, args),
        Command::SelectK(args) => cmd_select_k(&resolver, args),
        Command::Fit(args) => cmd_fit(&resolver, args),
        Command::Evaluate(args) => cmd_evaluate(&resolver, args),
        Command::Replicate(args) => cmd_replicate(&resolver, args),
    }
}

fn parse_link(name: &str) -> CliResult<LinkFunction> {
    match name {
        "logit" => Ok(LinkFunction::Logit),
        "probit" => Ok(LinkFunction::Probit),
        other => Err(CliError::Validation(format!(
            "unknown link '{other}' (expected logit or probit)"
        ))),
    }
}

fn parse_svd(name: &str) -> CliResult<SvdMethod> {
    match name {
        "exact" => Ok(SvdMethod::Exact),
        "randomized" => Ok(SvdMethod::Randomized),
        other => Err(CliError::Validation(format!(
            "unknown svd method '{other}' (expected exact or randomized)"
        ))),
    }
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn emit_matrix(
    dir: &Path,
    stem: &str,
    m: &DMatrix<f64>,
    prefix: &str,
    format: MatrixFormat,
    files: &mut BTreeMap<String, String>,
) -> CliResult<()> {
    let path = write_matrix(dir, stem, m, &default_header(prefix, m.ncols()), format)?;
    files.insert(stem.to_string(), path.display().to_string());
    Ok(())
}

fn load_dataset(
    y_path: &Path,
    x_path: &Path,
    mask_path: Option<&Path>,
) -> CliResult<Dataset> {
    let (y, names) = if y_path.extension().is_some_and(|e| e == "bin") {
        (crate::io::read_matrix_binary(y_path)?, Vec::new())
    } else {
        read_matrix_csv(y_path)?
    };
    let x = if x_path.extension().is_some_and(|e| e == "bin") {
        crate::io::read_matrix_binary(x_path)?
    } else {
        read_matrix_csv(x_path)?.0
    };
    let mask = mask_path.map(read_mask_csv).transpose()?;
    let names = (!names.is_empty()).then_some(names);
    Ok(Dataset::new(y, x, mask, names)?)
}

fn resolve_fit_options(r: &Resolver, args: &FitArgs) -> CliResult<FitOptions> {
    let defaults = FitOptions::default();
    let link = parse_link(&r.get_or("link", args.link.clone(), "logit".to_string())?)?;
    let opts = FitOptions {
        nu_outcome: r.get_or("nu-outcome", args.nu_outcome, defaults.nu_outcome)?,
        nu_factor: r.get_or("nu-factor", args.nu_factor, defaults.nu_factor)?,
        inner_tol: r.get_or("inner-tol", args.inner_tol, defaults.inner_tol)?,
        outer_tol: r.get_or("outer-tol", args.outer_tol, defaults.outer_tol)?,
        max_inner: r.get_or("max-inner", args.max_inner, defaults.max_inner)?,
        max_outer: r.get_or("max-outer", args.max_outer, defaults.max_outer)?,
        link,
        seed: r.get_or("seed", args.seed, 0)?,
    };
    opts.validate()?;
    Ok(opts)
}

// ---------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateOutput {
    files: BTreeMap<String, String>,
    sim: SimConfig,
}

fn cmd_simulate(r: &Resolver, args: SimulateArgs) -> CliResult<()> {
    let out = r.require_path("out", args.out)?;
    let cfg = SimConfig {
        n: r.require("n", args.n)?,
        p: r.require("p", args.p)?,
        k: r.require("k", args.k)?,
        q: r.require("q", args.q)?,
        sigma2: r.get_or("sigma2", args.sigma2, 1.0)?,
        spike_prob: r.get_or("spike-prob", args.spike_prob, 0.5)?,
        bound: r.get_or("bound", args.bound, 5.0)?,
        seed: r.require("seed", args.seed)?,
    };
    let holdout = r.optional("holdout-fraction", args.holdout_fraction)?;
    let unstratified = r.switch("unstratified", args.unstratified)?;
    let binary = r.switch("binary", args.binary)?;
    let format = if binary {
        MatrixFormat::Binary
    } else {
        MatrixFormat::Csv
    };
    cfg.validate().map_err(CliError::from)?;
    ensure_dir(&out)?;

    let mut rng = RngState::from_seed(cfg.seed);
    let (data, truth) = simulate_dataset(&cfg, &mut rng)?;

    let mut files = BTreeMap::new();
    emit_matrix(&out, "Y", data.y(), "y", format, &mut files)?;
    emit_matrix(&out, "X", data.x(), "x", format, &mut files)?;
    emit_matrix(&out, "Lambda0", &truth.lambda0, "l", format, &mut files)?;
    emit_matrix(&out, "B0", &truth.b0, "b", format, &mut files)?;
    emit_matrix(&out, "M0", &truth.m0, "m", format, &mut files)?;

    if let Some(fraction) = holdout {
        let mask = make_holdout_mask(data.y(), fraction, !unstratified, &mut rng)?;
        let path = out.join("mask.csv");
        write_mask_csv(&path, &mask)?;
        files.insert("mask".to_string(), path.display().to_string());
    }

    write_json(
        &out.join("meta.json"),
        &document("simulate", r, SimulateOutput { files, sim: cfg }),
    )
}

// ---------------------------------------------------------------------

#[derive(Serialize)]
struct SelectKOutput {
    jic: Vec<JicRow>,
    selected: usize,
}

#[derive(Serialize)]
struct JicRow {
    k: usize,
    jic: f64,
}

fn cmd_select_k(r: &Resolver, args: SelectKArgs) -> CliResult<()> {
    let y_path = r.require_path("y", args.y)?;
    let x_path = r.require_path("x", args.x)?;
    let k_max: usize = r.require("k-max", args.k_max)?;
    let link = parse_link(&r.get_or("link", args.link, "logit".to_string())?)?;
    let seed = r.get_or("seed", args.seed, 0)?;
    let svd = r
        .optional("svd", args.svd)?
        .map(|s: String| parse_svd(&s))
        .transpose()?;
    let out = r.optional_path("out", args.out)?;

    let data = load_dataset(&y_path, &x_path, None)?;
    let mut rng = RngState::from_seed(seed);
    let values = flair_core::init::jic_profile(&data, k_max, link, svd, &mut rng)?;
    let mut selected = 1usize;
    for (idx, v) in values.iter().enumerate() {
        if *v < values[selected - 1] {
            selected = idx + 1;
        }
    }
    let rows: Vec<JicRow> = values
        .iter()
        .enumerate()
        .map(|(idx, &jic)| JicRow { k: idx + 1, jic })
        .collect();
    for row in &rows {
        println!("k={} jic={:.6}", row.k, row.jic);
    }
    println!("selected k = {selected}");
    if let Some(path) = out {
        write_json(
            &path,
            &document("select-k", r, SelectKOutput { jic: rows, selected }),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------

#[derive(Serialize)]
struct FitOutput {
    k: usize,
    rho: f64,
    converged: bool,
    outer_iterations: usize,
    log_posterior_final: f64,
    seconds: crate::pipeline::PhaseSeconds,
    files: BTreeMap<String, String>,
    jic: Option<Vec<JicRow>>,
}

#[derive(Serialize)]
struct TraceOutput<'a> {
    log_posterior: &'a [f64],
    outer_iterations: usize,
    converged: bool,
    outcome_newton_steps: &'a [usize],
    factor_newton_steps: &'a [usize],
    outcome_seconds: &'a [f64],
    factor_seconds: &'a [f64],
}

/// Full Σ̃ is written when p stays below this; above it a seeded random
/// submatrix is used instead.
const FULL_SIGMA_LIMIT: usize = 1000;
/// ΛΛᵀ intervals cover the full matrix when p stays below this.
const FULL_INTERVAL_LIMIT: usize = 100;

fn cmd_fit(r: &Resolver, args: FitArgs) -> CliResult<()> {
    let y_path = r.require_path("y", args.y.clone())?;
    let x_path = r.require_path("x", args.x.clone())?;
    let mask_path = r.optional_path("mask", args.mask.clone())?;
    let out = r.require_path("out", args.out.clone())?;
    let k_fixed = r.optional("k", args.k)?;
    let auto_k = r.optional("auto-k", args.auto_k)?;
    let n_mc = r.get_or("n-mc", args.n_mc, 2000)?;
    let alpha = r.get_or("alpha", args.alpha, 0.05)?;
    let c_lambda = r.get_or("c-lambda", args.c_lambda, 10.0)?;
    let c_b = r.get_or("c-b", args.c_b, 10.0)?;
    let threshold = r.optional("threshold", args.threshold)?;
    let svd = r
        .optional("svd", args.svd.clone())?
        .map(|s: String| parse_svd(&s))
        .transpose()?;
    let rho_pairs = r.optional("rho-subsample", args.rho_subsample)?;
    let binary = r.switch("binary", args.binary)?;
    let samples_out = r.optional_path("samples-out", args.samples_out.clone())?;
    let fit_opts = resolve_fit_options(r, &args)?;

    let k_choice = match (k_fixed, auto_k) {
        (Some(k), None) => KChoice::Fixed(k),
        (None, Some(k_max)) => KChoice::Auto { k_max },
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "--k and --auto-k are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Validation(
                "one of --k or --auto-k is required".into(),
            ))
        }
    };

    let data = load_dataset(&y_path, &x_path, mask_path.as_deref())?;
    // Validate feasibility before any numerics.
    let probe_k = match &k_choice {
        KChoice::Fixed(k) => *k,
        KChoice::Auto { k_max } => *k_max,
    };
    if probe_k == 0 || probe_k + data.q() > data.n().min(data.p()) {
        return Err(CliError::Validation(format!(
            "k = {probe_k} with q = {} is infeasible for a {}x{} outcome matrix",
            data.q(),
            data.n(),
            data.p()
        )));
    }
    ensure_dir(&out)?;

    let opts = PipelineOptions {
        k: k_choice,
        fit: fit_opts,
        c_lambda,
        c_b,
        svd_method: svd,
        threshold,
        rho_pairs,
    };
    let fit = fit_pipeline(&data, &opts)?;
    let format = if binary {
        MatrixFormat::Binary
    } else {
        MatrixFormat::Csv
    };

    let mut files = BTreeMap::new();
    emit_matrix(&out, "Lambda_tilde", &fit.state.lambda, "l", format, &mut files)?;
    emit_matrix(&out, "B_tilde", &fit.state.b, "b", format, &mut files)?;
    emit_matrix(&out, "M_tilde", &fit.state.m, "m", format, &mut files)?;

    let p = data.p();
    let mut rng = RngState::from_seed(opts.fit.seed).substream(0x5eed);
    let interval_rows: Vec<usize> = if p > FULL_INTERVAL_LIMIT {
        let mut pool: Vec<usize> = (0..p).collect();
        for i in 0..FULL_INTERVAL_LIMIT {
            let j = i + rng.index(p - i);
            pool.swap(i, j);
        }
        let mut rows = pool[..FULL_INTERVAL_LIMIT].to_vec();
        rows.sort_unstable();
        rows
    } else {
        (0..p).collect()
    };

    // Posterior-mean covariance, full or on the interval rows.
    let (sigma, _) = fit.posterior.posterior_mean_sigma();
    if p <= FULL_SIGMA_LIMIT {
        emit_matrix(&out, "Sigma_tilde", &sigma, "s", format, &mut files)?;
    } else {
        let sub = DMatrix::from_fn(interval_rows.len(), interval_rows.len(), |a, b| {
            sigma[(interval_rows[a], interval_rows[b])]
        });
        emit_matrix(&out, "Sigma_tilde", &sub, "s", format, &mut files)?;
    }
    if p > FULL_INTERVAL_LIMIT {
        let rows_m = DMatrix::from_fn(interval_rows.len(), 1, |a, _| interval_rows[a] as f64);
        let path = out.join("Lambda_outer_rows.csv");
        write_matrix_csv(&path, &rows_m, &["row".to_string()])?;
        files.insert("Lambda_outer_rows".to_string(), path.display().to_string());
    }

    std::fs::write(out.join("rho.txt"), format!("{:.16e}\n", fit.posterior.rho()))
        .map_err(|e| CliError::Runtime(format!("rho.txt: {e}")))?;
    files.insert("rho".to_string(), out.join("rho.txt").display().to_string());

    // Credible intervals: B analytically, ΛΛᵀ by Monte Carlo.
    let b_set = fit
        .posterior
        .credible_intervals(&IntervalTarget::B, alpha, n_mc, &mut rng)?;
    let b_iv = b_set.b.expect("B intervals");
    emit_matrix(&out, "B_lower", &b_iv.lower, "b", format, &mut files)?;
    emit_matrix(&out, "B_upper", &b_iv.upper, "b", format, &mut files)?;

    let l_target = IntervalTarget::LambdaOuterSubmatrix(interval_rows.clone());
    let l_set = fit
        .posterior
        .credible_intervals(&l_target, alpha, n_mc, &mut rng)?;
    let l_iv = l_set.lambda_outer.expect("lambda intervals");
    emit_matrix(&out, "Lambda_outer_lower", &l_iv.lower, "s", format, &mut files)?;
    emit_matrix(&out, "Lambda_outer_upper", &l_iv.upper, "s", format, &mut files)?;

    if let Some(samples_path) = samples_out {
        // n_mc stacked blocks of p rows, each (β_j, λ_j) packed.
        let samples = fit.posterior.sample_posterior(n_mc, &mut rng)?;
        let (k, q) = (fit.posterior.k(), fit.posterior.q());
        let mut stacked = DMatrix::zeros(n_mc * p, k + q);
        for s in 0..n_mc {
            for j in 0..p {
                for c in 0..q {
                    stacked[(s * p + j, c)] = samples.b[s][(j, c)];
                }
                for c in 0..k {
                    stacked[(s * p + j, q + c)] = samples.lambda[s][(j, c)];
                }
            }
        }
        crate::io::write_matrix_binary(&samples_path, &stacked)?;
        files.insert("samples".to_string(), samples_path.display().to_string());
    }

    write_json(
        &out.join("trace.json"),
        &document(
            "fit",
            r,
            TraceOutput {
                log_posterior: &fit.trace.log_posterior,
                outer_iterations: fit.trace.outer_iterations,
                converged: fit.trace.converged,
                outcome_newton_steps: &fit.trace.outcome_newton_steps,
                factor_newton_steps: &fit.trace.factor_newton_steps,
                outcome_seconds: &fit.trace.outcome_seconds,
                factor_seconds: &fit.trace.factor_seconds,
            },
        ),
    )?;
    let jic_rows = fit.jic_values.as_ref().map(|values| {
        values
            .iter()
            .enumerate()
            .map(|(idx, &jic)| JicRow { k: idx + 1, jic })
            .collect()
    });
    write_json(
        &out.join("meta.json"),
        &document(
            "fit",
            r,
            FitOutput {
                k: fit.k,
                rho: fit.posterior.rho(),
                converged: fit.trace.converged,
                outer_iterations: fit.trace.outer_iterations,
                log_posterior_final: *fit.trace.log_posterior.last().unwrap(),
                seconds: fit.seconds,
                files,
                jic: jic_rows,
            },
        ),
    )
}

// ---------------------------------------------------------------------

#[derive(Serialize, Default)]
struct EvaluateOutput {
    rel_err_lambda_outer: Option<f64>,
    rel_err_b: Option<f64>,
    coverage_lambda_outer: Option<f64>,
    coverage_b: Option<f64>,
    auc: Option<f64>,
    n_holdout_cells: Option<usize>,
}

fn cmd_evaluate(r: &Resolver, args: EvaluateArgs) -> CliResult<()> {
    let fit_dir = r.require_path("fit", args.fit)?;
    let truth_lambda = r.optional_path("truth-lambda", args.truth_lambda)?;
    let truth_b = r.optional_path("truth-b", args.truth_b)?;
    let y_path = r.optional_path("y", args.y)?;
    let x_path = r.optional_path("x", args.x)?;
    let mask_path = r.optional_path("mask", args.mask)?;
    let out = r.require_path("out", args.out)?;

    let have_truth = truth_lambda.is_some() || truth_b.is_some();
    let have_holdout = mask_path.is_some();
    if !have_truth && !have_holdout {
        return Err(CliError::Validation(
            "nothing to evaluate: provide --truth-lambda/--truth-b and/or --mask".into(),
        ));
    }

    let mut report = EvaluateOutput::default();

    if let Some(lambda_path) = &truth_lambda {
        let (lambda0, _) = read_matrix_csv(lambda_path)?;
        // Prefer the posterior-mean covariance when the full matrix was
        // written; fall back to the low-rank estimate.
        let rows_file = fit_dir.join("Lambda_outer_rows.csv");
        let sigma_est = if rows_file.exists() {
            let lambda_tilde = read_matrix_auto(&fit_dir, "Lambda_tilde")?;
            &lambda_tilde * lambda_tilde.transpose()
        } else {
            read_matrix_auto(&fit_dir, "Sigma_tilde")?
        };
        report.rel_err_lambda_outer = Some(rel_frob_error_lambda_outer(&sigma_est, &lambda0)?);

        // Interval coverage on whichever rows the fit emitted.
        let lower = read_matrix_auto(&fit_dir, "Lambda_outer_lower")?;
        let upper = read_matrix_auto(&fit_dir, "Lambda_outer_upper")?;
        let truth_outer = &lambda0 * lambda0.transpose();
        let rows: Vec<usize> = if rows_file.exists() {
            read_matrix_csv(&rows_file)?
                .0
                .iter()
                .map(|&v| v as usize)
                .collect()
        } else {
            (0..lambda0.nrows()).collect()
        };
        let truth_sub =
            DMatrix::from_fn(rows.len(), rows.len(), |a, b| truth_outer[(rows[a], rows[b])]);
        report.coverage_lambda_outer = Some(empirical_coverage(
            &flair_core::posterior::MatrixIntervals { lower, upper },
            &truth_sub,
        )?);
    }

    if let Some(b_path) = &truth_b {
        let (b0, _) = read_matrix_csv(b_path)?;
        let b_tilde = read_matrix_auto(&fit_dir, "B_tilde")?;
        report.rel_err_b = Some(rel_frob_error_b(&b_tilde, &b0)?);
        let lower = read_matrix_auto(&fit_dir, "B_lower")?;
        let upper = read_matrix_auto(&fit_dir, "B_upper")?;
        report.coverage_b = Some(empirical_coverage(
            &flair_core::posterior::MatrixIntervals { lower, upper },
            &b0,
        )?);
    }

    if let Some(mask_path) = &mask_path {
        let (Some(y_path), Some(x_path)) = (&y_path, &x_path) else {
            return Err(CliError::Validation(
                "--mask needs --y and --x to score held-out cells".into(),
            ));
        };
        let data = load_dataset(y_path, x_path, Some(mask_path))?;
        let mask = data.mask().expect("mask just loaded");
        let lambda_tilde = read_matrix_auto(&fit_dir, "Lambda_tilde")?;
        let b_tilde = read_matrix_auto(&fit_dir, "B_tilde")?;
        let m_tilde = read_matrix_auto(&fit_dir, "M_tilde")?;
        let state = flair_core::model::FactorState::new(m_tilde, lambda_tilde, b_tilde)?;
        let z = flair_core::model::linear_predictor(&state, data.x())?;
        let link = LinkFunction::Logit;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for j in 0..data.p() {
            for i in 0..data.n() {
                if mask[(i, j)] {
                    scores.push(link.eval(z[(i, j)])?);
                    labels.push(data.y()[(i, j)]);
                }
            }
        }
        report.n_holdout_cells = Some(scores.len());
        report.auc = Some(auc(&scores, &labels)?);
    }

    write_json(&out, &document("evaluate", r, report))
}

// ---------------------------------------------------------------------

#[derive(Serialize)]
struct ReplicateOutput {
    sim: SimConfig,
    report: crate::simeval::FitReport,
}

fn cmd_replicate(r: &Resolver, args: ReplicateArgs) -> CliResult<()> {
    let out = r.require_path("out", args.out)?;
    let cfg = SimConfig {
        n: r.require("n", args.n)?,
        p: r.require("p", args.p)?,
        k: r.require("k", args.k)?,
        q: r.require("q", args.q)?,
        sigma2: r.get_or("sigma2", args.sigma2, 1.0)?,
        spike_prob: r.get_or("spike-prob", args.spike_prob, 0.5)?,
        bound: r.get_or("bound", args.bound, 5.0)?,
        seed: r.require("seed", args.seed)?,
    };
    let replicates: usize = r.require("replicates", args.replicates)?;
    let link = parse_link(&r.get_or("link", args.link, "logit".to_string())?)?;
    let opts = ReplicationOptions {
        fit: FitOptions {
            link,
            seed: cfg.seed,
            ..FitOptions::default()
        },
        auto_k: r.optional("auto-k", args.auto_k)?,
        holdout_fraction: r.optional("holdout-fraction", args.holdout_fraction)?,
        n_mc: r.get_or("n-mc", args.n_mc, 2000)?,
        coverage_submatrix: 100,
        alpha: r.get_or("alpha", args.alpha, 0.05)?,
    };
    cfg.validate().map_err(CliError::from)?;
    ensure_dir(&out)?;

    let report = run_replication(&cfg, replicates, &opts)?;
    write_aggregate_csv(&out.join("aggregate.csv"), &report)?;
    println!(
        "replicates={} err_lambda_outer_x100={:.2} err_B_x100={:.2} \
         coverage_lambda={:.2}% ({:.2}% uncorrected) coverage_B={:.2}% ({:.2}% uncorrected) \
         mean_fit_seconds={:.2}",
        report.replicates,
        100.0 * report.rel_err_lambda_outer.mean,
        100.0 * report.rel_err_b.mean,
        100.0 * report.coverage_lambda_outer.mean,
        100.0 * report.coverage_lambda_outer_uncorrected.mean,
        100.0 * report.coverage_b.mean,
        100.0 * report.coverage_b_uncorrected.mean,
        report.fit_seconds.mean,
    );
    write_json(
        &out.join("report.json"),
        &document("replicate", r, ReplicateOutput { sim: cfg, report }),
    )
}

/// One aggregate row, errors and coverage multiplied by 100 to match the
/// usual presentation.
fn write_aggregate_csv(path: &Path, report: &crate::simeval::FitReport) -> CliResult<()> {
    let mut header = vec![
        "replicates",
        "err_lambda_outer_x100",
        "err_lambda_outer_se_x100",
        "err_B_x100",
        "err_B_se_x100",
        "coverage_lambda_outer_pct",
        "coverage_lambda_outer_uncorrected_pct",
        "coverage_B_pct",
        "coverage_B_uncorrected_pct",
        "rho_mean",
        "fit_seconds_mean",
    ];
    let mut values = vec![
        report.replicates as f64,
        100.0 * report.rel_err_lambda_outer.mean,
        100.0 * report.rel_err_lambda_outer.std_error,
        100.0 * report.rel_err_b.mean,
        100.0 * report.rel_err_b.std_error,
        100.0 * report.coverage_lambda_outer.mean,
        100.0 * report.coverage_lambda_outer_uncorrected.mean,
        100.0 * report.coverage_b.mean,
        100.0 * report.coverage_b_uncorrected.mean,
        report.rho.mean,
        report.fit_seconds.mean,
    ];
    if let Some(auc) = &report.auc {
        header.push("auc_mean");
        values.push(auc.mean);
    }
    if let Some(auc_base) = &report.auc_baseline {
        header.push("auc_baseline_mean");
        values.push(auc_base.mean);
    }
    let m = DMatrix::from_row_slice(1, values.len(), &values);
    let header: Vec<String> = header.into_iter().map(String::from).collect();
    write_matrix_csv(path, &m, &header)
}
