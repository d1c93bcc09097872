//! End-to-end fit: latent-dimension selection, SVD initialization,
//! data-driven prior scales, joint MAP estimation, post-processing and
//! the Gaussian posterior approximation, with wall-clock timings per
//! phase.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use flair_core::init::{jic_profile, svd_initialize, InitResult};
use flair_core::map::{map_fit, postprocess, MapTrace};
use flair_core::model::{Dataset, FactorState, FitOptions, PriorConfig, DEFAULT_BOX_BOUND};
use flair_core::numcore::{RngState, SvdMethod};
use flair_core::posterior::GaussianPosterior;
use flair_core::{Error, Result};

/// How the latent dimension is chosen.
#[derive(Debug, Clone)]
pub enum KChoice {
    /// Use this dimension as given.
    Fixed(usize),
    /// Minimize the information criterion over 1..=k_max.
    Auto { k_max: usize },
}

/// Everything the pipeline needs besides the data.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub k: KChoice,
    pub fit: FitOptions,
    /// Box half-width for loadings.
    pub c_lambda: f64,
    /// Box half-width for coefficients.
    pub c_b: f64,
    /// Force the SVD flavor; `None` picks by matrix size.
    pub svd_method: Option<SvdMethod>,
    /// Override the initialization threshold ε.
    pub threshold: Option<f64>,
    /// Subsample this many loading pairs when calibrating ρ instead of
    /// the exact O(p²) scan; off by default.
    pub rho_pairs: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            k: KChoice::Fixed(1),
            fit: FitOptions::default(),
            c_lambda: DEFAULT_BOX_BOUND,
            c_b: DEFAULT_BOX_BOUND,
            svd_method: None,
            threshold: None,
            rho_pairs: None,
        }
    }
}

/// Wall-clock seconds spent in each pipeline phase.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseSeconds {
    pub select_k: f64,
    pub init: f64,
    pub map: f64,
    pub postprocess: f64,
    pub posterior: f64,
    pub total: f64,
}

/// A completed fit.
#[derive(Debug, Clone)]
pub struct PipelineFit {
    /// Latent dimension used (selected or given).
    pub k: usize,
    /// Criterion values for 1..=k_max when selection ran.
    pub jic_values: Option<Vec<f64>>,
    /// Initialization output (pre-MAP state and prior scales).
    pub init: InitResult,
    /// Prior assembled from the selected scales.
    pub prior: PriorConfig,
    /// Post-processed MAP estimate (M̃, Λ̃, B̃).
    pub state: FactorState,
    /// Raw MAP estimate before post-processing.
    pub map_state: FactorState,
    pub trace: MapTrace,
    pub posterior: GaussianPosterior,
    pub seconds: PhaseSeconds,
}

/// Run the full procedure on a dataset.
pub fn fit_pipeline(data: &Dataset, opts: &PipelineOptions) -> Result<PipelineFit> {
    opts.fit.validate()?;
    let started = Instant::now();
    let mut seconds = PhaseSeconds::default();
    let mut rng = RngState::from_seed(opts.fit.seed);

    let watch = Instant::now();
    let (k, jic_values) = match &opts.k {
        KChoice::Fixed(k) => (*k, None),
        KChoice::Auto { k_max } => {
            let values = jic_profile(data, *k_max, opts.fit.link, opts.svd_method, &mut rng)?;
            let mut best = 0;
            for (idx, v) in values.iter().enumerate() {
                if *v < values[best] {
                    best = idx;
                }
            }
            (best + 1, Some(values))
        }
    };
    seconds.select_k = watch.elapsed().as_secs_f64();
    if k == 0 || k + data.q() > data.n().min(data.p()) {
        return Err(Error::InvalidArgument(format!(
            "latent dimension k = {k} with q = {} covariates is infeasible for a {}x{} outcome matrix",
            data.q(),
            data.n(),
            data.p()
        )));
    }

    let watch = Instant::now();
    let init = svd_initialize(
        data,
        k,
        opts.fit.link,
        opts.svd_method,
        opts.threshold,
        &mut rng,
    )?;
    let prior = PriorConfig::new(
        opts.c_lambda,
        opts.c_b,
        init.tau_lambda.clone(),
        init.tau_beta.clone(),
        k,
    )?;
    seconds.init = watch.elapsed().as_secs_f64();

    let watch = Instant::now();
    let (map_state, trace) = map_fit(data, &prior, &opts.fit, &init.state0)?;
    seconds.map = watch.elapsed().as_secs_f64();

    let watch = Instant::now();
    let state = postprocess(&map_state, data.x())?;
    seconds.postprocess = watch.elapsed().as_secs_f64();

    let watch = Instant::now();
    let mut posterior = GaussianPosterior::fit(&state, data, &prior, opts.fit.link)?;
    if let Some(pairs) = opts.rho_pairs {
        let rho = flair_core::posterior::calibrate_rho_subsampled(
            &state,
            data,
            opts.fit.link,
            pairs,
            &mut rng,
        )?;
        posterior = posterior.with_inflation(rho)?;
    }
    seconds.posterior = watch.elapsed().as_secs_f64();
    seconds.total = started.elapsed().as_secs_f64();

    Ok(PipelineFit {
        k,
        jic_values,
        init,
        prior,
        state,
        map_state,
        trace,
        posterior,
        seconds,
    })
}
