//! Generative simulation, holdout masking, and the evaluation metrics
//! used to benchmark fits against known truth: relative Frobenius
//! errors, empirical interval coverage, AUC, and a replication harness.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use flair_core::model::{linear_predictor, Dataset, FactorState, FitOptions};
use flair_core::numcore::{sample_truncated_normal, LinkFunction, RngState};
use flair_core::posterior::{IntervalTarget, MatrixIntervals};
use flair_core::{Error, Result};

use crate::pipeline::{fit_pipeline, KChoice, PipelineFit, PipelineOptions};

/// Generative settings for one simulated dataset.
///
/// Loadings and coefficients are drawn from a spike-and-slab
/// `spike_prob·δ₀ + (1−spike_prob)·TN(0, σ², [−bound, bound])`; a spike
/// of zero makes every entry active. Covariates are `(1, N(0,1), …)`
/// and factors are standard normal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub q: usize,
    pub sigma2: f64,
    pub spike_prob: f64,
    pub bound: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Spike-and-slab preset: half the parameter entries are exact zeros.
    pub fn spike_slab_protocol(n: usize, p: usize, k: usize, q: usize, sigma2: f64, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            k,
            q,
            sigma2,
            spike_prob: 0.5,
            bound: 5.0,
            seed,
        }
    }

    /// Dense preset: no point mass, k = q = 2, σ² = 1.
    pub fn dense_protocol(n: usize, p: usize, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            k: 2,
            q: 2,
            sigma2: 1.0,
            spike_prob: 0.0,
            bound: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.k == 0 || self.q == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument("sigma2 must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return Err(Error::InvalidArgument("spike_prob must lie in [0, 1]".into()));
        }
        if !(self.bound > 0.0) {
            return Err(Error::InvalidArgument("bound must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub lambda0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub m0: DMatrix<f64>,
    pub z0: DMatrix<f64>,
}

impl SimTruth {
    pub fn lambda_outer(&self) -> DMatrix<f64> {
        &self.lambda0 * self.lambda0.transpose()
    }
}

fn spike_slab(cfg: &SimConfig, rng: &mut RngState) -> Result<f64> {
    if cfg.spike_prob > 0.0 && rng.uniform() < cfg.spike_prob {
        Ok(0.0)
    } else {
        sample_truncated_normal(rng, 0.0, cfg.sigma2.sqrt(), -cfg.bound, cfg.bound)
    }
}

/// Draw parameters, covariates and outcomes per the generative protocol.
pub fn simulate_dataset(cfg: &SimConfig, rng: &mut RngState) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let link = LinkFunction::Logit;
    let mut lambda0 = DMatrix::zeros(cfg.p, cfg.k);
    for v in lambda0.iter_mut() {
        *v = spike_slab(cfg, rng)?;
    }
    let mut b0 = DMatrix::zeros(cfg.p, cfg.q);
    for v in b0.iter_mut() {
        *v = spike_slab(cfg, rng)?;
    }
    let x = DMatrix::from_fn(cfg.n, cfg.q, |_, c| {
        if c == 0 {
            1.0
        } else {
            rng.standard_normal()
        }
    });
    let m0 = DMatrix::from_fn(cfg.n, cfg.k, |_, _| rng.standard_normal());
    let truth_state = FactorState::new(m0.clone(), lambda0.clone(), b0.clone())?;
    let z0 = linear_predictor(&truth_state, &x)?;
    let mut y = DMatrix::zeros(cfg.n, cfg.p);
    for j in 0..cfg.p {
        for i in 0..cfg.n {
            let prob = link.eval(z0[(i, j)])?;
            y[(i, j)] = if rng.uniform() < prob { 1.0 } else { 0.0 };
        }
    }
    let names = (0..cfg.p).map(|j| format!("y{}", j + 1)).collect();
    let data = Dataset::new(y, x, None, Some(names))?;
    Ok((
        data,
        SimTruth {
            lambda0,
            b0,
            m0,
            z0,
        },
    ))
}

/// Pick ⌊fraction·np⌉ cells to hold out. Stratified mode samples the
/// 1-cells and 0-cells separately so the held-out 1-rate matches the
/// global rate. Errors if some row or column would lose all its
/// training cells.
pub fn make_holdout_mask(
    y: &DMatrix<f64>,
    fraction: f64,
    stratified: bool,
    rng: &mut RngState,
) -> Result<DMatrix<bool>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let (n, p) = y.shape();
    let mut mask = DMatrix::from_element(n, p, false);
    let flat_index = |cell: usize| (cell % n, cell / n);

    if stratified {
        let mut ones: Vec<usize> = Vec::new();
        let mut zeros: Vec<usize> = Vec::new();
        for cell in 0..n * p {
            let (i, j) = flat_index(cell);
            if y[(i, j)] == 1.0 {
                ones.push(cell);
            } else {
                zeros.push(cell);
            }
        }
        let take_ones = (fraction * ones.len() as f64).round() as usize;
        let take_zeros = (fraction * zeros.len() as f64).round() as usize;
        for (pool, take) in [(&mut ones, take_ones), (&mut zeros, take_zeros)] {
            partial_shuffle(pool, take, rng);
            for &cell in pool.iter().take(take) {
                let (i, j) = flat_index(cell);
                mask[(i, j)] = true;
            }
        }
    } else {
        let mut cells: Vec<usize> = (0..n * p).collect();
        let take = (fraction * (n * p) as f64).round() as usize;
        partial_shuffle(&mut cells, take, rng);
        for &cell in cells.iter().take(take) {
            let (i, j) = flat_index(cell);
            mask[(i, j)] = true;
        }
    }

    for i in 0..n {
        if (0..p).all(|j| mask[(i, j)]) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction {fraction} leaves row {i} without training cells"
            )));
        }
    }
    for j in 0..p {
        if (0..n).all(|i| mask[(i, j)]) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction {fraction} leaves column {j} without training cells"
            )));
        }
    }
    Ok(mask)
}

/// Fisher-Yates on the first `take` slots.
fn partial_shuffle(items: &mut [usize], take: usize, rng: &mut RngState) {
    let len = items.len();
    for i in 0..take.min(len.saturating_sub(1)) {
        let j = i + rng.index(len - i);
        items.swap(i, j);
    }
}

/// ‖est − Λ₀Λ₀ᵀ‖_F / ‖Λ₀Λ₀ᵀ‖_F.
pub fn rel_frob_error_lambda_outer(est: &DMatrix<f64>, lambda0: &DMatrix<f64>) -> Result<f64> {
    let truth = lambda0 * lambda0.transpose();
    if est.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {:?} but truth outer product is {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "relative error undefined for zero true loadings".into(),
        ));
    }
    Ok((est - truth).norm() / denom)
}

/// ‖est − B₀‖_F / √(pq).
pub fn rel_frob_error_b(est: &DMatrix<f64>, b0: &DMatrix<f64>) -> Result<f64> {
    if est.shape() != b0.shape() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {:?} but truth is {:?}",
            est.shape(),
            b0.shape()
        )));
    }
    let (p, q) = b0.shape();
    Ok((est - b0).norm() / ((p * q) as f64).sqrt())
}

/// Fraction of entries whose truth lies inside [lower, upper].
pub fn empirical_coverage(intervals: &MatrixIntervals, truth: &DMatrix<f64>) -> Result<f64> {
    if intervals.lower.shape() != truth.shape() || intervals.upper.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(
            "interval bounds and truth must share a shape".into(),
        ));
    }
    let total = truth.len();
    let covered = truth
        .iter()
        .zip(intervals.lower.iter().zip(intervals.upper.iter()))
        .filter(|(t, (lo, hi))| **lo <= **t && **t <= **hi)
        .count();
    Ok(covered as f64 / total as f64)
}

/// Area under the ROC curve by the rank statistic with midrank ties:
/// P(score₁ > score₀) + ½·P(tie).
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch("scores and labels differ in length".into()));
    }
    let n1 = labels.iter().filter(|&&l| l == 1.0).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Midranks over tie groups, accumulate the positive-label rank sum.
    let mut rank_sum_pos = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let mut end = idx + 1;
        while end < order.len() && scores[order[end]] == scores[order[idx]] {
            end += 1;
        }
        let midrank = (idx + 1 + end) as f64 / 2.0;
        for &item in &order[idx..end] {
            if labels[item] == 1.0 {
                rank_sum_pos += midrank;
            }
        }
        idx = end;
    }
    let n1f = n1 as f64;
    Ok((rank_sum_pos - n1f * (n1f + 1.0) / 2.0) / (n1f * n0 as f64))
}

// ---------------------------------------------------------------------
// Replication harness.

/// Controls for [`run_replication`].
#[derive(Debug, Clone)]
pub struct ReplicationOptions {
    pub fit: FitOptions,
    /// `Some(k_max)` selects the latent dimension by the information
    /// criterion on every replicate; `None` uses the generative k.
    pub auto_k: Option<usize>,
    /// Hold out this fraction of cells (stratified) and report AUC.
    pub holdout_fraction: Option<f64>,
    /// Monte Carlo samples per interval computation.
    pub n_mc: usize,
    /// ΛΛᵀ coverage is evaluated on a random submatrix of this size when
    /// p exceeds it.
    pub coverage_submatrix: usize,
    /// Equal-tail interval level.
    pub alpha: f64,
}

impl Default for ReplicationOptions {
    fn default() -> Self {
        ReplicationOptions {
            fit: FitOptions::default(),
            auto_k: None,
            holdout_fraction: None,
            n_mc: 2000,
            coverage_submatrix: 100,
            alpha: 0.05,
        }
    }
}

/// Everything measured on a single replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub rel_err_lambda_outer: f64,
    pub rel_err_b: f64,
    pub coverage_lambda_outer: f64,
    pub coverage_b: f64,
    pub coverage_lambda_outer_uncorrected: f64,
    pub coverage_b_uncorrected: f64,
    pub auc: Option<f64>,
    pub auc_baseline: Option<f64>,
    pub k_selected: usize,
    pub rho: f64,
    pub fit_seconds: f64,
}

/// Mean and standard error of one metric across replicates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_error: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MetricSummary {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Aggregated replication report; the JSON document emitted by the
/// `replicate` command mirrors this struct.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub rel_err_lambda_outer: MetricSummary,
    pub rel_err_b: MetricSummary,
    pub coverage_lambda_outer: MetricSummary,
    pub coverage_b: MetricSummary,
    pub coverage_lambda_outer_uncorrected: MetricSummary,
    pub coverage_b_uncorrected: MetricSummary,
    pub auc: Option<MetricSummary>,
    pub auc_baseline: Option<MetricSummary>,
    pub rho: MetricSummary,
    pub fit_seconds: MetricSummary,
    pub k_selected: Vec<usize>,
    pub replicates: usize,
    pub per_replicate: Vec<ReplicateOutcome>,
}

/// Simulate, fit and score `replicates` independent datasets. Replicates
/// run in parallel on seeded substreams, so the report is identical for
/// any thread count.
pub fn run_replication(
    cfg: &SimConfig,
    replicates: usize,
    opts: &ReplicationOptions,
) -> Result<FitReport> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    cfg.validate()?;
    let outcomes: Vec<ReplicateOutcome> = (0..replicates)
        .into_par_iter()
        .map(|rep| run_one_replicate(cfg, rep as u64, opts))
        .collect::<Result<_>>()?;

    let collect = |f: &dyn Fn(&ReplicateOutcome) -> f64| -> Vec<f64> {
        outcomes.iter().map(f).collect()
    };
    let auc_values: Vec<f64> = outcomes.iter().filter_map(|o| o.auc).collect();
    let auc_base_values: Vec<f64> = outcomes.iter().filter_map(|o| o.auc_baseline).collect();
    Ok(FitReport {
        rel_err_lambda_outer: MetricSummary::from_values(&collect(&|o| o.rel_err_lambda_outer)),
        rel_err_b: MetricSummary::from_values(&collect(&|o| o.rel_err_b)),
        coverage_lambda_outer: MetricSummary::from_values(&collect(&|o| o.coverage_lambda_outer)),
        coverage_b: MetricSummary::from_values(&collect(&|o| o.coverage_b)),
        coverage_lambda_outer_uncorrected: MetricSummary::from_values(&collect(
            &|o| o.coverage_lambda_outer_uncorrected,
        )),
        coverage_b_uncorrected: MetricSummary::from_values(&collect(
            &|o| o.coverage_b_uncorrected,
        )),
        auc: (!auc_values.is_empty()).then(|| MetricSummary::from_values(&auc_values)),
        auc_baseline: (!auc_base_values.is_empty())
            .then(|| MetricSummary::from_values(&auc_base_values)),
        rho: MetricSummary::from_values(&collect(&|o| o.rho)),
        fit_seconds: MetricSummary::from_values(&collect(&|o| o.fit_seconds)),
        k_selected: outcomes.iter().map(|o| o.k_selected).collect(),
        replicates,
        per_replicate: outcomes,
    })
}

fn run_one_replicate(
    cfg: &SimConfig,
    rep: u64,
    opts: &ReplicationOptions,
) -> Result<ReplicateOutcome> {
    let mut rng = RngState::from_seed(cfg.seed).substream(rep);
    let (mut data, truth) = simulate_dataset(cfg, &mut rng)?;
    if let Some(fraction) = opts.holdout_fraction {
        let mask = make_holdout_mask(data.y(), fraction, true, &mut rng)?;
        data = data.with_mask(Some(mask))?;
    }

    let pipeline_opts = PipelineOptions {
        k: match opts.auto_k {
            Some(k_max) => KChoice::Auto { k_max },
            None => KChoice::Fixed(cfg.k),
        },
        fit: opts.fit.clone(),
        ..PipelineOptions::default()
    };
    let fit = fit_pipeline(&data, &pipeline_opts)?;
    score_fit(&fit, &data, &truth, &mut rng, opts)
}

/// Compute every metric in the report for an already-fitted pipeline.
pub fn score_fit(
    fit: &PipelineFit,
    data: &Dataset,
    truth: &SimTruth,
    rng: &mut RngState,
    opts: &ReplicationOptions,
) -> Result<ReplicateOutcome> {
    let (sigma, b_mean) = fit.posterior.posterior_mean_sigma();
    let rel_err_lambda_outer = rel_frob_error_lambda_outer(&sigma, &truth.lambda0)?;
    let rel_err_b = rel_frob_error_b(&b_mean, &truth.b0)?;

    // Coverage targets: all of B, and a seeded random submatrix of ΛΛᵀ
    // when p is large.
    let p = data.p();
    let rows: Vec<usize> = if p > opts.coverage_submatrix {
        let mut pool: Vec<usize> = (0..p).collect();
        partial_shuffle(&mut pool, opts.coverage_submatrix, rng);
        let mut rows = pool[..opts.coverage_submatrix].to_vec();
        rows.sort_unstable();
        rows
    } else {
        (0..p).collect()
    };
    let truth_outer = truth.lambda_outer();
    let truth_sub = DMatrix::from_fn(rows.len(), rows.len(), |a, b| {
        truth_outer[(rows[a], rows[b])]
    });

    let target = IntervalTarget::LambdaOuterSubmatrix(rows.clone());
    let corrected = fit
        .posterior
        .credible_intervals(&target, opts.alpha, opts.n_mc, rng)?
        .lambda_outer
        .expect("lambda intervals requested");
    let b_corrected = fit
        .posterior
        .credible_intervals(&IntervalTarget::B, opts.alpha, opts.n_mc, rng)?
        .b
        .expect("B intervals requested");

    let plain = fit.posterior.clone().with_inflation(1.0)?;
    let uncorrected = plain
        .credible_intervals(&target, opts.alpha, opts.n_mc, rng)?
        .lambda_outer
        .expect("lambda intervals requested");
    let b_uncorrected = plain
        .credible_intervals(&IntervalTarget::B, opts.alpha, opts.n_mc, rng)?
        .b
        .expect("B intervals requested");

    let coverage_lambda_outer = empirical_coverage(&corrected, &truth_sub)?;
    let coverage_lambda_outer_uncorrected = empirical_coverage(&uncorrected, &truth_sub)?;
    let coverage_b = empirical_coverage(&b_corrected, &truth.b0)?;
    let coverage_b_uncorrected = empirical_coverage(&b_uncorrected, &truth.b0)?;

    // Held-out AUC against the intercept-only (column-rate) baseline.
    let (mut auc_value, mut auc_baseline) = (None, None);
    if let Some(mask) = data.mask() {
        let (scores, baseline, labels) = holdout_scores(fit, data, mask)?;
        if labels.contains(&1.0) && labels.contains(&0.0) {
            auc_value = Some(auc(&scores, &labels)?);
            auc_baseline = Some(auc(&baseline, &labels)?);
        }
    }

    Ok(ReplicateOutcome {
        rel_err_lambda_outer,
        rel_err_b,
        coverage_lambda_outer,
        coverage_b,
        coverage_lambda_outer_uncorrected,
        coverage_b_uncorrected,
        auc: auc_value,
        auc_baseline,
        k_selected: fit.k,
        rho: fit.posterior.rho(),
        fit_seconds: fit.seconds.total,
    })
}

fn holdout_scores(
    fit: &PipelineFit,
    data: &Dataset,
    mask: &DMatrix<bool>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n, p) = data.y().shape();
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..p).collect();
    let probs = fit.posterior.predict_probabilities(&all_rows, &all_cols)?;

    // Column training rates as the intercept-only baseline.
    let mut col_rate = DVector::<f64>::zeros(p);
    for j in 0..p {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if !mask[(i, j)] {
                sum += data.y()[(i, j)];
                count += 1;
            }
        }
        col_rate[j] = if count > 0 { sum / count as f64 } else { 0.5 };
    }

    let mut scores = Vec::new();
    let mut baseline = Vec::new();
    let mut labels = Vec::new();
    for j in 0..p {
        for i in 0..n {
            if mask[(i, j)] {
                scores.push(probs[(i, j)]);
                baseline.push(col_rate[j]);
                labels.push(data.y()[(i, j)]);
            }
        }
    }
    Ok((scores, baseline, labels))
}
