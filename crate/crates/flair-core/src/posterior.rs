//! Gaussian approximation to the conditional posterior of (Λ, B) given
//! the estimated factors: per-outcome covariances, coverage-calibrating
//! variance inflation, sampling, closed-form moments and credible
//! intervals.
//!
//! The packed parameter vector keeps the coefficient block first,
//! θ_j = (β_j, λ_j), matching the Newton machinery in [`crate::map`].

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::model::{linear_predictor, Dataset, FactorState, PriorConfig};
use crate::numcore::{norm_quantile, LinkFunction, RngState};
use rand::RngCore;
use crate::par::for_each_index;
use crate::{Error, Result};

/// Constant from the logistic-to-normal scale bridge used in the
/// residual-variance proxy: sup |h(x) − Φ(x/1.702)| < 0.0095.
const LOGISTIC_NORMAL_SCALE: f64 = 1.702;

/// Per-outcome Gaussian approximation N(θ̃_j, ρ²Ṽ_j), j = 1..p.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    /// p x (k+q) matrix of means; row j stacks (β̃_j, λ̃_j).
    theta: DMatrix<f64>,
    /// Per-outcome (k+q) x (k+q) covariances before inflation.
    v: Vec<DMatrix<f64>>,
    /// Variance inflation factor, at least 1.
    rho: f64,
    link: LinkFunction,
    /// Post-processed factor estimate, kept for prediction.
    m_tilde: DMatrix<f64>,
    /// Covariates, kept for prediction.
    x: DMatrix<f64>,
    k: usize,
    q: usize,
}

/// Lower/upper interval bounds for one matrix target.
#[derive(Debug, Clone)]
pub struct MatrixIntervals {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

/// Equal-tail credible intervals produced by
/// [`GaussianPosterior::credible_intervals`].
#[derive(Debug, Clone)]
pub struct IntervalSet {
    /// Interval level α (intervals are equal-tail 1−α).
    pub alpha: f64,
    /// Intervals for B, when requested.
    pub b: Option<MatrixIntervals>,
    /// Intervals for ΛΛᵀ restricted to `lambda_outer_rows`, when requested.
    pub lambda_outer: Option<MatrixIntervals>,
    /// Row/column indices the ΛΛᵀ intervals refer to.
    pub lambda_outer_rows: Vec<usize>,
}

/// Which functional to compute intervals for.
#[derive(Debug, Clone)]
pub enum IntervalTarget {
    /// All entries of B, from the marginal normals.
    B,
    /// All entries of ΛΛᵀ, by Monte Carlo.
    LambdaOuter,
    /// The symmetric submatrix of ΛΛᵀ indexed by these rows, by Monte Carlo.
    LambdaOuterSubmatrix(Vec<usize>),
}

/// Monte Carlo draws of (B, Λ) with per-sample access to ΛΛᵀ.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub b: Vec<DMatrix<f64>>,
    pub lambda: Vec<DMatrix<f64>>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// ΛΛᵀ for draw s.
    pub fn lambda_outer(&self, s: usize) -> DMatrix<f64> {
        &self.lambda[s] * self.lambda[s].transpose()
    }
}

/// Inverse negative Hessian of the per-outcome log-posterior at the
/// estimate: Ṽ_j = [Σ_i w_ij x̃_i x̃_iᵀ + diag(τ_{βj}⁻² I_q, τ_{λj}⁻² I_k)]⁻¹
/// with x̃_i = (x_i, η̃_i) and w_ij = h(z̃_ij){1 − h(z̃_ij)}. Masked cells
/// are excluded from the sum.
pub fn compute_vj(
    j: usize,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    if j >= data.p() {
        return Err(Error::invalid(format!("outcome index {j} out of range")));
    }
    let z_col = data.x() * state.b.row(j).transpose() + &state.m * state.lambda.row(j).transpose();
    vj_from_predictor(j, &z_col, state, data, prior, link)
}

fn vj_from_predictor(
    j: usize,
    z_col: &DVector<f64>,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    let (n, k, q) = (data.n(), state.k(), state.q());
    let d = k + q;
    let mut info = DMatrix::<f64>::zeros(d, d);
    let mut row = DVector::<f64>::zeros(d);
    for i in 0..n {
        if data.is_masked(i, j) {
            continue;
        }
        for c in 0..q {
            row[c] = data.x()[(i, c)];
        }
        for c in 0..k {
            row[q + c] = state.m[(i, c)];
        }
        let h = link.eval_raw(z_col[i]);
        let w = h * (1.0 - h);
        for a in 0..d {
            for b in a..d {
                info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let prec_b = 1.0 / (prior.tau_beta[j] * prior.tau_beta[j]);
    let prec_l = 1.0 / (prior.tau_lambda[j] * prior.tau_lambda[j]);
    for a in 0..d {
        info[(a, a)] += if a < q { prec_b } else { prec_l };
        for b in a + 1..d {
            info[(b, a)] = info[(a, b)];
        }
    }
    Cholesky::new(info)
        .map(|chol| chol.inverse())
        .ok_or_else(|| {
            Error::numerical(format!(
                "information matrix for outcome {j} is not positive definite"
            ))
        })
}

/// Variance inflation factor ρ = max_{j,j'} b_{jj'} over all ordered
/// pairs including j = j'.
///
/// σ̃_j² = 1.702² + n / Σ_i h(z̃_ij){1 − h(z̃_ij)};
/// b_jj = {1 + ‖λ̃_j‖² / (2σ̃_j²)}^{1/2};
/// b_jj' = {1 + [‖λ̃_j‖²‖λ̃_j'‖² + (λ̃_jᵀλ̃_j')²] /
///         [σ̃_j'²‖λ̃_j‖² + σ̃_j²‖λ̃_j'‖²]}^{1/2} for j ≠ j'.
/// A pair with both loadings zero takes the limiting value 1.
pub fn calibrate_rho(state: &FactorState, data: &Dataset, link: LinkFunction) -> Result<f64> {
    let sigma2 = residual_variances(state, data, link)?;
    rho_from_parts(&state.lambda, &sigma2, None)
}

/// Like [`calibrate_rho`] but scanning only `n_pairs` random off-diagonal
/// pairs (all diagonal terms are always included). Intended for very
/// large p, where the exact О(p²k) scan is costly.
pub fn calibrate_rho_subsampled(
    state: &FactorState,
    data: &Dataset,
    link: LinkFunction,
    n_pairs: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::invalid("pair subsample size must be positive"));
    }
    let sigma2 = residual_variances(state, data, link)?;
    rho_from_parts(&state.lambda, &sigma2, Some((n_pairs, rng)))
}

fn residual_variances(
    state: &FactorState,
    data: &Dataset,
    link: LinkFunction,
) -> Result<DVector<f64>> {
    let z = linear_predictor(state, data.x())?;
    let n = data.n() as f64;
    Ok(DVector::from_fn(data.p(), |j, _| {
        let mut sum_w = 0.0;
        for i in 0..data.n() {
            let h = link.eval_raw(z[(i, j)]);
            sum_w += h * (1.0 - h);
        }
        LOGISTIC_NORMAL_SCALE * LOGISTIC_NORMAL_SCALE + n / sum_w
    }))
}

fn rho_from_parts(
    lambda: &DMatrix<f64>,
    sigma2: &DVector<f64>,
    subsample: Option<(usize, &mut RngState)>,
) -> Result<f64> {
    let p = lambda.nrows();
    let sq: Vec<f64> = (0..p)
        .map(|j| lambda.row(j).iter().map(|v| v * v).sum())
        .collect();

    let mut rho: f64 = 1.0;
    for j in 0..p {
        rho = rho.max(libm::sqrt(1.0 + sq[j] / (2.0 * sigma2[j])));
    }

    let pair_value = |j: usize, l: usize| -> f64 {
        let dot: f64 = lambda.row(j).dot(&lambda.row(l));
        let num = sq[j] * sq[l] + dot * dot;
        let den = sigma2[l] * sq[j] + sigma2[j] * sq[l];
        if den <= 0.0 {
            1.0
        } else {
            libm::sqrt(1.0 + num / den)
        }
    };

    match subsample {
        None => {
            for j in 0..p {
                for l in (j + 1)..p {
                    rho = rho.max(pair_value(j, l));
                }
            }
        }
        Some((n_pairs, rng)) => {
            for _ in 0..n_pairs {
                let j = rng.index(p);
                let l = rng.index(p);
                if j != l {
                    rho = rho.max(pair_value(j, l));
                }
            }
        }
    }
    Ok(rho)
}

impl GaussianPosterior {
    /// Assemble the approximation at a post-processed MAP state: all
    /// per-outcome covariances plus the calibrated inflation factor.
    pub fn fit(
        state: &FactorState,
        data: &Dataset,
        prior: &PriorConfig,
        link: LinkFunction,
    ) -> Result<Self> {
        if state.n() != data.n() || state.p() != data.p() || state.q() != data.q() {
            return Err(Error::shape("state and dataset dimensions disagree"));
        }
        if prior.p() != data.p() {
            return Err(Error::shape("prior and dataset disagree on p"));
        }
        let (p, k, q) = (data.p(), state.k(), data.q());
        let z = linear_predictor(state, data.x())?;
        let v = for_each_index(p, |j| {
            let z_col = z.column(j).into_owned();
            vj_from_predictor(j, &z_col, state, data, prior, link)
        })?;
        let rho = calibrate_rho(state, data, link)?;
        let theta = DMatrix::from_fn(p, k + q, |j, c| {
            if c < q {
                state.b[(j, c)]
            } else {
                state.lambda[(j, c - q)]
            }
        });
        Ok(GaussianPosterior {
            theta,
            v,
            rho,
            link,
            m_tilde: state.m.clone(),
            x: data.x().clone(),
            k,
            q,
        })
    }

    /// Replace the inflation factor (ρ = 1 gives the uncorrected
    /// approximation used as a baseline in coverage studies).
    pub fn with_inflation(mut self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::invalid("inflation factor must be positive and finite"));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn link(&self) -> LinkFunction {
        self.link
    }

    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Posterior mean of (β_j, λ_j), packed.
    pub fn theta_row(&self, j: usize) -> DVector<f64> {
        self.theta.row(j).transpose()
    }

    /// Mean loadings matrix Λ̃ (p x k).
    pub fn lambda_mean(&self) -> DMatrix<f64> {
        self.theta.columns(self.q, self.k).into_owned()
    }

    /// Mean coefficient matrix B̃ (p x q).
    pub fn b_mean(&self) -> DMatrix<f64> {
        self.theta.columns(0, self.q).into_owned()
    }

    /// Uninflated covariance Ṽ_j.
    pub fn v(&self, j: usize) -> &DMatrix<f64> {
        &self.v[j]
    }

    /// Closed-form posterior means: Σ̃ = Λ̃Λ̃ᵀ + ρ²·diag{tr(Ṽ_{λ_1}), …,
    /// tr(Ṽ_{λ_p})} and B̃.
    pub fn posterior_mean_sigma(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let lambda = self.lambda_mean();
        let mut sigma = &lambda * lambda.transpose();
        let r2 = self.rho * self.rho;
        for j in 0..self.p() {
            sigma[(j, j)] += r2 * self.lambda_block_trace(j);
        }
        (sigma, self.b_mean())
    }

    fn lambda_block_trace(&self, j: usize) -> f64 {
        let v = &self.v[j];
        (self.q..self.q + self.k).map(|c| v[(c, c)]).sum()
    }

    /// Draw `n_mc` joint samples of (B, Λ); outcomes are independent with
    /// θ_j^(s) ~ N(θ̃_j, ρ²Ṽ_j). Deterministic per rng state and
    /// independent of thread scheduling.
    pub fn sample_posterior(&self, n_mc: usize, rng: &mut RngState) -> Result<PosteriorSamples> {
        if n_mc < 1 {
            return Err(Error::invalid("number of Monte Carlo samples must be positive"));
        }
        let (p, k, q) = (self.p(), self.k, self.q);
        let per_outcome = self.draw_rows(&(0..p).collect::<Vec<_>>(), n_mc, rng, false)?;
        let mut b = alloc::vec![DMatrix::<f64>::zeros(p, q); n_mc];
        let mut lambda = alloc::vec![DMatrix::<f64>::zeros(p, k); n_mc];
        for (j, draws) in per_outcome.iter().enumerate() {
            for s in 0..n_mc {
                for c in 0..q {
                    b[s][(j, c)] = draws[(s, c)];
                }
                for c in 0..k {
                    lambda[s][(j, c)] = draws[(s, q + c)];
                }
            }
        }
        Ok(PosteriorSamples { b, lambda })
    }

    /// Per-outcome draws for the requested rows. Each returned matrix is
    /// n_mc x (k+q), or n_mc x k when `lambda_only`.
    fn draw_rows(
        &self,
        rows: &[usize],
        n_mc: usize,
        rng: &mut RngState,
        lambda_only: bool,
    ) -> Result<Vec<DMatrix<f64>>> {
        let salt = rng.next_u64();
        let base = rng.substream(salt);
        let (k, q) = (self.k, self.q);
        let d = k + q;
        let rows_owned: Vec<usize> = rows.to_vec();
        for_each_index(rows_owned.len(), |idx| {
            let j = rows_owned[idx];
            if j >= self.p() {
                return Err(Error::invalid(format!("outcome index {j} out of range")));
            }
            let chol = Cholesky::new(self.v[j].clone()).ok_or_else(|| {
                Error::numerical(format!("covariance for outcome {j} is not positive definite"))
            })?;
            let scale = chol.l() * self.rho;
            let mean = self.theta.row(j);
            let mut stream = base.substream(j as u64);
            let (offset, width) = if lambda_only { (q, k) } else { (0, d) };
            let mut draws = DMatrix::<f64>::zeros(n_mc, width);
            let mut noise = DVector::<f64>::zeros(d);
            for s in 0..n_mc {
                for c in 0..d {
                    noise[c] = stream.standard_normal();
                }
                let sample = &scale * &noise;
                for c in 0..width {
                    draws[(s, c)] = mean[offset + c] + sample[offset + c];
                }
            }
            Ok(draws)
        })
    }

    /// Equal-tail credible intervals. B intervals are analytic from the
    /// marginal normals; ΛΛᵀ intervals are empirical quantiles over
    /// `n_mc` Monte Carlo draws (entries of ΛΛᵀ are not Gaussian).
    pub fn credible_intervals(
        &self,
        target: &IntervalTarget,
        alpha: f64,
        n_mc: usize,
        rng: &mut RngState,
    ) -> Result<IntervalSet> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("interval level alpha must lie in (0, 1)"));
        }
        let mut set = IntervalSet {
            alpha,
            b: None,
            lambda_outer: None,
            lambda_outer_rows: Vec::new(),
        };
        match target {
            IntervalTarget::B => {
                set.b = Some(self.b_intervals(alpha));
            }
            IntervalTarget::LambdaOuter => {
                let rows: Vec<usize> = (0..self.p()).collect();
                set.lambda_outer = Some(self.lambda_outer_intervals(&rows, alpha, n_mc, rng)?);
                set.lambda_outer_rows = rows;
            }
            IntervalTarget::LambdaOuterSubmatrix(rows) => {
                set.lambda_outer = Some(self.lambda_outer_intervals(rows, alpha, n_mc, rng)?);
                set.lambda_outer_rows = rows.clone();
            }
        }
        Ok(set)
    }

    fn b_intervals(&self, alpha: f64) -> MatrixIntervals {
        let z = norm_quantile(1.0 - alpha / 2.0);
        let (p, q) = (self.p(), self.q);
        let mut lower = DMatrix::zeros(p, q);
        let mut upper = DMatrix::zeros(p, q);
        for j in 0..p {
            for c in 0..q {
                let sd = self.rho * libm::sqrt(self.v[j][(c, c)]);
                lower[(j, c)] = self.theta[(j, c)] - z * sd;
                upper[(j, c)] = self.theta[(j, c)] + z * sd;
            }
        }
        MatrixIntervals { lower, upper }
    }

    fn lambda_outer_intervals(
        &self,
        rows: &[usize],
        alpha: f64,
        n_mc: usize,
        rng: &mut RngState,
    ) -> Result<MatrixIntervals> {
        let tail = n_mc as f64 * alpha / 2.0;
        if tail < 5.0 {
            return Err(Error::invalid(format!(
                "{n_mc} Monte Carlo samples are too few for equal-tail level {alpha} \
                 (need n_mc * alpha / 2 >= 5)"
            )));
        }
        let draws = self.draw_rows(rows, n_mc, rng, true)?;
        let r = rows.len();
        let mut lower = DMatrix::zeros(r, r);
        let mut upper = DMatrix::zeros(r, r);
        let mut entry = alloc::vec![0.0f64; n_mc];
        for a in 0..r {
            for b in a..r {
                for s in 0..n_mc {
                    let mut dot = 0.0;
                    for c in 0..self.k {
                        dot += draws[a][(s, c)] * draws[b][(s, c)];
                    }
                    entry[s] = dot;
                }
                entry.sort_by(f64::total_cmp);
                let lo = sorted_quantile(&entry, alpha / 2.0);
                let hi = sorted_quantile(&entry, 1.0 - alpha / 2.0);
                lower[(a, b)] = lo;
                lower[(b, a)] = lo;
                upper[(a, b)] = hi;
                upper[(b, a)] = hi;
            }
        }
        Ok(MatrixIntervals { lower, upper })
    }

    /// Success probabilities h(x_iᵀβ̃_j + η̃_iᵀλ̃_j) at the posterior
    /// means for the requested cells.
    pub fn predict_probabilities(&self, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.m_tilde.nrows();
        if let Some(&i) = rows.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("sample index {i} out of range")));
        }
        if let Some(&j) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(Error::invalid(format!("outcome index {j} out of range")));
        }
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                let mut z = 0.0;
                for c in 0..self.q {
                    z += self.x[(i, c)] * self.theta[(j, c)];
                }
                for c in 0..self.k {
                    z += self.m_tilde[(i, c)] * self.theta[(j, self.q + c)];
                }
                out[(a, b)] = self.link.eval_raw(z);
            }
        }
        Ok(out)
    }
}

/// Quantile of an already-sorted slice with linear interpolation between
/// order statistics.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_posterior(p: usize, k: usize, q: usize, rho: f64) -> GaussianPosterior {
        let mut rng = RngState::from_seed(42);
        let n = 6;
        let theta = DMatrix::from_fn(p, k + q, |_, _| rng.standard_normal());
        let v = (0..p)
            .map(|_| {
                let a = DMatrix::from_fn(k + q, k + q, |_, _| 0.3 * rng.standard_normal());
                let mut m = &a * a.transpose();
                for i in 0..k + q {
                    m[(i, i)] += 0.5;
                }
                m
            })
            .collect();
        GaussianPosterior {
            theta,
            v,
            rho,
            link: LinkFunction::Logit,
            m_tilde: DMatrix::from_fn(n, k, |_, _| rng.standard_normal()),
            x: DMatrix::from_fn(n, q, |_, c| if c == 0 { 1.0 } else { rng.standard_normal() }),
            k,
            q,
        }
    }

    #[test]
    fn b_interval_matches_normal_quantile() {
        let mut post = toy_posterior(1, 1, 1, 1.0);
        post.theta[(0, 0)] = 0.0;
        post.v[0] = DMatrix::identity(2, 2);
        let mut rng = RngState::from_seed(0);
        let set = post
            .credible_intervals(&IntervalTarget::B, 0.05, 1000, &mut rng)
            .unwrap();
        let b = set.b.unwrap();
        assert_abs_diff_eq!(b.lower[(0, 0)], -1.959_963_984_540_054, epsilon = 1e-9);
        assert_abs_diff_eq!(b.upper[(0, 0)], 1.959_963_984_540_054, epsilon = 1e-9);
    }

    #[test]
    fn nested_interval_levels() {
        let post = toy_posterior(3, 2, 2, 1.3);
        let mut rng = RngState::from_seed(7);
        let wide = post
            .credible_intervals(&IntervalTarget::LambdaOuter, 0.05, 4000, &mut rng)
            .unwrap()
            .lambda_outer
            .unwrap();
        let mut rng = RngState::from_seed(7);
        let narrow = post
            .credible_intervals(&IntervalTarget::LambdaOuter, 0.10, 4000, &mut rng)
            .unwrap()
            .lambda_outer
            .unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!(wide.lower[(a, b)] <= narrow.lower[(a, b)] + 1e-12);
                assert!(wide.upper[(a, b)] >= narrow.upper[(a, b)] - 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_interval_nonnegative_for_zero_loading() {
        // k = 1 and λ̃ = 0: the diagonal entry is a scaled chi-square.
        let mut post = toy_posterior(2, 1, 1, 1.0);
        post.theta[(0, 1)] = 0.0;
        let mut rng = RngState::from_seed(3);
        let set = post
            .credible_intervals(&IntervalTarget::LambdaOuterSubmatrix(alloc::vec![0]), 0.05, 2000, &mut rng)
            .unwrap();
        let iv = set.lambda_outer.unwrap();
        assert!(iv.lower[(0, 0)] >= 0.0);
        assert!(iv.upper[(0, 0)] > iv.lower[(0, 0)]);
    }

    #[test]
    fn interval_sample_size_guard() {
        let post = toy_posterior(2, 1, 1, 1.0);
        let mut rng = RngState::from_seed(5);
        assert!(post
            .credible_intervals(&IntervalTarget::LambdaOuter, 0.05, 100, &mut rng)
            .is_err());
        assert!(post
            .credible_intervals(&IntervalTarget::B, 0.05, 1, &mut rng)
            .is_ok());
    }

    #[test]
    fn degenerate_covariance_concentrates_samples() {
        let mut post = toy_posterior(3, 2, 1, 1.0);
        for v in post.v.iter_mut() {
            *v *= 1e-12;
        }
        let mut rng = RngState::from_seed(9);
        let samples = post.sample_posterior(50, &mut rng).unwrap();
        for s in 0..samples.len() {
            for j in 0..3 {
                assert_abs_diff_eq!(samples.b[s][(j, 0)], post.theta[(j, 0)], epsilon = 1e-5);
                for c in 0..2 {
                    assert_abs_diff_eq!(
                        samples.lambda[s][(j, c)],
                        post.theta[(j, 1 + c)],
                        epsilon = 1e-5
                    );
                }
            }
        }
    }

    #[test]
    fn sorted_quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(sorted_quantile(&v, 0.0), 1.0);
        assert_abs_diff_eq!(sorted_quantile(&v, 1.0), 5.0);
        assert_abs_diff_eq!(sorted_quantile(&v, 0.5), 3.0);
        assert_abs_diff_eq!(sorted_quantile(&v, 0.375), 2.5);
    }
}
