//! SVD-based initialization of (M, Λ, B), data-driven prior scales, and
//! information-criterion selection of the latent dimension.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::model::{log_likelihood, Dataset, FactorState, PriorConfig};
use crate::numcore::{truncated_svd, LinkFunction, RngState, SvdMethod, SvdResult};
use crate::{Error, Result};

/// Hard-truncation bounds for the selected prior scales.
pub const TAU_LOWER: f64 = 0.5;
pub const TAU_UPPER: f64 = 20.0;

/// Matrix size (n·p) above which initialization switches to the
/// randomized SVD when no method is forced.
const RANDOMIZED_CUTOFF: usize = 5_000_000;

/// Output of [`svd_initialize`].
#[derive(Debug, Clone)]
pub struct InitResult {
    /// Initial factor state, projected onto the prior boxes.
    pub state0: FactorState,
    /// Selected loading scales, in [0.5, 20].
    pub tau_lambda: DVector<f64>,
    /// Selected coefficient scales, in [0.5, 20].
    pub tau_beta: DVector<f64>,
    /// Log-likelihood at `state0`; feeds the information criterion.
    pub loglik: f64,
}

impl InitResult {
    /// Prior built from the selected scales with the given box bounds.
    pub fn prior(&self, c_lambda: f64, c_b: f64, k: usize) -> Result<PriorConfig> {
        PriorConfig::new(
            c_lambda,
            c_b,
            self.tau_lambda.clone(),
            self.tau_beta.clone(),
            k,
        )
    }
}

/// Clamp a probability-scale matrix into [ε, 1−ε].
pub fn threshold_probabilities(p_hat: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 0.5), got {eps}"
        )));
    }
    Ok(p_hat.map(|v| v.clamp(eps, 1.0 - eps)))
}

/// Default threshold ε shrinking with min(n, p), floored at 1e-4.
pub fn default_threshold(n: usize, p: usize) -> f64 {
    let m = n.min(p).max(1) as f64;
    (1.0 / libm::sqrt(m)).clamp(1e-4, 0.1)
}

/// Fill held-out cells with the product of the unmasked row and column
/// means; unmasked cells pass through unchanged.
pub fn impute_for_init(y: &DMatrix<f64>, mask: Option<&DMatrix<bool>>) -> Result<DMatrix<f64>> {
    let Some(mask) = mask else {
        return Ok(y.clone());
    };
    if mask.shape() != y.shape() {
        return Err(Error::shape("mask shape must match Y"));
    }
    let (n, p) = y.shape();
    let mut row_sum = alloc::vec![0.0f64; n];
    let mut row_cnt = alloc::vec![0usize; n];
    let mut col_sum = alloc::vec![0.0f64; p];
    let mut col_cnt = alloc::vec![0usize; p];
    for j in 0..p {
        for i in 0..n {
            if !mask[(i, j)] {
                row_sum[i] += y[(i, j)];
                row_cnt[i] += 1;
                col_sum[j] += y[(i, j)];
                col_cnt[j] += 1;
            }
        }
    }
    if let Some(i) = row_cnt.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("row {i} is fully masked")));
    }
    if let Some(j) = col_cnt.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("column {j} is fully masked")));
    }
    let mut out = y.clone();
    for j in 0..p {
        let col_mean = col_sum[j] / col_cnt[j] as f64;
        for i in 0..n {
            if mask[(i, j)] {
                out[(i, j)] = (row_sum[i] / row_cnt[i] as f64) * col_mean;
            }
        }
    }
    Ok(out)
}

/// Hard truncation T(x) onto [0.5, 20].
pub fn hard_truncate(x: f64) -> f64 {
    x.clamp(TAU_LOWER, TAU_UPPER)
}

/// Data-driven prior scales: τ_{λj} = T(k^{−1/2}‖λ̂_j‖) and
/// τ_{βj} = T(k^{−1/2}‖β̂_j‖), both scaled by the latent dimension k.
pub fn select_tau(lambda_hat: &DMatrix<f64>, b_hat: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let k = lambda_hat.ncols().max(1) as f64;
    let scale = 1.0 / libm::sqrt(k);
    let tau_lambda = DVector::from_fn(lambda_hat.nrows(), |j, _| {
        hard_truncate(scale * lambda_hat.row(j).norm())
    });
    let tau_beta = DVector::from_fn(b_hat.nrows(), |j, _| {
        hard_truncate(scale * b_hat.row(j).norm())
    });
    (tau_lambda, tau_beta)
}

fn pick_method(n: usize, p: usize, forced: Option<SvdMethod>) -> SvdMethod {
    forced.unwrap_or(if n * p > RANDOMIZED_CUTOFF {
        SvdMethod::Randomized
    } else {
        SvdMethod::Exact
    })
}

/// SVD-based initialization of the factor state.
///
/// Steps: impute held-out cells, rank-(k+q) SVD of Y, threshold into
/// [ε, 1−ε], invert the link entry-wise to get Ẑ, regress Ẑ on X for B̂,
/// then a rank-k SVD of the residual Ẑ − X B̂ᵀ yields M̂ = √n L_k and
/// Λ̂ = n^{−1/2} R_k S_k. Prior scales come from the raw estimates; the
/// returned state is projected onto the prior boxes.
pub fn svd_initialize(
    data: &Dataset,
    k: usize,
    link: LinkFunction,
    method: Option<SvdMethod>,
    eps: Option<f64>,
    rng: &mut RngState,
) -> Result<InitResult> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    if k < 1 {
        return Err(Error::invalid("latent dimension k must be at least 1"));
    }
    if k + q > n.min(p) {
        return Err(Error::invalid(format!(
            "k + q = {} exceeds min(n, p) = {}",
            k + q,
            n.min(p)
        )));
    }
    let eps = eps.unwrap_or_else(|| default_threshold(n, p));
    let method = pick_method(n, p, method);

    let y_full = impute_for_init(data.y(), data.mask())?;
    let low_rank = truncated_svd(&y_full, k + q, method, rng)?.reconstruct();
    let clamped = threshold_probabilities(&low_rank, eps)?;
    let mut z_hat = DMatrix::zeros(n, p);
    for (dst, src) in z_hat.iter_mut().zip(clamped.iter()) {
        *dst = link.inverse(*src)?;
    }

    let xtx_chol = Cholesky::new(data.x().transpose() * data.x()).ok_or_else(|| {
        Error::DesignRankDeficient(format!("XᵀX not positive definite (q = {q})"))
    })?;
    // B̂ᵀ = (XᵀX)⁻¹ Xᵀ Ẑ, so B̂ = Ẑᵀ X (XᵀX)⁻¹.
    let bt = xtx_chol.solve(&(data.x().transpose() * &z_hat));
    let b_hat = bt.transpose();

    let residual = &z_hat - data.x() * &bt;
    let SvdResult {
        u: l_k,
        singular_values: s_k,
        v: r_k,
    } = truncated_svd(&residual, k, method, rng)?;

    let sqrt_n = libm::sqrt(n as f64);
    let m_hat = &l_k * sqrt_n;
    let mut lambda_hat = r_k;
    for (j, mut col) in lambda_hat.column_iter_mut().enumerate() {
        col *= s_k[j] / sqrt_n;
    }

    let (tau_lambda, tau_beta) = select_tau(&lambda_hat, &b_hat);
    let prior = PriorConfig::new(
        crate::model::DEFAULT_BOX_BOUND,
        crate::model::DEFAULT_BOX_BOUND,
        tau_lambda.clone(),
        tau_beta.clone(),
        k,
    )?;
    let mut state0 = FactorState::new(m_hat, lambda_hat, b_hat)?;
    state0.project_onto_boxes(&prior);

    let loglik = log_likelihood(&state0, data, link)?;
    Ok(InitResult {
        state0,
        tau_lambda,
        tau_beta,
        loglik,
    })
}

/// Penalty part of the information criterion: k·max(n,p)·log(min(n,p)).
pub fn jic_penalty(n: usize, p: usize, k: usize) -> f64 {
    k as f64 * n.max(p) as f64 * libm::log(n.min(p) as f64)
}

/// Joint likelihood information criterion −2·l̂_k + penalty, where l̂_k
/// is the log-likelihood at the SVD initialization for dimension k.
pub fn jic(
    data: &Dataset,
    k: usize,
    link: LinkFunction,
    method: Option<SvdMethod>,
    rng: &mut RngState,
) -> Result<f64> {
    let init = svd_initialize(data, k, link, method, None, rng)?;
    Ok(-2.0 * init.loglik + jic_penalty(data.n(), data.p(), k))
}

/// Latent dimension minimizing the criterion over 1..=k_max; ties break
/// toward the smaller dimension.
pub fn select_k(
    data: &Dataset,
    k_max: usize,
    link: LinkFunction,
    method: Option<SvdMethod>,
    rng: &mut RngState,
) -> Result<usize> {
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let values = jic_profile(data, k_max, link, method, rng)?;
    let mut best = 0;
    for (idx, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = idx;
        }
    }
    Ok(best + 1)
}

/// Criterion values for k = 1..=k_max, in order.
pub fn jic_profile(
    data: &Dataset,
    k_max: usize,
    link: LinkFunction,
    method: Option<SvdMethod>,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    (1..=k_max).map(|k| jic(data, k, link, method, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn threshold_clamps_and_is_idempotent() {
        let m = DMatrix::from_row_slice(1, 3, &[-0.3, 0.5, 1.2]);
        let t = threshold_probabilities(&m, 0.01).unwrap();
        assert_eq!(t[(0, 0)], 0.01);
        assert_eq!(t[(0, 1)], 0.5);
        assert_eq!(t[(0, 2)], 0.99);
        let tt = threshold_probabilities(&t, 0.01).unwrap();
        assert_eq!(t, tt);
        assert!(threshold_probabilities(&m, 0.0).is_err());
        assert!(threshold_probabilities(&m, 0.5).is_err());
    }

    #[test]
    fn imputation_product_rule() {
        // Row-0 unmasked mean 0.5, column-0 unmasked mean 0.4
        // -> masked entry 0.5 * 0.4 = 0.2.
        let y = DMatrix::from_row_slice(
            6,
            5,
            &[
                1.0, 1.0, 0.0, 1.0, 0.0, // row 0; cell (0,0) is masked
                1.0, 0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, 1.0, //
                1.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 1.0, 1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 1.0, //
            ],
        );
        let mut mask = DMatrix::from_element(6, 5, false);
        mask[(0, 0)] = true;
        let out = impute_for_init(&y, Some(&mask)).unwrap();
        // Row 0 unmasked: (1+0+1+0)/4 = 0.5; col 0 unmasked: (1+0+1+0+0)/5 = 0.4.
        assert_abs_diff_eq!(out[(0, 0)], 0.2, epsilon = 1e-15);
        // Unmasked cells pass through.
        assert_eq!(out[(1, 0)], 1.0);
        assert_eq!(out[(0, 1)], 1.0);
    }

    #[test]
    fn imputation_no_mask_is_identity() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(impute_for_init(&y, None).unwrap(), y);
    }

    #[test]
    fn imputation_all_ones() {
        let y = DMatrix::from_element(3, 3, 1.0);
        let mut mask = DMatrix::from_element(3, 3, false);
        mask[(1, 1)] = true;
        let out = impute_for_init(&y, Some(&mask)).unwrap();
        assert_abs_diff_eq!(out[(1, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn imputation_rejects_fully_masked_lines() {
        let y = DMatrix::from_element(2, 2, 1.0);
        let mut mask = DMatrix::from_element(2, 2, false);
        mask[(0, 0)] = true;
        mask[(0, 1)] = true;
        assert!(impute_for_init(&y, Some(&mask)).is_err());
    }

    #[test]
    fn tau_selection_clamps() {
        // ||lambda_j|| = 0 -> 0.5; k = 4, norm 4 -> 1.0 * ... wait: 4/sqrt(4) = 2.
        let lambda = DMatrix::from_row_slice(3, 4, &[
            0.0, 0.0, 0.0, 0.0, //
            2.0, 2.0, 2.0, 2.0, // norm 4, k=4 -> 2
            60.0, 60.0, 60.0, 60.0, // norm 120 -> clamp at 20
        ]);
        let b = DMatrix::from_row_slice(3, 1, &[100.0, 0.0, 1.0]);
        let (tl, tb) = select_tau(&lambda, &b);
        assert_abs_diff_eq!(tl[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tl[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(tl[2], 20.0, epsilon = 1e-15);
        // Beta norms also scale by k^{-1/2} with k from Lambda.
        assert_abs_diff_eq!(tb[0], 20.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tb[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tb[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn tau_k1_upper_clamp() {
        let lambda = DMatrix::from_element(1, 1, 100.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let (tl, _) = select_tau(&lambda, &b);
        assert_abs_diff_eq!(tl[0], 20.0, epsilon = 1e-15);
    }

    #[test]
    fn jic_penalty_arithmetic() {
        // n=500, p=200, k=2: 2 * 500 * ln(200)
        assert_abs_diff_eq!(
            jic_penalty(500, 200, 2),
            1000.0 * (200f64).ln(),
            epsilon = 1e-9
        );
        assert!((jic_penalty(500, 200, 2) - 5298.317).abs() < 1e-2);
    }

    #[test]
    fn default_threshold_behaviour() {
        assert_abs_diff_eq!(default_threshold(400, 10_000), 0.05, epsilon = 1e-12);
        assert_eq!(default_threshold(4, 4), 0.1_f64.min(0.5));
        assert_eq!(default_threshold(100_000_000, 100_000_000), 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn threshold_output_in_range(vals in proptest::collection::vec(-2.0f64..3.0, 1..40),
                                     eps in 0.001f64..0.49) {
            let m = DMatrix::from_vec(vals.len(), 1, vals);
            let t = threshold_probabilities(&m, eps).unwrap();
            prop_assert!(t.iter().all(|&v| v >= eps && v <= 1.0 - eps));
        }

        #[test]
        fn tau_monotone_in_norms(a in 0.0f64..30.0, b in 0.0f64..30.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let lam_lo = DMatrix::from_element(1, 2, lo / 2f64.sqrt());
            let lam_hi = DMatrix::from_element(1, 2, hi / 2f64.sqrt());
            let bmat = DMatrix::from_element(1, 1, 0.0);
            let (tl_lo, _) = select_tau(&lam_lo, &bmat);
            let (tl_hi, _) = select_tau(&lam_hi, &bmat);
            prop_assert!(tl_lo[0] <= tl_hi[0] + 1e-12);
            prop_assert!((TAU_LOWER..=TAU_UPPER).contains(&tl_lo[0]));
        }
    }
}
