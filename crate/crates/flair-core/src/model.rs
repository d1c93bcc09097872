//! Shared domain types: datasets, priors, fit options and the factor
//! state triple, plus the joint log-posterior they define.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::numcore::LinkFunction;
use crate::{Error, Result};

/// Slack admitted when checking box membership, so that projections
/// followed by arithmetic never spuriously fail feasibility checks.
pub const BOX_TOLERANCE: f64 = 1e-9;

/// Binary outcome matrix with covariates and an optional entry-level
/// holdout mask.
///
/// `y` is n x p with entries in {0, 1}; `x` is n x q with an all-ones
/// first column (intercept). A mask entry of `true` marks the cell as
/// held out: it is excluded from every likelihood computation.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    mask: Option<DMatrix<bool>>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        mask: Option<DMatrix<bool>>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("Y entries must be 0 or 1"));
        }
        Self::from_parts_unchecked(y, x, mask, names)
    }

    /// Build a dataset without the {0,1} outcome check. Initialization
    /// diagnostics feed probability-valued matrices through the same
    /// pipeline; everything else still validates shapes and finiteness.
    pub fn from_parts_unchecked(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        mask: Option<DMatrix<bool>>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(Error::shape(format!(
                "Y has {} rows but X has {}",
                y.nrows(),
                x.nrows()
            )));
        }
        if y.nrows() == 0 || y.ncols() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("Y and X must be non-empty"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("X must be finite"));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("first column of X must be all ones"));
        }
        if let Some(m) = &mask {
            if m.shape() != y.shape() {
                return Err(Error::shape(format!(
                    "mask is {}x{} but Y is {}x{}",
                    m.nrows(),
                    m.ncols(),
                    y.nrows(),
                    y.ncols()
                )));
            }
        }
        if let Some(names) = &names {
            if names.len() != y.ncols() {
                return Err(Error::shape("outcome name count must equal p"));
            }
        }
        Ok(Dataset { y, x, mask, names })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn mask(&self) -> Option<&DMatrix<bool>> {
        self.mask.as_ref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Number of samples n.
    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    /// Number of outcomes p.
    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Number of covariates q (including the intercept).
    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    /// True when cell (i, j) is held out.
    #[inline]
    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[(i, j)])
    }

    /// Replace the holdout mask.
    pub fn with_mask(mut self, mask: Option<DMatrix<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.shape() != self.y.shape() {
                return Err(Error::shape("mask shape must match Y"));
            }
        }
        self.mask = mask;
        Ok(self)
    }
}

/// Truncated-normal prior configuration.
///
/// Loadings row j has prior TN(0, τ²_{λj} I_k, \[-c_lambda, c_lambda\]^k);
/// coefficient row j has prior TN(0, τ²_{βj} I_q, \[-c_b, c_b\]^q);
/// factors have prior TN(0, I_k, [-b, b]^k) with b = 2√log(kn).
#[derive(Debug, Clone)]
pub struct PriorConfig {
    pub c_lambda: f64,
    pub c_b: f64,
    pub tau_lambda: DVector<f64>,
    pub tau_beta: DVector<f64>,
    pub k: usize,
}

/// Default box half-width for loadings and coefficients.
pub const DEFAULT_BOX_BOUND: f64 = 10.0;

impl PriorConfig {
    pub fn new(
        c_lambda: f64,
        c_b: f64,
        tau_lambda: DVector<f64>,
        tau_beta: DVector<f64>,
        k: usize,
    ) -> Result<Self> {
        if !(c_lambda > 0.0) || !(c_b > 0.0) {
            return Err(Error::invalid("box bounds must be positive"));
        }
        if tau_lambda.len() != tau_beta.len() {
            return Err(Error::shape("tau vectors must have equal length p"));
        }
        if tau_lambda.iter().chain(tau_beta.iter()).any(|&t| !(t > 0.0)) {
            return Err(Error::invalid("all tau entries must be positive"));
        }
        if k == 0 {
            return Err(Error::invalid("latent dimension k must be at least 1"));
        }
        Ok(PriorConfig {
            c_lambda,
            c_b,
            tau_lambda,
            tau_beta,
            k,
        })
    }

    /// Uniform scales with the default box bounds; handy for tests.
    pub fn isotropic(p: usize, k: usize, tau: f64) -> Result<Self> {
        Self::new(
            DEFAULT_BOX_BOUND,
            DEFAULT_BOX_BOUND,
            DVector::from_element(p, tau),
            DVector::from_element(p, tau),
            k,
        )
    }

    /// Number of outcomes the scales are defined for.
    pub fn p(&self) -> usize {
        self.tau_lambda.len()
    }
}

/// Box half-width for the latent factors: 2√log(kn).
pub fn factor_bound(k: usize, n: usize) -> f64 {
    2.0 * libm::sqrt(libm::log((k * n) as f64))
}

/// The triple (M, Λ, B) of factors, loadings and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    /// n x k latent factors.
    pub m: DMatrix<f64>,
    /// p x k loadings.
    pub lambda: DMatrix<f64>,
    /// p x q regression coefficients.
    pub b: DMatrix<f64>,
}

impl FactorState {
    pub fn new(m: DMatrix<f64>, lambda: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if m.ncols() != lambda.ncols() {
            return Err(Error::shape("M and Lambda must agree on k"));
        }
        if lambda.nrows() != b.nrows() {
            return Err(Error::shape("Lambda and B must agree on p"));
        }
        if m.iter()
            .chain(lambda.iter())
            .chain(b.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("factor state must be finite"));
        }
        Ok(FactorState { m, lambda, b })
    }

    /// All-zeros state of the given dimensions.
    pub fn zeros(n: usize, p: usize, k: usize, q: usize) -> Self {
        FactorState {
            m: DMatrix::zeros(n, k),
            lambda: DMatrix::zeros(p, k),
            b: DMatrix::zeros(p, q),
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn p(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn k(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    /// Whether every block lies inside its box, up to [`BOX_TOLERANCE`].
    pub fn is_feasible(&self, prior: &PriorConfig) -> bool {
        let bound_m = factor_bound(self.k().max(1), self.n()) + BOX_TOLERANCE;
        self.m.iter().all(|v| v.abs() <= bound_m)
            && self
                .lambda
                .iter()
                .all(|v| v.abs() <= prior.c_lambda + BOX_TOLERANCE)
            && self.b.iter().all(|v| v.abs() <= prior.c_b + BOX_TOLERANCE)
    }

    /// Clamp every block onto its box.
    pub fn project_onto_boxes(&mut self, prior: &PriorConfig) {
        let bound_m = factor_bound(self.k().max(1), self.n());
        for v in self.m.iter_mut() {
            *v = v.clamp(-bound_m, bound_m);
        }
        for v in self.lambda.iter_mut() {
            *v = v.clamp(-prior.c_lambda, prior.c_lambda);
        }
        for v in self.b.iter_mut() {
            *v = v.clamp(-prior.c_b, prior.c_b);
        }
    }
}

/// Knobs for the alternating projected Newton fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Newton step size for the per-outcome updates.
    pub nu_outcome: f64,
    /// Newton step size for the per-sample factor updates.
    pub nu_factor: f64,
    /// Stop an inner Newton loop when the update norm falls below this.
    pub inner_tol: f64,
    /// Stop the outer alternation when the relative log-posterior
    /// increase falls below this.
    pub outer_tol: f64,
    /// Cap on Newton steps per subproblem.
    pub max_inner: usize,
    /// Cap on outer alternations.
    pub max_outer: usize,
    pub link: LinkFunction,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            nu_outcome: 0.3,
            nu_factor: 1.0,
            inner_tol: 1e-3,
            outer_tol: 1e-3,
            max_inner: 100,
            max_outer: 100,
            link: LinkFunction::Logit,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu_outcome > 0.0 && self.nu_outcome <= 1.0)
            || !(self.nu_factor > 0.0 && self.nu_factor <= 1.0)
        {
            return Err(Error::invalid("step sizes must lie in (0, 1]"));
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::invalid("iteration caps must be at least 1"));
        }
        Ok(())
    }
}

/// Z = X Bᵀ + M Λᵀ.
pub fn linear_predictor(state: &FactorState, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != state.m.nrows() {
        return Err(Error::shape("X and M must agree on n"));
    }
    if x.ncols() != state.b.ncols() {
        return Err(Error::shape("X and B must agree on q"));
    }
    Ok(x * state.b.transpose() + &state.m * state.lambda.transpose())
}

/// Log-likelihood over unmasked cells at the given state.
pub fn log_likelihood(state: &FactorState, data: &Dataset, link: LinkFunction) -> Result<f64> {
    let z = linear_predictor(state, data.x())?;
    if z.ncols() != data.p() {
        return Err(Error::shape("state and dataset disagree on p"));
    }
    Ok(masked_bernoulli_loglik(data, &z, link))
}

pub(crate) fn masked_bernoulli_loglik(
    data: &Dataset,
    z: &DMatrix<f64>,
    link: LinkFunction,
) -> f64 {
    let y = data.y();
    let mut total = 0.0;
    // Deterministic summation order: column-major, matching storage.
    for j in 0..y.ncols() {
        let mut col = 0.0;
        for i in 0..y.nrows() {
            if data.is_masked(i, j) {
                continue;
            }
            let zij = z[(i, j)];
            col += if y[(i, j)] == 1.0 {
                link.log_eval(zij)
            } else {
                link.log_one_minus(zij)
            };
        }
        total += col;
    }
    total
}

/// Gaussian-kernel prior contribution:
/// −½‖M‖_F² − ½ Σ_j ‖λ_j‖²/τ_{λj}² − ½ Σ_j ‖β_j‖²/τ_{βj}².
pub fn log_prior_kernel(state: &FactorState, prior: &PriorConfig) -> Result<f64> {
    if state.p() != prior.p() {
        return Err(Error::shape("state and prior disagree on p"));
    }
    let mut total = -0.5 * state.m.iter().map(|v| v * v).sum::<f64>();
    for j in 0..state.p() {
        let l2 = state.lambda.row(j).iter().map(|v| v * v).sum::<f64>();
        let b2 = state.b.row(j).iter().map(|v| v * v).sum::<f64>();
        total -= 0.5 * l2 / (prior.tau_lambda[j] * prior.tau_lambda[j]);
        total -= 0.5 * b2 / (prior.tau_beta[j] * prior.tau_beta[j]);
    }
    Ok(total)
}

/// Joint log-posterior up to an additive constant: the masked Bernoulli
/// log-likelihood plus the Gaussian prior kernels.
pub fn log_joint_posterior(
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    link: LinkFunction,
) -> Result<f64> {
    Ok(log_likelihood(state, data, link)? + log_prior_kernel(state, prior)?)
}
