//! Constrained joint MAP estimation by alternating projected Newton
//! ascent, and post-processing into the identifiable parameterization.
//!
//! Given the factors, the per-outcome problems are independent penalized
//! logistic regressions on the augmented design [X M]; given loadings and
//! coefficients, the per-sample factor problems are independent penalized
//! logistic regressions on Λ with the covariate effect as offset. Each
//! subproblem runs damped Newton steps followed by a coordinate-wise clamp
//! onto its box. Throughout, a packed parameter vector orders the
//! coefficient block first: θ_j = (β_j, λ_j).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::model::{
    factor_bound, log_joint_posterior, Dataset, FactorState, FitOptions, PriorConfig,
};
use crate::numcore::LinkFunction;
use crate::{Error, Result};

/// Diagonal jitter added to a Newton system that fails to factor.
const HESSIAN_JITTER: f64 = 1e-8;
/// Most halvings of the step size tried before a step is abandoned.
const MAX_STEP_HALVINGS: u32 = 30;

/// Per-outer-iteration record of a [`map_fit`] run.
#[derive(Debug, Clone)]
pub struct MapTrace {
    /// Joint log-posterior: the initial value followed by one entry per
    /// outer iteration. Nondecreasing up to 1e-8 slack.
    pub log_posterior: Vec<f64>,
    /// Completed outer alternations.
    pub outer_iterations: usize,
    /// Whether the relative-increase stopping rule fired before the
    /// iteration cap.
    pub converged: bool,
    /// Total inner Newton steps in each outcome sweep.
    pub outcome_newton_steps: Vec<usize>,
    /// Total inner Newton steps in each factor sweep.
    pub factor_newton_steps: Vec<usize>,
    /// Wall time of each outcome sweep (zeros without the std feature).
    pub outcome_seconds: Vec<f64>,
    /// Wall time of each factor sweep (zeros without the std feature).
    pub factor_seconds: Vec<f64>,
}

impl MapTrace {
    fn new(initial_lp: f64) -> Self {
        MapTrace {
            log_posterior: alloc::vec![initial_lp],
            outer_iterations: 0,
            converged: false,
            outcome_newton_steps: Vec::new(),
            factor_newton_steps: Vec::new(),
            outcome_seconds: Vec::new(),
            factor_seconds: Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------
// Inner solver shared by outcome and factor updates.

struct BoxedLogistic<'a> {
    /// Observation-by-coordinate design matrix.
    design: &'a DMatrix<f64>,
    /// Binary responses, one per design row.
    responses: &'a [f64],
    /// Per-observation inclusion flags; `None` includes everything.
    include: Option<&'a [bool]>,
    /// Per-observation additive offsets on the linear predictor.
    offsets: Option<&'a [f64]>,
    /// Diagonal Gaussian prior precisions, one per coordinate.
    prior_precision: &'a DVector<f64>,
    /// Box half-widths, one per coordinate.
    bounds: &'a DVector<f64>,
    link: LinkFunction,
}

impl BoxedLogistic<'_> {
    #[inline]
    fn predictor(&self, obs: usize, theta: &DVector<f64>) -> f64 {
        let mut z = self.offsets.map_or(0.0, |o| o[obs]);
        for c in 0..self.design.ncols() {
            z += self.design[(obs, c)] * theta[c];
        }
        z
    }

    #[inline]
    fn included(&self, obs: usize) -> bool {
        self.include.map_or(true, |m| m[obs])
    }

    /// Penalized log-likelihood at θ.
    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let mut value = 0.0;
        for obs in 0..self.design.nrows() {
            if !self.included(obs) {
                continue;
            }
            let z = self.predictor(obs, theta);
            value += if self.responses[obs] == 1.0 {
                self.link.log_eval(z)
            } else {
                self.link.log_one_minus(z)
            };
        }
        for c in 0..theta.len() {
            value -= 0.5 * self.prior_precision[c] * theta[c] * theta[c];
        }
        value
    }

    /// Gradient and negative Hessian of the objective at θ. The probit
    /// branch uses the Fisher information weight, which keeps the system
    /// positive definite; for the logit it coincides with the observed
    /// Hessian h(z){1 − h(z)}.
    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = theta.len();
        let mut grad = DVector::zeros(d);
        let mut neg_hess = DMatrix::zeros(d, d);
        let mut row = DVector::zeros(d);
        for obs in 0..self.design.nrows() {
            if !self.included(obs) {
                continue;
            }
            for c in 0..d {
                row[c] = self.design[(obs, c)];
            }
            let z = self.predictor(obs, theta);
            let (score, weight) = score_weight(self.link, z, self.responses[obs]);
            for a in 0..d {
                grad[a] += score * row[a];
                for b in a..d {
                    neg_hess[(a, b)] += weight * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            grad[a] -= self.prior_precision[a] * theta[a];
            neg_hess[(a, a)] += self.prior_precision[a];
            for b in a + 1..d {
                neg_hess[(b, a)] = neg_hess[(a, b)];
            }
        }
        (grad, neg_hess)
    }

    fn clamp(&self, theta: &mut DVector<f64>) {
        for c in 0..theta.len() {
            theta[c] = theta[c].clamp(-self.bounds[c], self.bounds[c]);
        }
    }

    /// Damped projected Newton ascent from `theta0`. Returns the solution
    /// and the number of accepted steps.
    fn solve(
        &self,
        mut theta: DVector<f64>,
        nu: f64,
        inner_tol: f64,
        max_inner: usize,
    ) -> Result<(DVector<f64>, usize)> {
        self.clamp(&mut theta);
        let mut objective = self.objective(&theta);
        if !objective.is_finite() {
            return Err(Error::numerical("non-finite objective at Newton start"));
        }
        let mut steps = 0;
        for _ in 0..max_inner {
            let (grad, neg_hess) = self.derivatives(&theta);
            let direction = solve_spd(&neg_hess, &grad)?;

            // Fixed step size; halve only when the projected step would
            // decrease the local objective.
            let mut step = nu;
            let mut accepted = None;
            for _ in 0..=MAX_STEP_HALVINGS {
                let mut candidate = &theta + &direction * step;
                self.clamp(&mut candidate);
                let cand_obj = self.objective(&candidate);
                if !cand_obj.is_finite() {
                    return Err(Error::numerical("non-finite objective in Newton step"));
                }
                if cand_obj >= objective {
                    accepted = Some((candidate, cand_obj));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, cand_obj)) = accepted else {
                // No admissible ascent step along the projected direction;
                // the iterate stays put, which preserves monotonicity.
                break;
            };
            let update_norm = (&candidate - &theta).norm();
            theta = candidate;
            objective = cand_obj;
            steps += 1;
            if update_norm < inner_tol {
                break;
            }
        }
        Ok((theta, steps))
    }
}

#[inline]
fn score_weight(link: LinkFunction, z: f64, y: f64) -> (f64, f64) {
    match link {
        LinkFunction::Logit => {
            let h = link.eval_raw(z);
            (y - h, h * (1.0 - h))
        }
        LinkFunction::Probit => {
            let h = link.eval_raw(z);
            let v = (h * (1.0 - h)).max(f64::MIN_POSITIVE);
            let phi = crate::numcore::norm_pdf(z);
            ((y - h) * phi / v, phi * phi / v)
        }
    }
}

/// Solve (A + jitter·I) x = b for symmetric positive definite A, adding
/// the jitter and retrying once if the first factorization fails.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol.solve(b));
    }
    let mut jittered = a.clone();
    for i in 0..a.nrows() {
        jittered[(i, i)] += HESSIAN_JITTER;
    }
    Cholesky::new(jittered)
        .map(|chol| chol.solve(b))
        .ok_or_else(|| Error::numerical("Newton system not positive definite after jitter"))
}

// ---------------------------------------------------------------------
// Public per-block updates.

fn outcome_problem_parts(
    state: &FactorState,
    prior: &PriorConfig,
    j: usize,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (k, q) = (state.k(), state.q());
    let prec_l = 1.0 / (prior.tau_lambda[j] * prior.tau_lambda[j]);
    let prec_b = 1.0 / (prior.tau_beta[j] * prior.tau_beta[j]);
    let precision = DVector::from_fn(q + k, |c, _| if c < q { prec_b } else { prec_l });
    let bounds = DVector::from_fn(q + k, |c, _| if c < q { prior.c_b } else { prior.c_lambda });
    let theta0 = DVector::from_fn(q + k, |c, _| {
        if c < q {
            state.b[(j, c)]
        } else {
            state.lambda[(j, c - q)]
        }
    });
    (theta0, precision, bounds)
}

/// Augmented design [X M].
fn augmented_design(x: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q, k) = (x.nrows(), x.ncols(), m.ncols());
    DMatrix::from_fn(n, q + k, |i, c| if c < q { x[(i, c)] } else { m[(i, c - q)] })
}

/// Update (λ_j, β_j) for one outcome with the factors held fixed.
pub fn update_outcome_params(
    j: usize,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    opts: &FitOptions,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dims(state, data, prior)?;
    if j >= data.p() {
        return Err(Error::invalid(format!("outcome index {j} out of range")));
    }
    let design = augmented_design(data.x(), &state.m);
    let theta = solve_outcome(j, &design, state, data, prior, opts)?.0;
    let q = data.q();
    Ok((theta.rows(q, state.k()).into_owned(), theta.rows(0, q).into_owned()))
}

fn solve_outcome(
    j: usize,
    design: &DMatrix<f64>,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    opts: &FitOptions,
) -> Result<(DVector<f64>, usize)> {
    let (theta0, precision, bounds) = outcome_problem_parts(state, prior, j);
    let include = data.mask().map(|m| m.column(j).iter().map(|&v| !v).collect::<Vec<bool>>());
    let y_col = data.y().column(j);
    let problem = BoxedLogistic {
        design,
        responses: y_col.as_slice(),
        include: include.as_deref(),
        offsets: None,
        prior_precision: &precision,
        bounds: &bounds,
        link: opts.link,
    };
    problem.solve(theta0, opts.nu_outcome, opts.inner_tol, opts.max_inner)
}

/// Update η_i for one sample with loadings and coefficients held fixed.
pub fn update_factor(
    i: usize,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    opts: &FitOptions,
) -> Result<DVector<f64>> {
    check_dims(state, data, prior)?;
    if i >= data.n() {
        return Err(Error::invalid(format!("sample index {i} out of range")));
    }
    let offsets_all = data.x() * state.b.transpose();
    Ok(solve_factor(i, &offsets_all, state, data, opts)?.0)
}

fn solve_factor(
    i: usize,
    covariate_offsets: &DMatrix<f64>,
    state: &FactorState,
    data: &Dataset,
    opts: &FitOptions,
) -> Result<(DVector<f64>, usize)> {
    let (p, k) = (data.p(), state.k());
    let responses: Vec<f64> = (0..p).map(|j| data.y()[(i, j)]).collect();
    let offsets: Vec<f64> = (0..p).map(|j| covariate_offsets[(i, j)]).collect();
    let include = data
        .mask()
        .map(|m| (0..p).map(|j| !m[(i, j)]).collect::<Vec<bool>>());
    let precision = DVector::from_element(k, 1.0);
    let bounds = DVector::from_element(k, factor_bound(k, data.n()));
    let theta0 = state.m.row(i).transpose();
    let problem = BoxedLogistic {
        design: &state.lambda,
        responses: &responses,
        include: include.as_deref(),
        offsets: Some(&offsets),
        prior_precision: &precision,
        bounds: &bounds,
        link: opts.link,
    };
    problem.solve(theta0, opts.nu_factor, opts.inner_tol, opts.max_inner)
}

fn check_dims(state: &FactorState, data: &Dataset, prior: &PriorConfig) -> Result<()> {
    if state.n() != data.n() || state.p() != data.p() || state.q() != data.q() {
        return Err(Error::shape("state and dataset dimensions disagree"));
    }
    if prior.p() != data.p() {
        return Err(Error::shape("prior and dataset disagree on p"));
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Full alternating fit.

/// Joint MAP estimation: alternate a full sweep of per-outcome updates
/// with a full sweep of per-sample factor updates until the relative
/// log-posterior increase drops below `opts.outer_tol`.
pub fn map_fit(
    data: &Dataset,
    prior: &PriorConfig,
    opts: &FitOptions,
    init: &FactorState,
) -> Result<(FactorState, MapTrace)> {
    opts.validate()?;
    check_dims(init, data, prior)?;
    let mut state = init.clone();
    state.project_onto_boxes(prior);

    let mut lp = log_joint_posterior(&state, data, prior, opts.link)?;
    if !lp.is_finite() {
        return Err(Error::numerical("non-finite log-posterior at initialization"));
    }
    let mut trace = MapTrace::new(lp);

    for outer in 0..opts.max_outer {
        // Outcome sweep: subproblems only read M and their own row, so
        // the result is identical for any update order or thread count.
        let timer = clock::start();
        let design = augmented_design(data.x(), &state.m);
        let outcome_results = for_each_index(data.p(), |j| {
            solve_outcome(j, &design, &state, data, prior, opts)
        })?;
        let mut steps_outcomes = 0;
        let q = data.q();
        for (j, (theta, steps)) in outcome_results.into_iter().enumerate() {
            steps_outcomes += steps;
            for c in 0..q {
                state.b[(j, c)] = theta[c];
            }
            for c in 0..state.k() {
                state.lambda[(j, c)] = theta[q + c];
            }
        }
        trace.outcome_newton_steps.push(steps_outcomes);
        trace.outcome_seconds.push(clock::stop(timer));

        // Factor sweep against the refreshed loadings and coefficients.
        let timer = clock::start();
        let covariate_offsets = data.x() * state.b.transpose();
        let factor_results = for_each_index(data.n(), |i| {
            solve_factor(i, &covariate_offsets, &state, data, opts)
        })?;
        let mut steps_factors = 0;
        for (i, (eta, steps)) in factor_results.into_iter().enumerate() {
            steps_factors += steps;
            for c in 0..state.k() {
                state.m[(i, c)] = eta[c];
            }
        }
        trace.factor_newton_steps.push(steps_factors);
        trace.factor_seconds.push(clock::stop(timer));

        let lp_new = log_joint_posterior(&state, data, prior, opts.link)?;
        if !lp_new.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite log-posterior after outer iteration {outer}"
            )));
        }
        trace.log_posterior.push(lp_new);
        trace.outer_iterations = outer + 1;
        let relative = (lp_new - lp) / lp.abs().max(1e-10);
        lp = lp_new;
        if relative < opts.outer_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((state, trace))
}

use crate::par::for_each_index;

#[cfg(feature = "std")]
mod clock {
    pub fn start() -> std::time::Instant {
        std::time::Instant::now()
    }

    pub fn stop(t: std::time::Instant) -> f64 {
        t.elapsed().as_secs_f64()
    }
}

#[cfg(not(feature = "std"))]
mod clock {
    pub fn start() {}

    pub fn stop(_t: ()) -> f64 {
        0.0
    }
}

// ---------------------------------------------------------------------
// Post-processing.

/// Rotate and recenter an estimate so that M̃ᵀM̃ = nI_k and M̃ᵀX = 0 while
/// the linear predictor X Bᵀ + M Λᵀ is left unchanged.
///
/// M̂ᶜ = M̂ − P_X M̂ is decomposed as U D Vᵀ; then M̃ = √n U,
/// Λ̃ = n^{−1/2} Λ̂ V D (the D factor makes the product identity exact)
/// and B̃ = B̂ + Λ̂ M̂ᵀ X (XᵀX)⁻¹.
pub fn postprocess(state: &FactorState, x: &DMatrix<f64>) -> Result<FactorState> {
    let (n, k) = (state.n(), state.k());
    if x.nrows() != n {
        return Err(Error::shape("X and M must agree on n"));
    }
    if x.ncols() != state.q() {
        return Err(Error::shape("X and B must agree on q"));
    }
    let xtx_chol = Cholesky::new(x.transpose() * x)
        .ok_or_else(|| Error::DesignRankDeficient("XᵀX not positive definite".into()))?;

    // (XᵀX)⁻¹ Xᵀ M̂, reused for both the projection and the B update.
    let xtx_inv_xt_m = xtx_chol.solve(&(x.transpose() * &state.m));
    let m_centered = &state.m - x * &xtx_inv_xt_m;

    let svd = crate::numcore::exact_truncated(&m_centered, k)?;
    let d = &svd.singular_values;
    let largest = d[0];
    if !(largest > 0.0) || d[k - 1] <= 1e-12 * largest {
        return Err(Error::RankDeficient(format!(
            "centered factor matrix has numerical rank below k = {k}"
        )));
    }

    let sqrt_n = libm::sqrt(n as f64);
    let m_tilde = &svd.u * sqrt_n;
    // Λ̃ = n^{−1/2} Λ̂ V D, columns of Λ̂V scaled by the singular values.
    let mut lambda_tilde = &state.lambda * &svd.v;
    for (c, mut col) in lambda_tilde.column_iter_mut().enumerate() {
        col *= d[c] / sqrt_n;
    }
    let b_tilde = &state.b + &state.lambda * xtx_inv_xt_m.transpose();
    FactorState::new(m_tilde, lambda_tilde, b_tilde)
}

// ---------------------------------------------------------------------
// Diagnostics used by derivative checks and tests.

/// Per-outcome penalized log-likelihood at an arbitrary packed parameter
/// vector θ = (β_j, λ_j).
pub fn outcome_objective_at(
    j: usize,
    theta: &DVector<f64>,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    link: LinkFunction,
) -> Result<f64> {
    let design = augmented_design(data.x(), &state.m);
    let (_, precision, bounds) = outcome_problem_parts(state, prior, j);
    let include = data.mask().map(|m| m.column(j).iter().map(|&v| !v).collect::<Vec<bool>>());
    let y_col = data.y().column(j);
    let problem = BoxedLogistic {
        design: &design,
        responses: y_col.as_slice(),
        include: include.as_deref(),
        offsets: None,
        prior_precision: &precision,
        bounds: &bounds,
        link,
    };
    Ok(problem.objective(theta))
}

/// Analytic gradient and negative Hessian of [`outcome_objective_at`].
pub fn outcome_derivatives_at(
    j: usize,
    theta: &DVector<f64>,
    state: &FactorState,
    data: &Dataset,
    prior: &PriorConfig,
    link: LinkFunction,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let design = augmented_design(data.x(), &state.m);
    let (_, precision, bounds) = outcome_problem_parts(state, prior, j);
    let include = data.mask().map(|m| m.column(j).iter().map(|&v| !v).collect::<Vec<bool>>());
    let y_col = data.y().column(j);
    let problem = BoxedLogistic {
        design: &design,
        responses: y_col.as_slice(),
        include: include.as_deref(),
        offsets: None,
        prior_precision: &precision,
        bounds: &bounds,
        link,
    };
    Ok(problem.derivatives(theta))
}

/// Per-sample factor objective at an arbitrary η.
pub fn factor_objective_at(
    i: usize,
    eta: &DVector<f64>,
    state: &FactorState,
    data: &Dataset,
    link: LinkFunction,
) -> Result<f64> {
    let covariate_offsets = data.x() * state.b.transpose();
    let p = data.p();
    let responses: Vec<f64> = (0..p).map(|j| data.y()[(i, j)]).collect();
    let offsets: Vec<f64> = (0..p).map(|j| covariate_offsets[(i, j)]).collect();
    let include = data
        .mask()
        .map(|m| (0..p).map(|j| !m[(i, j)]).collect::<Vec<bool>>());
    let precision = DVector::from_element(state.k(), 1.0);
    let bounds = DVector::from_element(state.k(), factor_bound(state.k(), data.n()));
    let problem = BoxedLogistic {
        design: &state.lambda,
        responses: &responses,
        include: include.as_deref(),
        offsets: Some(&offsets),
        prior_precision: &precision,
        bounds: &bounds,
        link,
    };
    Ok(problem.objective(eta))
}
