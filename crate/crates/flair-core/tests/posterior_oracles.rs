//! Posterior-approximation oracles: finite-difference Hessians for the
//! per-outcome covariances, arithmetic identities for the inflation
//! factor, and Monte Carlo checks of the closed-form moments.

use flair_core::map::outcome_objective_at;
use flair_core::model::{Dataset, FactorState, PriorConfig};
use flair_core::numcore::{LinkFunction, RngState};
use flair_core::posterior::{calibrate_rho, compute_vj, GaussianPosterior, IntervalTarget};
use nalgebra::{Cholesky, DMatrix, DVector};

fn bernoulli_dataset(seed: u64, n: usize, p: usize, q: usize) -> Dataset {
    let mut rng = RngState::from_seed(seed);
    let x = DMatrix::from_fn(n, q, |_, c| if c == 0 { 1.0 } else { rng.standard_normal() });
    let y = DMatrix::from_fn(n, p, |_, _| if rng.uniform() < 0.5 { 0.0 } else { 1.0 });
    Dataset::new(y, x, None, None).unwrap()
}

fn random_state(seed: u64, n: usize, p: usize, k: usize, q: usize) -> FactorState {
    let mut rng = RngState::from_seed(seed);
    FactorState::new(
        DMatrix::from_fn(n, k, |_, _| rng.standard_normal()),
        DMatrix::from_fn(p, k, |_, _| 0.6 * rng.standard_normal()),
        DMatrix::from_fn(p, q, |_, _| 0.6 * rng.standard_normal()),
    )
    .unwrap()
}

#[test]
fn vj_matches_finite_difference_hessian() {
    let (n, p, k, q) = (30, 5, 2, 2);
    let data = bernoulli_dataset(1, n, p, q);
    let state = random_state(2, n, p, k, q);
    let prior = PriorConfig::isotropic(p, k, 1.3).unwrap();
    let link = LinkFunction::Logit;
    let h = 1e-4;
    for j in 0..p {
        let v = compute_vj(j, &state, &data, &prior, link).unwrap();
        let theta = DVector::from_fn(k + q, |c, _| {
            if c < q {
                state.b[(j, c)]
            } else {
                state.lambda[(j, c - q)]
            }
        });
        let f = |t: &DVector<f64>| outcome_objective_at(j, t, &state, &data, &prior, link).unwrap();
        let d = k + q;
        let fd_neg_hess = DMatrix::from_fn(d, d, |a, b| {
            let mut pp = theta.clone();
            let mut pm = theta.clone();
            let mut mp = theta.clone();
            let mut mm = theta.clone();
            pp[a] += h;
            pp[b] += h;
            pm[a] += h;
            pm[b] -= h;
            mp[a] -= h;
            mp[b] += h;
            mm[a] -= h;
            mm[b] -= h;
            -(f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h)
        });
        let v_fd = fd_neg_hess.try_inverse().unwrap();
        let rel = (&v - &v_fd).norm() / v.norm();
        assert!(rel <= 1e-4, "outcome {j}: V mismatch {rel}");
    }
}

#[test]
fn vj_prior_only_when_all_masked() {
    let (n, p, k, q) = (20, 3, 2, 2);
    let data = bernoulli_dataset(3, n, p, q)
        .with_mask(Some(DMatrix::from_element(20, 3, true)))
        .unwrap();
    let state = random_state(4, n, p, k, q);
    let prior = PriorConfig::new(
        10.0,
        10.0,
        DVector::from_element(p, 1.7),
        DVector::from_element(p, 0.9),
        k,
    )
    .unwrap();
    let v = compute_vj(1, &state, &data, &prior, LinkFunction::Logit).unwrap();
    for a in 0..k + q {
        for b in 0..k + q {
            let expected = if a != b {
                0.0
            } else if a < q {
                0.9 * 0.9
            } else {
                1.7 * 1.7
            };
            assert!(
                (v[(a, b)] - expected).abs() < 1e-10,
                "V[{a},{b}] = {} vs {expected}",
                v[(a, b)]
            );
        }
    }
}

#[test]
fn vj_scalar_case() {
    // Intercept-only design, all predictors zero, flat prior proxy:
    // the beta-block variance is 1 / (n * 0.25).
    let n = 100;
    let y = DMatrix::from_fn(n, 1, |i, _| (i % 2) as f64);
    let x = DMatrix::from_element(n, 1, 1.0);
    let data = Dataset::new(y, x, None, None).unwrap();
    let state = FactorState::zeros(n, 1, 1, 1);
    let prior = PriorConfig::new(
        10.0,
        10.0,
        DVector::from_element(1, 1e6),
        DVector::from_element(1, 1e6),
        1,
    )
    .unwrap();
    let v = compute_vj(0, &state, &data, &prior, LinkFunction::Logit).unwrap();
    assert!((v[(0, 0)] - 0.04).abs() < 1e-9, "V00 = {}", v[(0, 0)]);
}

#[test]
fn vj_dominated_by_prior_covariance() {
    // Adding likelihood information can only shrink the covariance:
    // diag(tau²) − V_j must stay positive semidefinite.
    let (n, p, k, q) = (40, 6, 2, 2);
    let data = bernoulli_dataset(5, n, p, q);
    let state = random_state(6, n, p, k, q);
    let prior = PriorConfig::new(
        10.0,
        10.0,
        DVector::from_fn(p, |j, _| 0.6 + 0.2 * j as f64),
        DVector::from_fn(p, |j, _| 0.9 + 0.1 * j as f64),
        k,
    )
    .unwrap();
    for j in 0..p {
        let v = compute_vj(j, &state, &data, &prior, LinkFunction::Logit).unwrap();
        let mut diff = -v.clone();
        for c in 0..k + q {
            let tau = if c < q {
                prior.tau_beta[j]
            } else {
                prior.tau_lambda[j]
            };
            diff[(c, c)] += tau * tau;
        }
        // Tiny ridge to absorb roundoff at the PSD boundary.
        for c in 0..k + q {
            diff[(c, c)] += 1e-12;
        }
        assert!(
            Cholesky::new(diff).is_some(),
            "prior covariance does not dominate V_{j}"
        );
    }
}

#[test]
fn rho_is_one_without_loadings() {
    let (n, p, k, q) = (25, 4, 2, 2);
    let data = bernoulli_dataset(7, n, p, q);
    let mut state = random_state(8, n, p, k, q);
    state.lambda.fill(0.0);
    let rho = calibrate_rho(&state, &data, LinkFunction::Logit).unwrap();
    assert_eq!(rho, 1.0);
}

#[test]
fn rho_single_outcome_arithmetic() {
    // M = 0 and B = 0 force z = 0, so sigma² = 1.702² + 1/0.25
    // = 6.896804 exactly; picking ‖λ‖² = 2 sigma² gives rho = sqrt(2).
    let n = 50;
    let y = DMatrix::from_fn(n, 1, |i, _| (i % 2) as f64);
    let x = DMatrix::from_element(n, 1, 1.0);
    let data = Dataset::new(y, x, None, None).unwrap();
    let sigma2 = 1.702f64 * 1.702 + 4.0;
    assert!((sigma2 - 6.896804).abs() < 1e-12);
    let lambda = DMatrix::from_element(1, 1, (2.0 * sigma2).sqrt());
    let state = FactorState::new(DMatrix::zeros(n, 1), lambda, DMatrix::zeros(1, 1)).unwrap();
    let rho = calibrate_rho(&state, &data, LinkFunction::Logit).unwrap();
    assert!(
        (rho - 2f64.sqrt()).abs() < 1e-12,
        "rho = {rho} vs sqrt(2)"
    );
}

#[test]
fn rho_never_below_one_and_zero_pairs_take_the_limit() {
    let (n, p, k, q) = (30, 5, 2, 2);
    let data = bernoulli_dataset(9, n, p, q);
    for seed in 0..5 {
        let mut state = random_state(10 + seed, n, p, k, q);
        if seed % 2 == 0 {
            // Zero out two rows so degenerate pairs appear.
            state.lambda.row_mut(0).fill(0.0);
            state.lambda.row_mut(1).fill(0.0);
        }
        let rho = calibrate_rho(&state, &data, LinkFunction::Logit).unwrap();
        assert!(rho >= 1.0, "rho {rho} below 1");
        assert!(rho.is_finite());
    }
}

fn fitted_posterior(
    seed: u64,
    n: usize,
    p: usize,
    k: usize,
    q: usize,
) -> (GaussianPosterior, Dataset, FactorState, PriorConfig) {
    let data = bernoulli_dataset(seed, n, p, q);
    let state = random_state(seed + 1, n, p, k, q);
    let prior = PriorConfig::isotropic(p, k, 1.1).unwrap();
    let post = GaussianPosterior::fit(&state, &data, &prior, LinkFunction::Logit).unwrap();
    (post, data, state, prior)
}

#[test]
fn sample_moments_match_the_gaussian() {
    let (post, _, _, _) = fitted_posterior(20, 40, 3, 2, 2);
    let n_mc = 100_000;
    let mut rng = RngState::from_seed(21);
    let samples = post.sample_posterior(n_mc, &mut rng).unwrap();
    let d = post.k() + post.q();
    for j in 0..post.p() {
        let mean_ref = post.theta_row(j);
        // Sample mean within 4 standard errors coordinate-wise.
        let mut mean = DVector::<f64>::zeros(d);
        for s in 0..n_mc {
            for c in 0..post.q() {
                mean[c] += samples.b[s][(j, c)];
            }
            for c in 0..post.k() {
                mean[post.q() + c] += samples.lambda[s][(j, c)];
            }
        }
        mean /= n_mc as f64;
        let vj = post.v(j);
        for c in 0..d {
            let se = post.rho() * vj[(c, c)].sqrt() / (n_mc as f64).sqrt();
            assert!(
                (mean[c] - mean_ref[c]).abs() <= 4.0 * se,
                "outcome {j} coord {c}: mean {} vs {}",
                mean[c],
                mean_ref[c]
            );
        }
        // Sample covariance within 5% in Frobenius norm.
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for s in 0..n_mc {
            let mut dev = DVector::<f64>::zeros(d);
            for c in 0..post.q() {
                dev[c] = samples.b[s][(j, c)] - mean[c];
            }
            for c in 0..post.k() {
                dev[post.q() + c] = samples.lambda[s][(j, c)] - mean[post.q() + c];
            }
            cov.syger(1.0, &dev, &dev, 1.0);
        }
        cov /= (n_mc - 1) as f64;
        for a in 0..d {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        let target = vj * (post.rho() * post.rho());
        let rel = (&cov - &target).norm() / target.norm();
        assert!(rel < 0.05, "outcome {j}: covariance off by {rel}");
    }
}

#[test]
fn closed_form_sigma_matches_monte_carlo() {
    let (post, _, _, _) = fitted_posterior(30, 50, 6, 2, 2);
    let (sigma, b_mean) = post.posterior_mean_sigma();
    assert_eq!(b_mean, post.b_mean());

    // Off-diagonal entries coincide with the loading outer product.
    let lambda = post.lambda_mean();
    let outer = &lambda * lambda.transpose();
    for a in 0..post.p() {
        for b in 0..post.p() {
            if a != b {
                assert!((sigma[(a, b)] - outer[(a, b)]).abs() < 1e-14);
            } else {
                assert!(sigma[(a, a)] >= outer[(a, a)]);
            }
        }
    }

    // Monte Carlo mean of Λ Λᵀ within 4 MC standard errors entrywise.
    let n_mc = 20_000;
    let mut rng = RngState::from_seed(31);
    let samples = post.sample_posterior(n_mc, &mut rng).unwrap();
    let p = post.p();
    let mut mean = DMatrix::<f64>::zeros(p, p);
    let mut m2 = DMatrix::<f64>::zeros(p, p);
    for s in 0..n_mc {
        let lo = samples.lambda_outer(s);
        mean += &lo;
        m2.zip_apply(&lo, |acc, v| *acc += v * v);
    }
    mean /= n_mc as f64;
    for a in 0..p {
        for b in 0..p {
            let var = (m2[(a, b)] / n_mc as f64 - mean[(a, b)] * mean[(a, b)]).max(0.0);
            let se = (var / n_mc as f64).sqrt();
            let diff = (mean[(a, b)] - sigma[(a, b)]).abs();
            assert!(
                diff <= 4.0 * se + 1e-12,
                "entry ({a},{b}): MC {} vs closed form {} (se {se})",
                mean[(a, b)],
                sigma[(a, b)]
            );
        }
    }
}

#[test]
fn predictions_compose_link_and_predictor() {
    let (post, data, state, _) = fitted_posterior(40, 20, 5, 2, 2);
    let rows: Vec<usize> = (0..data.n()).collect();
    let cols: Vec<usize> = (0..data.p()).collect();
    let probs = post.predict_probabilities(&rows, &cols).unwrap();
    let z = flair_core::model::linear_predictor(&state, data.x()).unwrap();
    for i in 0..data.n() {
        for j in 0..data.p() {
            let expected = LinkFunction::Logit.eval(z[(i, j)]).unwrap();
            assert!((probs[(i, j)] - expected).abs() <= 1e-12);
            assert!(probs[(i, j)] > 0.0 && probs[(i, j)] < 1.0);
        }
    }
}

#[test]
fn zero_state_predicts_one_half() {
    let n = 10;
    let y = DMatrix::from_fn(n, 2, |i, _| (i % 2) as f64);
    let x = DMatrix::from_element(n, 1, 1.0);
    let data = Dataset::new(y, x, None, None).unwrap();
    let state = FactorState::zeros(n, 2, 1, 1);
    let prior = PriorConfig::isotropic(2, 1, 1.0).unwrap();
    let post = GaussianPosterior::fit(&state, &data, &prior, LinkFunction::Logit).unwrap();
    let probs = post.predict_probabilities(&[0, 3], &[0, 1]).unwrap();
    assert!(probs.iter().all(|&v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn masked_cells_still_predict_finite_probabilities() {
    let (n, p, k, q) = (15, 4, 2, 2);
    let mut rng = RngState::from_seed(50);
    let data = bernoulli_dataset(51, n, p, q);
    let mask = DMatrix::from_fn(n, p, |_, _| rng.uniform() < 0.3);
    let data = data.with_mask(Some(mask)).unwrap();
    let state = random_state(52, n, p, k, q);
    let prior = PriorConfig::isotropic(p, k, 1.0).unwrap();
    let post = GaussianPosterior::fit(&state, &data, &prior, LinkFunction::Logit).unwrap();
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (0..p).collect();
    let probs = post.predict_probabilities(&rows, &cols).unwrap();
    assert!(probs.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
}

#[test]
fn coverage_never_shrinks_with_larger_inflation() {
    // Analytic B intervals widen strictly with rho, so any fixed set of
    // reference values can only gain coverage.
    let (post, _, state, _) = fitted_posterior(70, 25, 10, 2, 2);
    let mut rng = RngState::from_seed(71);
    let reference = DMatrix::from_fn(10, 2, |j, c| state.b[(j, c)] + 0.3 * rng.standard_normal());
    let mut previous = -1.0;
    for rho in [1.0, 1.3, 1.8, 2.5] {
        let scaled = post.clone().with_inflation(rho).unwrap();
        let set = scaled
            .credible_intervals(&IntervalTarget::B, 0.05, 100, &mut RngState::from_seed(0))
            .unwrap();
        let iv = set.b.unwrap();
        let covered = reference
            .iter()
            .zip(iv.lower.iter().zip(iv.upper.iter()))
            .filter(|(t, (lo, hi))| **lo <= **t && **t <= **hi)
            .count();
        let coverage = covered as f64 / reference.len() as f64;
        assert!(
            coverage >= previous,
            "coverage fell from {previous} to {coverage} at rho {rho}"
        );
        previous = coverage;
    }
}

#[test]
fn interval_draws_are_scheduling_independent() {
    // Two identical rng states must give identical intervals even though
    // outcomes are processed in parallel.
    let (post, _, _, _) = fitted_posterior(60, 30, 8, 2, 2);
    let mut rng1 = RngState::from_seed(61);
    let mut rng2 = RngState::from_seed(61);
    let a = post
        .credible_intervals(&IntervalTarget::LambdaOuter, 0.05, 1000, &mut rng1)
        .unwrap();
    let b = post
        .credible_intervals(&IntervalTarget::LambdaOuter, 0.05, 1000, &mut rng2)
        .unwrap();
    let (ia, ib) = (a.lambda_outer.unwrap(), b.lambda_outer.unwrap());
    assert_eq!(ia.lower.as_slice(), ib.lower.as_slice());
    assert_eq!(ia.upper.as_slice(), ib.upper.as_slice());
}
