//! Sampling from a normal distribution conditioned on an interval.

use alloc::format;

use super::normal::{norm_cdf, norm_quantile};
use super::rng::RngState;
use crate::{Error, Result};

/// Mass of the acceptance region below which rejection sampling is
/// abandoned in favor of inverse-CDF sampling.
const REJECTION_MASS: f64 = 0.1;

/// Draw from N(μ, σ²) conditioned on [lo, hi].
///
/// Uses rejection from the untruncated normal while the interval carries
/// at least 10% of the mass, and the inverse-CDF transform otherwise.
pub fn sample_truncated_normal(
    rng: &mut RngState,
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "truncation interval must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let cdf_a = norm_cdf(a);
    let cdf_b = norm_cdf(b);
    let mass = cdf_b - cdf_a;

    if mass >= REJECTION_MASS {
        loop {
            let z = rng.standard_normal();
            if z >= a && z <= b {
                return Ok(mu + sigma * z);
            }
        }
    }

    // Thin interval: map a uniform draw through the conditional CDF.
    let u = cdf_a + rng.uniform() * mass;
    let z = norm_quantile(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
    Ok((mu + sigma * z).clamp(lo, hi))
}
