//! Link functions mapping the linear predictor to success probabilities.

use alloc::format;

use super::normal::{norm_cdf, norm_pdf, norm_quantile};
use super::{PROB_CEIL, PROB_FLOOR};
use crate::{Error, Result};

/// Strictly increasing map h: ℝ → (0,1) with h(0) = 1/2.
///
/// `Logit` is the default throughout; `Probit` swaps in the standard
/// normal distribution function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkFunction {
    #[default]
    Logit,
    Probit,
}

impl LinkFunction {
    /// h(z). Errors on non-finite input; the returned probability is
    /// clamped into the open interval (0, 1) so that `ln h` and
    /// `ln(1 - h)` stay finite for any finite `z`.
    pub fn eval(self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::domain(format!("link argument must be finite, got {z}")));
        }
        Ok(self.eval_raw(z))
    }

    /// h′(z), the density of the latent noise distribution.
    pub fn derivative(self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::domain(format!("link argument must be finite, got {z}")));
        }
        Ok(match self {
            LinkFunction::Logit => {
                let s = sigmoid(z);
                s * sigmoid(-z)
            }
            LinkFunction::Probit => norm_pdf(z),
        })
    }

    /// h⁻¹(π) for π strictly inside (0, 1).
    pub fn inverse(self, pi: f64) -> Result<f64> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::domain(format!(
                "link inverse needs a probability in (0,1), got {pi}"
            )));
        }
        Ok(match self {
            LinkFunction::Logit => libm::log(pi) - libm::log1p(-pi),
            LinkFunction::Probit => norm_quantile(pi),
        })
    }

    /// Unchecked h(z) for hot loops on values already known finite.
    #[inline]
    pub(crate) fn eval_raw(self, z: f64) -> f64 {
        let p = match self {
            LinkFunction::Logit => sigmoid(z),
            LinkFunction::Probit => norm_cdf(z),
        };
        p.clamp(PROB_FLOOR, PROB_CEIL)
    }

    /// ln h(z), stable in the lower tail.
    #[inline]
    pub(crate) fn log_eval(self, z: f64) -> f64 {
        match self {
            LinkFunction::Logit => log_sigmoid(z),
            LinkFunction::Probit => {
                let c = norm_cdf(z);
                if c > 0.0 {
                    libm::log(c.min(PROB_CEIL))
                } else {
                    // erfc underflowed; leading-order tail expansion.
                    -0.5 * z * z - libm::log(-z) - 0.5 * libm::log(2.0 * core::f64::consts::PI)
                }
            }
        }
    }

    /// ln{1 − h(z)}, stable in the upper tail.
    #[inline]
    pub(crate) fn log_one_minus(self, z: f64) -> f64 {
        match self {
            LinkFunction::Logit => log_sigmoid(-z),
            LinkFunction::Probit => LinkFunction::Probit.log_eval(-z),
        }
    }
}

/// Logistic function with the usual two-branch formulation: the exponent
/// is never of a positive argument, so it cannot overflow.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// ln σ(z) without cancellation for large |z|.
#[inline]
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -libm::log1p(libm::exp(-z))
    } else {
        z - libm::log1p(libm::exp(z))
    }
}
