//! Dense numerical primitives: link functions, truncated and randomized
//! SVD, truncated-normal sampling and seeded RNG streams.

mod link;
mod normal;
mod rng;
mod svd;
mod truncnorm;

pub use link::LinkFunction;
pub use normal::{norm_cdf, norm_pdf, norm_quantile};
pub use rng::RngState;
pub use svd::{orthonormality_defect, truncated_svd, SvdMethod, SvdResult};
pub(crate) use svd::exact_truncated;
pub use truncnorm::sample_truncated_normal;

/// Probabilities returned by link evaluations are clamped into this open
/// interval so downstream logs never see exactly 0 or 1.
pub(crate) const PROB_FLOOR: f64 = f64::MIN_POSITIVE;
pub(crate) const PROB_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;
