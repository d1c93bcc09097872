//! Truncated singular value decomposition, exact or randomized.

use alloc::format;

use nalgebra::{DMatrix, DVector};

use super::rng::RngState;
use crate::{Error, Result};

/// Default oversampling for the randomized range finder.
const OVERSAMPLE: usize = 10;
/// Default number of power iterations; each one re-orthonormalizes.
const POWER_ITERS: usize = 2;

/// How a truncated SVD is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMethod {
    /// Full decomposition, then truncation.
    Exact,
    /// Gaussian sketching with oversampling 10 and 2 power iterations
    /// (Halko, Martinsson and Tropp). Deterministic for a fixed seed.
    Randomized,
}

/// Rank-r factorization A ≈ U diag(D) Vᵀ with orthonormal U, V columns
/// and nonincreasing, nonnegative D.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdResult {
    /// Rank of the factorization.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Reassemble U diag(D) Vᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut ud = self.u.clone();
        for (j, mut col) in ud.column_iter_mut().enumerate() {
            col *= self.singular_values[j];
        }
        &ud * self.v.transpose()
    }
}

/// Best (exact) or near-best (randomized) rank-r approximation of `a`.
pub fn truncated_svd(
    a: &DMatrix<f64>,
    rank: usize,
    method: SvdMethod,
    rng: &mut RngState,
) -> Result<SvdResult> {
    let (n, p) = a.shape();
    let max_rank = n.min(p);
    if rank < 1 || rank > max_rank {
        return Err(Error::invalid(format!(
            "rank must lie in 1..={max_rank} for a {n}x{p} matrix, got {rank}"
        )));
    }
    match method {
        SvdMethod::Exact => exact_truncated(a, rank),
        SvdMethod::Randomized => randomized_truncated(a, rank, rng),
    }
}

/// Exact truncated SVD with a correctness gate.
///
/// nalgebra's Golub-Kahan implementation can silently return an invalid
/// factorization on (near-)rank-deficient inputs, e.g. a constant
/// matrix. Every decomposition is therefore validated against the
/// singular-vector identities A v_i = σ_i u_i and Aᵀ u_i = σ_i v_i plus
/// column orthonormality; on failure a one-sided Jacobi SVD takes over.
pub(crate) fn exact_truncated(a: &DMatrix<f64>, rank: usize) -> Result<SvdResult> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite values in SVD input"));
    }
    let svd = a.clone().svd(true, true);
    if let (Some(u_full), Some(vt_full)) = (svd.u, svd.v_t) {
        // nalgebra returns singular values sorted in decreasing order.
        let u = u_full.columns(0, rank).into_owned();
        let d = DVector::from_iterator(rank, svd.singular_values.iter().take(rank).copied());
        let v = vt_full.rows(0, rank).transpose();
        let candidate = SvdResult {
            u,
            singular_values: d,
            v,
        };
        if factors_are_valid(a, &candidate) {
            return Ok(candidate);
        }
    }
    let fallback = jacobi_svd(a, rank)?;
    if factors_are_valid(a, &fallback) {
        Ok(fallback)
    } else {
        Err(Error::numerical("SVD failed to converge to a valid factorization"))
    }
}

/// Accept a factorization only if the truncated singular triplets behave
/// like singular triplets of `a`.
fn factors_are_valid(a: &DMatrix<f64>, svd: &SvdResult) -> bool {
    let scale = a.norm().max(1e-300);
    if svd.singular_values.iter().any(|&s| !(s >= 0.0)) {
        return false;
    }
    if !svd
        .singular_values
        .as_slice()
        .windows(2)
        .all(|w| w[0] >= w[1])
    {
        return false;
    }
    if orthonormality_defect(&svd.u) > 1e-8 || orthonormality_defect(&svd.v) > 1e-8 {
        return false;
    }
    let mut ud = svd.u.clone();
    let mut vd = svd.v.clone();
    for (i, s) in svd.singular_values.iter().enumerate() {
        ud.column_mut(i).scale_mut(*s);
        vd.column_mut(i).scale_mut(*s);
    }
    let left = (a * &svd.v - ud).norm();
    let right = (a.transpose() * &svd.u - vd).norm();
    left <= 1e-8 * scale && right <= 1e-8 * scale
}

/// One-sided Jacobi SVD, truncated to `rank`. Slow but unconditionally
/// robust; used as the fallback when the fast path cannot be trusted.
fn jacobi_svd(a: &DMatrix<f64>, rank: usize) -> Result<SvdResult> {
    let (n, p) = a.shape();
    if p > n {
        // Work on the transpose and swap the factors back.
        let t = jacobi_svd(&a.transpose(), rank)?;
        return Ok(SvdResult {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let mut work = a.clone();
    let mut v = DMatrix::<f64>::identity(p, p);
    let tol = 1e-14;
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..p.saturating_sub(1) {
            for j in (i + 1)..p {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..n {
                    let wi = work[(r, i)];
                    let wj = work[(r, j)];
                    alpha += wi * wi;
                    beta += wj * wj;
                    gamma += wi * wj;
                }
                if gamma.abs() <= tol * libm::sqrt(alpha * beta) || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for r in 0..n {
                    let wi = work[(r, i)];
                    let wj = work[(r, j)];
                    work[(r, i)] = c * wi - s * wj;
                    work[(r, j)] = s * wi + c * wj;
                }
                for r in 0..p {
                    let vi = v[(r, i)];
                    let vj = v[(r, j)];
                    v[(r, i)] = c * vi - s * vj;
                    v[(r, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort them decreasing.
    let mut order: alloc::vec::Vec<(usize, f64)> =
        (0..p).map(|c| (c, work.column(c).norm())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut u = DMatrix::<f64>::zeros(n, rank);
    let mut vr = DMatrix::<f64>::zeros(p, rank);
    let mut d = DVector::<f64>::zeros(rank);
    let scale = order.first().map_or(0.0, |t| t.1);
    for (out, &(c, norm)) in order.iter().take(rank).enumerate() {
        d[out] = norm;
        vr.column_mut(out).copy_from(&v.column(c));
        if norm > scale * 1e-300 && norm > 0.0 {
            for r in 0..n {
                u[(r, out)] = work[(r, c)] / norm;
            }
        }
    }
    // Zero singular values leave U columns empty; complete them to an
    // orthonormal set so the factor contract still holds.
    complete_orthonormal(&mut u, &d);
    Ok(SvdResult {
        u,
        singular_values: d,
        v: vr,
    })
}

/// Replace zero columns of `u` (flagged by zero singular values) with
/// vectors orthonormal to all other columns, via Gram-Schmidt against
/// standard basis vectors.
fn complete_orthonormal(u: &mut DMatrix<f64>, d: &DVector<f64>) {
    let (n, r) = u.shape();
    for c in 0..r {
        if d[c] > 0.0 {
            continue;
        }
        'basis: for e in 0..n {
            let mut cand = DVector::<f64>::zeros(n);
            cand[e] = 1.0;
            for other in 0..r {
                if other == c {
                    continue;
                }
                let proj = u.column(other).dot(&cand);
                for row in 0..n {
                    cand[row] -= proj * u[(row, other)];
                }
            }
            let norm = cand.norm();
            if norm > 0.5 {
                cand /= norm;
                u.column_mut(c).copy_from(&cand);
                break 'basis;
            }
        }
    }
}

fn randomized_truncated(a: &DMatrix<f64>, rank: usize, rng: &mut RngState) -> Result<SvdResult> {
    let (n, p) = a.shape();
    let sketch = (rank + OVERSAMPLE).min(n.min(p));

    let omega = DMatrix::<f64>::from_fn(p, sketch, |_, _| rng.standard_normal());
    let mut q = orthonormal_basis(a * omega)?;
    for _ in 0..POWER_ITERS {
        let z = orthonormal_basis(a.transpose() * &q)?;
        q = orthonormal_basis(a * z)?;
    }

    // Project onto the captured range and decompose the small factor.
    let b = q.transpose() * a;
    let small = exact_truncated(&b, rank.min(b.nrows().min(b.ncols())))?;
    Ok(SvdResult {
        u: &q * small.u,
        singular_values: small.singular_values,
        v: small.v,
    })
}

fn orthonormal_basis(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite values in randomized SVD sketch"));
    }
    Ok(m.qr().q())
}

/// Max absolute deviation of WᵀW from the identity; convenient for
/// checking the orthonormality contract on U and V.
pub fn orthonormality_defect(w: &DMatrix<f64>) -> f64 {
    let gram = w.transpose() * w;
    let r = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}
