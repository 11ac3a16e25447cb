//! Exhaustive-support reference solver for small nonnegative problems.

use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot};

use super::{kkt_residual, objective, SparseCode, WeightVector};

pub const ORACLE_MAX_ATOMS: usize = 12;

const PIVOT_TOL: f64 = 1e-10;
const OFF_SUPPORT_TOL: f64 = 1e-8;

/// Solves the nonnegative weighted problem by enumerating every support `S`.
///
/// On a fixed support the stationarity system `2 D_Sᵀ(D_S α_S − x) + λ w_S = 0`
/// is linear. A candidate is kept when `α_S > 0` and the off-support gradient
/// condition `g_k + λ w_k ≥ 0` holds; the cheapest kept candidate wins, with
/// `α = 0` always in the pool. Supports with a singular Gram block are skipped
/// (an optimum with linearly independent support always exists).
pub fn brute_force_oracle(
    x: &[f64],
    dict: &Dictionary,
    w: &WeightVector,
    lambda: f64,
) -> Result<SparseCode> {
    let (l, p) = (dict.dim(), dict.size());
    if p > ORACLE_MAX_ATOMS {
        return Err(Error::InvalidArgument(format!(
            "oracle enumerates 2^p supports; p = {p} exceeds {ORACLE_MAX_ATOMS}"
        )));
    }
    if x.len() != l || w.len() != p {
        return Err(Error::InvalidArgument("oracle dimension mismatch".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be > 0".into()));
    }

    let gram: Vec<f64> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| dot(dict.atom(i), dict.atom(j)))
        .collect();
    let corr: Vec<f64> = (0..p).map(|k| dot(dict.atom(k), x)).collect();

    let mut best = vec![0.0; p];
    let mut best_obj = objective(x, dict, &best, w, lambda);

    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|&k| mask & (1 << k) != 0).collect();
        let s = support.len();
        if s > l {
            continue;
        }
        let sub_gram: Vec<f64> = support
            .iter()
            .flat_map(|&i| support.iter().map(move |&j| (i, j)))
            .map(|(i, j)| gram[i * p + j])
            .collect();
        let rhs: Vec<f64> = support
            .iter()
            .map(|&k| corr[k] - 0.5 * lambda * w.get(k))
            .collect();
        let Some(sol) = cholesky_solve(&sub_gram, &rhs, s, PIVOT_TOL) else {
            continue;
        };
        if sol.iter().any(|&a| a <= 0.0) {
            continue;
        }
        let mut alpha = vec![0.0; p];
        for (&k, &a) in support.iter().zip(&sol) {
            alpha[k] = a;
        }
        // off-support: g_k + λ w_k ≥ 0 with g = 2(Gα − Dᵀx)
        let feasible = (0..p).filter(|k| mask & (1 << k) == 0).all(|k| {
            let g = 2.0 * (support.iter().zip(&sol).map(|(&j, &a)| gram[k * p + j] * a).sum::<f64>() - corr[k]);
            g + lambda * w.get(k) >= -OFF_SUPPORT_TOL
        });
        if !feasible {
            continue;
        }
        let obj = objective(x, dict, &alpha, w, lambda);
        if obj < best_obj {
            best_obj = obj;
            best = alpha;
        }
    }

    let kkt = kkt_residual(x, dict, &best, w, lambda, true);
    Ok(SparseCode {
        alpha: best,
        objective: best_obj,
        kkt_residual: kkt,
        converged: true,
        sweeps: 0,
    })
}
