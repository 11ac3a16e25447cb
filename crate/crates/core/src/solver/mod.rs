//! Truncated nonnegative ℓ1 coding.
//!
//! The inner problem is
//!
//! ```text
//! minimise  ‖x − Dα‖² + λ Σ_k w_k |α_k|      (optionally subject to α ≥ 0)
//! ```
//!
//! with binary weights `w`. [`isd_solve`] wraps it in iterative support
//! detection: solve with all weights 1, mark the coordinates whose magnitude
//! exceeds `max(α) / β^(itr+1)`, drop their penalty, and resolve until the
//! detected set stops changing.
//!
//! Coordinates are 0-based throughout.

mod oracle;
mod strategy;

use std::collections::BTreeSet;

use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

pub use oracle::{brute_force_oracle, ORACLE_MAX_ATOMS};
pub use strategy::{
    coding_registry, CodingStrategy, IsdNonNegativeL1, NonNegativeL1, PlainL1, MODE_NNSC,
    MODE_NSC, MODE_SC,
};

pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const DEFAULT_BETA: f64 = 1.4;
pub const DEFAULT_INNER_TOL: f64 = 1e-6;
pub const DEFAULT_INNER_MAX_ITER: usize = 10_000;
pub const DEFAULT_OUTER_MAX_ITER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Threshold decay base for support detection; must exceed 1.
    pub beta: f64,
    /// Target worst-case KKT violation for the inner solve.
    pub inner_tol: f64,
    /// Maximum coordinate-descent sweeps per inner solve.
    pub inner_max_iter: usize,
    /// Maximum number of inner solves in the support-detection loop.
    pub outer_max_iter: usize,
    pub nonnegative: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            inner_tol: DEFAULT_INNER_TOL,
            inner_max_iter: DEFAULT_INNER_MAX_ITER,
            outer_max_iter: DEFAULT_OUTER_MAX_ITER,
            nonnegative: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be > 1, got {}", self.beta)));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidArgument("inner_tol must be > 0".into()));
        }
        if self.inner_max_iter == 0 || self.outer_max_iter == 0 {
            return Err(Error::InvalidArgument("iteration limits must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one coding problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub alpha: Vec<f64>,
    /// Weighted objective `‖x − Dα‖² + λ Σ w_k |α_k|` at `alpha`.
    pub objective: f64,
    /// Worst first-order optimality violation at `alpha`.
    pub kkt_residual: f64,
    /// False when the sweep budget ran out before `kkt_residual <= inner_tol`.
    pub converged: bool,
    /// Coordinate-descent sweeps spent (summed over outer iterations for ISD).
    pub sweeps: usize,
}

impl SparseCode {
    /// Number of entries with magnitude above `tol`.
    pub fn l0(&self, tol: f64) -> usize {
        self.alpha.iter().filter(|a| a.abs() > tol).count()
    }

    fn zero(p: usize) -> Self {
        Self {
            alpha: vec![0.0; p],
            objective: 0.0,
            kkt_residual: 0.0,
            converged: true,
            sweeps: 0,
        }
    }
}

/// Binary penalty weights: `true` means the coordinate is penalised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightVector(Vec<bool>);

impl WeightVector {
    pub fn ones(p: usize) -> Self {
        Self(vec![true; p])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Weights for the complement of `support`: detected coordinates get 0.
    pub fn complement_of(support: &SupportSet, p: usize) -> Self {
        let mut w = vec![true; p];
        for &k in support.iter() {
            if k < p {
                w[k] = false;
            }
        }
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        if self.0[k] {
            1.0
        } else {
            0.0
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

/// Detected coordinates, 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupportSet(BTreeSet<usize>);

impl SupportSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iter(&self) -> impl Iterator<Item = &usize> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.contains(&k)
    }
}

impl FromIterator<usize> for SupportSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// `‖x − Dα‖² + λ Σ w_k |α_k|`.
pub fn objective(x: &[f64], dict: &Dictionary, alpha: &[f64], w: &WeightVector, lambda: f64) -> f64 {
    let r = residual(x, dict, alpha);
    dot(&r, &r) + penalty(alpha, w, lambda)
}

fn penalty(alpha: &[f64], w: &WeightVector, lambda: f64) -> f64 {
    lambda
        * alpha
            .iter()
            .enumerate()
            .map(|(k, a)| w.get(k) * a.abs())
            .sum::<f64>()
}

/// `x − Dα`, computed from scratch.
fn residual(x: &[f64], dict: &Dictionary, alpha: &[f64]) -> Vec<f64> {
    let mut r = x.to_vec();
    for (k, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            axpy(&mut r, -a, dict.atom(k));
        }
    }
    r
}

/// Worst KKT violation of `alpha` for the weighted problem, with gradient
/// `g = 2Dᵀ(Dα − x)` recomputed from scratch.
///
/// Nonnegative case: `|g_k + λw_k|` on the support, `max(0, −(g_k + λw_k))` off it.
/// Signed case: `|g_k + λw_k sign(α_k)|` on the support, `max(0, |g_k| − λw_k)` off it.
pub fn kkt_residual(
    x: &[f64],
    dict: &Dictionary,
    alpha: &[f64],
    w: &WeightVector,
    lambda: f64,
    nonnegative: bool,
) -> f64 {
    let r = residual(x, dict, alpha);
    kkt_from_residual(&r, dict, alpha, w, lambda, nonnegative)
}

fn kkt_from_residual(
    r: &[f64],
    dict: &Dictionary,
    alpha: &[f64],
    w: &WeightVector,
    lambda: f64,
    nonnegative: bool,
) -> f64 {
    let mut worst = 0.0f64;
    for (k, &a) in alpha.iter().enumerate() {
        let g = -2.0 * dot(dict.atom(k), r);
        let pen = lambda * w.get(k);
        let v = if a != 0.0 {
            (g + pen * a.signum()).abs()
        } else if nonnegative {
            (-(g + pen)).max(0.0)
        } else {
            (g.abs() - pen).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn check_dims(x: &[f64], dict: &Dictionary, w: &WeightVector) -> Result<()> {
    if x.len() != dict.dim() {
        return Err(Error::InvalidArgument(format!(
            "descriptor has dimension {}, dictionary atoms have {}",
            x.len(),
            dict.dim()
        )));
    }
    if w.len() != dict.size() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} atoms",
            w.len(),
            dict.size()
        )));
    }
    Ok(())
}

/// Cyclic coordinate descent on the weighted problem, optionally warm
/// started. Each coordinate is minimised exactly:
/// `α_k ← S(d_kᵀ r_k, λw_k/2) / ‖d_k‖²` with `r_k` the residual without atom `k`
/// and `S` the (one-sided when nonnegative) soft threshold.
pub fn solve_weighted_from(
    x: &[f64],
    dict: &Dictionary,
    w: &WeightVector,
    cfg: &SolverConfig,
    nonnegative: bool,
    init: Option<&[f64]>,
) -> Result<SparseCode> {
    cfg.validate()?;
    check_dims(x, dict, w)?;
    let p = dict.size();
    if x.iter().all(|&v| v == 0.0) {
        return Ok(SparseCode::zero(p));
    }

    let mut alpha = match init {
        Some(a) if a.len() == p => {
            if nonnegative {
                a.iter().map(|&v| v.max(0.0)).collect()
            } else {
                a.to_vec()
            }
        }
        Some(a) => {
            return Err(Error::InvalidArgument(format!(
                "warm start has length {}, expected {p}",
                a.len()
            )))
        }
        None => vec![0.0; p],
    };
    let mut r = residual(x, dict, &alpha);
    let half_lambda = 0.5 * cfg.lambda;

    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    while sweeps < cfg.inner_max_iter {
        sweeps += 1;
        for k in 0..p {
            let d = dict.atom(k);
            let nk = dict.norm_sq(k);
            let old = alpha[k];
            let rho = dot(d, &r) + nk * old;
            let t = half_lambda * w.get(k);
            let new = if nonnegative {
                (rho - t).max(0.0) / nk
            } else if rho > t {
                (rho - t) / nk
            } else if rho < -t {
                (rho + t) / nk
            } else {
                0.0
            };
            if new != old {
                axpy(&mut r, old - new, d);
                alpha[k] = new;
            }
        }
        // refresh the residual so drift never masks a KKT violation
        r = residual(x, dict, &alpha);
        kkt = kkt_from_residual(&r, dict, &alpha, w, cfg.lambda, nonnegative);
        if kkt <= cfg.inner_tol {
            break;
        }
    }
    let objective = dot(&r, &r) + penalty(&alpha, w, cfg.lambda);
    Ok(SparseCode {
        alpha,
        objective,
        kkt_residual: kkt,
        converged: kkt <= cfg.inner_tol,
        sweeps,
    })
}

/// Nonnegative weighted ℓ1 solve (the truncated inner problem).
pub fn nn_weighted_l1_solve(
    x: &[f64],
    dict: &Dictionary,
    w: &WeightVector,
    cfg: &SolverConfig,
) -> Result<SparseCode> {
    solve_weighted_from(x, dict, w, cfg, true, None)
}

/// Plain signed ℓ1 solve with all weights 1, used for dictionary learning
/// and the unconstrained coding mode.
pub fn l1_solve(x: &[f64], dict: &Dictionary, cfg: &SolverConfig) -> Result<SparseCode> {
    solve_weighted_from(x, dict, &WeightVector::ones(dict.size()), cfg, false, None)
}

/// `max_k |α_k| / β^(itr+1)`.
pub fn detection_threshold(alpha: &[f64], itr: usize, beta: f64) -> f64 {
    let peak = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    peak / beta.powi(itr as i32 + 1)
}

/// Coordinates whose magnitude strictly exceeds the threshold for `itr`.
pub fn support_detect(code: &SparseCode, itr: usize, cfg: &SolverConfig) -> Result<SupportSet> {
    cfg.validate()?;
    let eps = detection_threshold(&code.alpha, itr, cfg.beta);
    Ok(code
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, a)| a.abs() > eps)
        .map(|(k, _)| k)
        .collect())
}

/// Per-outer-iteration record of [`isd_solve_traced`].
#[derive(Debug, Clone, Default)]
pub struct IsdTrace {
    /// `supports[0]` is the empty initial set; `supports[t+1]` is detected
    /// from `codes[t]` using `thresholds[t]`.
    pub supports: Vec<SupportSet>,
    pub codes: Vec<SparseCode>,
    pub thresholds: Vec<f64>,
}

/// Iterative support detection around the weighted solve.
pub fn isd_solve(x: &[f64], dict: &Dictionary, cfg: &SolverConfig) -> Result<SparseCode> {
    isd_solve_traced(x, dict, cfg).map(|(code, _)| code)
}

pub fn isd_solve_traced(
    x: &[f64],
    dict: &Dictionary,
    cfg: &SolverConfig,
) -> Result<(SparseCode, IsdTrace)> {
    cfg.validate()?;
    let p = dict.size();
    let mut trace = IsdTrace {
        supports: vec![SupportSet::new()],
        ..IsdTrace::default()
    };
    let mut support = SupportSet::new();
    let mut last: Option<SparseCode> = None;
    let mut total_sweeps = 0;
    for itr in 0..cfg.outer_max_iter {
        let w = WeightVector::complement_of(&support, p);
        let warm = last.as_ref().map(|c| c.alpha.as_slice());
        let code = solve_weighted_from(x, dict, &w, cfg, cfg.nonnegative, warm)?;
        total_sweeps += code.sweeps;
        let next = support_detect(&code, itr, cfg)?;
        trace
            .thresholds
            .push(detection_threshold(&code.alpha, itr, cfg.beta));
        trace.codes.push(code.clone());
        trace.supports.push(next.clone());
        let stable = next == support;
        support = next;
        last = Some(code);
        if stable {
            break;
        }
    }
    let mut code = last.expect("outer_max_iter >= 1");
    code.sweeps = total_sweeps;
    Ok((code, trace))
}
