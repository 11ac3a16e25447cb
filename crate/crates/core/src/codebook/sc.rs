//! ℓ1 sparse-coding dictionary learning.
//!
//! Alternates a coding pass (plain signed ℓ1, all weights 1, warm started
//! from the previous codes) with a cyclic column update
//! `d_k ← R_k a_k / ‖R_k a_k‖`, where `R_k` is the residual without atom `k`
//! and `a_k` the k-th code row. Both half-steps are monotone in
//! `Σ_m ‖x_m − Dα_m‖² + λ‖α_m‖₁`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::solver::{solve_weighted_from, SolverConfig, WeightVector};

use super::{check_training_args, seed_rows, to_f64, CodebookTrainer, Dictionary, TrainLog};

pub const DEFAULT_SC_OUTER_ITERS: usize = 10;

/// Dictionary and codes after one outer iteration (or the initial coding).
#[derive(Debug, Clone)]
pub struct ScIterate {
    pub dictionary: Dictionary,
    /// `M×p`, one code per row.
    pub codes: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScTrainer {
    outer_iters: usize,
    solver: SolverConfig,
}

impl ScTrainer {
    pub fn new(lambda: f64, outer_iters: usize, solver: SolverConfig) -> Result<Self> {
        let solver = SolverConfig {
            lambda,
            nonnegative: false,
            ..solver
        };
        solver.validate()?;
        Ok(Self {
            outer_iters,
            solver,
        })
    }

    fn run(
        &self,
        samples: ArrayView2<'_, f32>,
        p: usize,
        seed: u64,
        keep_iterates: bool,
    ) -> Result<(Dictionary, TrainLog, Vec<ScIterate>)> {
        let (m, l) = samples.dim();
        check_training_args(m, p)?;
        let x = to_f64(samples);
        let x_rows: Vec<&[f64]> = (0..m).map(|i| x.row(i).to_slice().unwrap()).collect();

        let nonzero: Vec<usize> = (0..m)
            .filter(|&i| x_rows[i].iter().any(|&v| v != 0.0))
            .collect();
        if nonzero.len() < p {
            return Err(Error::InvalidArgument(format!(
                "need {p} nonzero descriptors to seed the dictionary, found {}",
                nonzero.len()
            )));
        }
        let init = seed_rows(&x, &nonzero, p, seed);
        let mut atoms = Array2::<f64>::zeros((l, p));
        for (k, &i) in init.iter().enumerate() {
            atoms.column_mut(k).assign(&x.row(i));
        }
        let mut dict = Dictionary::normalized(atoms)?;

        let mut codes = Array2::<f64>::zeros((m, p));
        let mut log = TrainLog::default();
        let mut iterates = Vec::new();

        log.objective.push(self.code_all(&x_rows, &dict, &mut codes)?);
        if keep_iterates {
            iterates.push(ScIterate {
                dictionary: dict.clone(),
                codes: codes.clone(),
            });
        }
        for _ in 0..self.outer_iters {
            update_dictionary(&x, &codes, &mut dict);
            let obj = self.code_all(&x_rows, &dict, &mut codes)?;
            let prev = *log.objective.last().unwrap();
            log.objective.push(obj);
            log.iterations += 1;
            log.converged = prev - obj <= 1e-6 * prev.abs().max(1.0);
            if keep_iterates {
                iterates.push(ScIterate {
                    dictionary: dict.clone(),
                    codes: codes.clone(),
                });
            }
        }
        Ok((dict, log, iterates))
    }

    /// Recodes every row (warm start from `codes`) and returns the summed objective.
    fn code_all(&self, x_rows: &[&[f64]], dict: &Dictionary, codes: &mut Array2<f64>) -> Result<f64> {
        let w = WeightVector::ones(dict.size());
        let solved: Vec<_> = x_rows
            .par_iter()
            .enumerate()
            .map(|(i, xi)| {
                let warm = codes.row(i).to_vec();
                solve_weighted_from(xi, dict, &w, &self.solver, false, Some(&warm))
            })
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for (i, code) in solved.into_iter().enumerate() {
            total += code.objective;
            codes
                .row_mut(i)
                .iter_mut()
                .zip(&code.alpha)
                .for_each(|(c, &a)| *c = a);
        }
        Ok(total)
    }
}

/// Cyclic unit-norm least-squares update of every column. A column whose
/// code row is zero (or whose update direction vanishes) is left unchanged.
fn update_dictionary(x: &Array2<f64>, codes: &Array2<f64>, dict: &mut Dictionary) {
    let (m, l) = x.dim();
    let p = dict.size();
    // residual R = X − A Dᵀ, M×L
    let mut resid = x.clone();
    for i in 0..m {
        let mut row = resid.row_mut(i);
        for k in 0..p {
            let a = codes[(i, k)];
            if a != 0.0 {
                row.iter_mut().zip(dict.atom(k)).for_each(|(r, d)| *r -= a * d);
            }
        }
    }
    let mut u = vec![0.0; l];
    for k in 0..p {
        let a = codes.column(k);
        let a_sq: f64 = a.iter().map(|v| v * v).sum();
        if a_sq == 0.0 {
            continue;
        }
        let old = dict.atom(k).to_vec();
        // u = R_kᵀ a with R_k = R + a d_kᵀ
        u.iter_mut()
            .zip(&old)
            .for_each(|(ui, di)| *ui = di * a_sq);
        for i in 0..m {
            let ai = a[i];
            if ai != 0.0 {
                u.iter_mut().zip(resid.row(i)).for_each(|(ui, r)| *ui += ai * r);
            }
        }
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 1e-12) {
            continue;
        }
        let new: Vec<f64> = u.iter().map(|v| v / n).collect();
        for i in 0..m {
            let ai = a[i];
            if ai != 0.0 {
                resid
                    .row_mut(i)
                    .iter_mut()
                    .zip(new.iter().zip(&old))
                    .for_each(|(r, (nw, od))| *r -= ai * (nw - od));
            }
        }
        dict.set_atom(k, &new);
    }
}

impl CodebookTrainer for ScTrainer {
    fn name(&self) -> &'static str {
        super::METHOD_SC
    }

    fn train(&self, samples: ArrayView2<'_, f32>, p: usize, seed: u64) -> Result<(Dictionary, TrainLog)> {
        self.run(samples, p, seed, false).map(|(d, log, _)| (d, log))
    }
}

pub fn sc_dictionary_train(
    set: &DescriptorSet,
    p: usize,
    lambda: f64,
    outer_iters: usize,
    seed: u64,
) -> Result<(Dictionary, TrainLog)> {
    ScTrainer::new(lambda, outer_iters, SolverConfig::default())?.train(set.data().view(), p, seed)
}

/// As [`sc_dictionary_train`], also returning every intermediate iterate.
pub fn sc_dictionary_train_traced(
    samples: ArrayView2<'_, f32>,
    p: usize,
    lambda: f64,
    outer_iters: usize,
    seed: u64,
) -> Result<(Dictionary, TrainLog, Vec<ScIterate>)> {
    ScTrainer::new(lambda, outer_iters, SolverConfig::default())?.run(samples, p, seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn zero_outer_iters_returns_initialization() {
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i + 2 * j) % 4) as f32 * 0.25 + 0.1);
        let (d, log, its) = sc_dictionary_train_traced(x.view(), 2, 0.1, 0, 5).unwrap();
        assert_eq!(log.objective.len(), 1);
        assert_eq!(log.iterations, 0);
        assert_eq!(its.len(), 1);
        assert_eq!(its[0].dictionary, d);
        // each atom is a normalised training row
        for k in 0..2 {
            let atom = d.atom(k);
            let matches_row = (0..6).any(|i| {
                let r: Vec<f64> = x.row(i).iter().map(|&v| f64::from(v)).collect();
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.iter().zip(atom).all(|(a, b)| (a / n - b).abs() < 1e-12)
            });
            assert!(matches_row);
        }
    }

    #[test]
    fn rejects_all_zero_seed_pool() {
        let x = Array2::<f32>::zeros((4, 3));
        assert!(sc_dictionary_train_traced(x.view(), 2, 0.1, 1, 0).is_err());
        let x = Array2::<f32>::ones((2, 3));
        assert!(sc_dictionary_train_traced(x.view(), 3, 0.1, 1, 0).is_err());
    }

    #[test]
    fn column_update_never_increases_reconstruction() {
        let x = Array2::from_shape_fn((12, 4), |(i, j)| ((i * 7 + j * 5) % 9) as f64 / 9.0);
        let raw = Array2::from_shape_fn((4, 3), |(i, k)| 1.0 + ((i + 2 * k) % 3) as f64);
        let mut dict = Dictionary::normalized(raw).unwrap();
        let codes = Array2::from_shape_fn((12, 3), |(i, k)| if (i + k) % 2 == 0 { 0.4 } else { 0.0 });
        let recon = |d: &Dictionary| {
            let dm = d.to_array();
            let diff = &x - &codes.dot(&dm.t());
            diff.iter().map(|v| v * v).sum::<f64>()
        };
        let before = recon(&dict);
        update_dictionary(&x, &codes, &mut dict);
        assert!(recon(&dict) <= before + 1e-12);
        for k in 0..3 {
            assert!((dict.norm_sq(k).sqrt() - 1.0).abs() < 1e-9);
        }
    }
}
