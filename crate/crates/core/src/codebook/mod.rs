//! Codebooks: the `Dictionary` type, its `NNCB` file format and the two
//! training strategies (Lloyd K-means and ℓ1 sparse-coding dictionary
//! learning) behind the [`CodebookTrainer`] trait.

pub mod kmeans;
pub mod sc;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter, CODEBOOK_MAGIC};
use crate::registry::Registry;
use crate::solver::SolverConfig;

pub use kmeans::{kmeans_train, lloyd, KMeansTrainer, LloydFit, DEFAULT_KMEANS_MAX_ITER};
pub use sc::{
    sc_dictionary_train, sc_dictionary_train_traced, ScIterate, ScTrainer, DEFAULT_SC_OUTER_ITERS,
};

/// Column norms of freshly built dictionaries must be within this of 1.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Tolerance applied to dictionaries read back from float32 files.
pub const LOADED_NORM_TOL: f64 = 1e-5;

/// `L×p` matrix whose columns are atoms, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    dim: usize,
    size: usize,
    cols: Vec<f64>,
    norms_sq: Vec<f64>,
}

impl Dictionary {
    /// Wraps an `L×p` matrix whose columns already have unit norm.
    pub fn from_columns(atoms: Array2<f64>) -> Result<Self> {
        let (l, p) = atoms.dim();
        let cols = (0..p).flat_map(|k| atoms.column(k).to_vec()).collect();
        Self::from_col_major(l, p, cols, UNIT_NORM_TOL)
    }

    /// Builds a dictionary from arbitrary columns, scaling each to unit norm.
    pub fn normalized(atoms: Array2<f64>) -> Result<Self> {
        let (l, p) = atoms.dim();
        let mut cols: Vec<f64> = (0..p).flat_map(|k| atoms.column(k).to_vec()).collect();
        for (k, col) in cols.chunks_mut(l.max(1)).enumerate().take(p) {
            let n = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n > 1e-12) {
                return Err(Error::InvalidArgument(format!("atom {k} has near-zero norm")));
            }
            col.iter_mut().for_each(|v| *v /= n);
        }
        Self::from_col_major(l, p, cols, UNIT_NORM_TOL)
    }

    fn from_col_major(l: usize, p: usize, cols: Vec<f64>, tol: f64) -> Result<Self> {
        if l == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!("empty {l}x{p} dictionary")));
        }
        if cols.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite dictionary entry".into()));
        }
        let norms_sq: Vec<f64> = cols
            .chunks(l)
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        if let Some((k, n)) = norms_sq
            .iter()
            .enumerate()
            .find(|(_, n)| (n.sqrt() - 1.0).abs() > tol)
        {
            return Err(Error::InvalidInput(format!(
                "atom {k} has norm {}, expected 1",
                n.sqrt()
            )));
        }
        Ok(Self {
            dim: l,
            size: p,
            cols,
            norms_sq,
        })
    }

    /// Descriptor dimension `L`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms `p`.
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn atom(&self, k: usize) -> &[f64] {
        &self.cols[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn norm_sq(&self, k: usize) -> f64 {
        self.norms_sq[k]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.size), |(i, k)| self.cols[k * self.dim + i])
    }

    pub(crate) fn set_atom(&mut self, k: usize, atom: &[f64]) {
        self.cols[k * self.dim..(k + 1) * self.dim].copy_from_slice(atom);
        self.norms_sq[k] = atom.iter().map(|v| v * v).sum();
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(CODEBOOK_MAGIC);
        w.put_u32(self.dim as u32);
        w.put_u32(self.size as u32);
        for &v in &self.cols {
            w.put_f32(v as f32);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, CODEBOOK_MAGIC)?;
        let l = r.u32()? as usize;
        let p = r.u32()? as usize;
        let n = l
            .checked_mul(p)
            .ok_or_else(|| Error::Format("codebook too large".into()))?;
        let cols: Vec<f64> = r.f32_vec(n)?.into_iter().map(f64::from).collect();
        r.finish()?;
        Self::from_col_major(l, p, cols, LOADED_NORM_TOL).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?).map_err(|e| e.in_file(path))
    }
}

/// Objective history of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Learns a `p`-atom dictionary from `M×L` samples.
pub trait CodebookTrainer: Send + Sync {
    fn name(&self) -> &'static str;

    fn train(&self, samples: ArrayView2<'_, f32>, p: usize, seed: u64) -> Result<(Dictionary, TrainLog)>;
}

/// Parameters shared by the built-in trainer factories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub kmeans_max_iter: usize,
    pub lambda: f64,
    pub sc_outer_iters: usize,
    pub solver: SolverConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            kmeans_max_iter: DEFAULT_KMEANS_MAX_ITER,
            lambda: crate::solver::DEFAULT_LAMBDA,
            sc_outer_iters: DEFAULT_SC_OUTER_ITERS,
            solver: SolverConfig::default(),
        }
    }
}

pub const METHOD_KMEANS: &str = "kmeans";
pub const METHOD_SC: &str = "sc";

/// Registry with `kmeans` and `sc`.
pub fn trainer_registry() -> Registry<dyn CodebookTrainer, TrainerConfig> {
    let mut reg: Registry<dyn CodebookTrainer, TrainerConfig> = Registry::new("codebook method");
    reg.register(METHOD_KMEANS, |cfg| {
        Ok(Box::new(KMeansTrainer {
            max_iter: cfg.kmeans_max_iter,
        }))
    });
    reg.register(METHOD_SC, |cfg| {
        Ok(Box::new(ScTrainer::new(cfg.lambda, cfg.sc_outer_iters, cfg.solver)?))
    });
    reg
}

fn check_training_args(m: usize, p: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("empty descriptor set".into()));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("codebook size must be >= 1".into()));
    }
    if p > m {
        return Err(Error::InvalidArgument(format!(
            "codebook size {p} exceeds {m} training descriptors"
        )));
    }
    Ok(())
}

fn to_f64(samples: ArrayView2<'_, f32>) -> Array2<f64> {
    samples.mapv(f64::from)
}

/// D²-weighted seeding: the first row is drawn uniformly from `candidates`,
/// each later one with probability proportional to its squared distance
/// to the nearest row already drawn. Rows equal to a drawn row have weight
/// zero, so the picks are distinct values while enough exist; after that
/// the remaining candidates are drawn uniformly.
fn seed_rows(x: &Array2<f64>, candidates: &[usize], p: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(p);
    let mut taken = vec![false; candidates.len()];
    let first = rng.random_range(0..candidates.len());
    picked.push(candidates[first]);
    taken[first] = true;
    let mut dist = vec![f64::INFINITY; candidates.len()];
    while picked.len() < p {
        let c = x.row(*picked.last().unwrap());
        dist.par_iter_mut().zip(candidates).for_each(|(d, &i)| {
            let diff = &x.row(i) - &c;
            *d = d.min(diff.iter().map(|v| v * v).sum());
        });
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(&mut rng),
            Err(_) => {
                let free: Vec<usize> = (0..candidates.len()).filter(|&j| !taken[j]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        picked.push(candidates[next]);
        taken[next] = true;
        dist[next] = 0.0;
    }
    picked
}

/// Stacks up to `limit` descriptors drawn uniformly without replacement
/// from `sets`, keeping their original order.
pub fn gather_samples(sets: &[&DescriptorSet], limit: usize, seed: u64) -> Result<Array2<f32>> {
    let rows: Vec<(usize, usize)> = sets
        .iter()
        .enumerate()
        .flat_map(|(s, set)| (0..set.len()).map(move |m| (s, m)))
        .collect();
    let dim = match sets.iter().find(|s| !s.is_empty()) {
        Some(s) => s.dim(),
        None => return Err(Error::EmptySet("no training descriptors".into())),
    };
    let mut chosen: Vec<usize> = if rows.len() > limit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, rows.len(), limit).into_vec()
    } else {
        (0..rows.len()).collect()
    };
    chosen.sort_unstable();
    let mut out = Array2::<f32>::zeros((chosen.len(), dim));
    for (r, &c) in chosen.iter().enumerate() {
        let (s, m) = rows[c];
        if sets[s].dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "descriptor dimensions differ: {} vs {dim}",
                sets[s].dim()
            )));
        }
        out.row_mut(r).assign(&sets[s].descriptor(m));
    }
    Ok(out)
}
