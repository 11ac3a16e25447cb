use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::descriptors::DescriptorSet;
use crate::error::Result;

use super::{check_training_args, seed_rows, to_f64, CodebookTrainer, Dictionary, TrainLog};

pub const DEFAULT_KMEANS_MAX_ITER: usize = 100;

/// Raw Lloyd output before the centers are exported as unit-norm atoms.
#[derive(Debug, Clone)]
pub struct LloydFit {
    /// `p×L`, one center per row.
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    /// `Σ_m min_k ‖x_m − c_k‖²` after every assignment step.
    pub log: TrainLog,
}

impl LloydFit {
    /// Scales every center to unit norm. A zero center (a cluster of zero
    /// descriptors) becomes the basis vector `e_(k mod L)`.
    pub fn to_dictionary(&self) -> Dictionary {
        let (p, l) = self.centers.dim();
        let mut atoms = Array2::<f64>::zeros((l, p));
        for k in 0..p {
            let c = self.centers.row(k);
            let n = c.dot(&c).sqrt();
            if n > 1e-12 {
                atoms.column_mut(k).assign(&(&c / n));
            } else {
                atoms[(k % l, k)] = 1.0;
            }
        }
        Dictionary::normalized(atoms).expect("every exported column is nonzero")
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center (lowest index on ties) and its squared distance.
fn assign(x: &Array2<f64>, centers: &Array2<f64>) -> Vec<(usize, f64)> {
    let centers = centers.as_standard_layout();
    let cs: Vec<&[f64]> = (0..centers.nrows())
        .map(|k| centers.row(k).to_slice().expect("standard layout"))
        .collect();
    (0..x.nrows())
        .into_par_iter()
        .map(|m| {
            let xm = x.row(m);
            let xm = xm.as_slice().expect("standard layout");
            let mut best = (0, f64::INFINITY);
            for (k, c) in cs.iter().enumerate() {
                let d = sq_dist(xm, c);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best
        })
        .collect()
}

/// Lloyd alternation seeded with `p` descriptors drawn by D²-weighted sampling. Stops
/// when assignments repeat or after `max_iter` center updates.
pub fn lloyd(samples: ArrayView2<'_, f32>, p: usize, max_iter: usize, seed: u64) -> Result<LloydFit> {
    let (m, _) = samples.dim();
    check_training_args(m, p)?;
    let x = to_f64(samples);
    let all: Vec<usize> = (0..m).collect();
    let init = seed_rows(&x, &all, p, seed);
    let mut centers = x.select(ndarray::Axis(0), &init);

    let mut assigned = assign(&x, &centers);
    let mut log = TrainLog::default();
    log.objective.push(assigned.iter().map(|a| a.1).sum());

    for _ in 0..max_iter {
        update_centers(&x, &mut centers, &assigned);
        let next = assign(&x, &centers);
        log.iterations += 1;
        log.objective.push(next.iter().map(|a| a.1).sum());
        let unchanged = next.iter().zip(&assigned).all(|(a, b)| a.0 == b.0);
        assigned = next;
        if unchanged {
            log.converged = true;
            break;
        }
    }
    Ok(LloydFit {
        centers,
        assignments: assigned.into_iter().map(|a| a.0).collect(),
        log,
    })
}

/// Means of the current clusters; each empty cluster is re-seeded to the
/// point farthest from its (updated) center, lowest index on ties.
fn update_centers(x: &Array2<f64>, centers: &mut Array2<f64>, assigned: &[(usize, f64)]) {
    let (p, l) = centers.dim();
    let mut sums = Array2::<f64>::zeros((p, l));
    let mut counts = vec![0usize; p];
    for (m, &(k, _)) in assigned.iter().enumerate() {
        sums.row_mut(k).scaled_add(1.0, &x.row(m));
        counts[k] += 1;
    }
    for k in 0..p {
        if counts[k] > 0 {
            let mean = &sums.row(k) / counts[k] as f64;
            centers.row_mut(k).assign(&mean);
        }
    }
    if counts.iter().all(|&c| c > 0) {
        return;
    }
    let mut dist: Vec<f64> = assigned
        .iter()
        .enumerate()
        .map(|(m, &(k, _))| {
            let diff = &x.row(m) - &centers.row(k);
            diff.dot(&diff)
        })
        .collect();
    for k in (0..p).filter(|&k| counts[k] == 0) {
        let (far, _) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (m, &d)| if d > best.1 { (m, d) } else { best });
        centers.row_mut(k).assign(&x.row(far));
        dist[far] = 0.0;
    }
}

/// K-means trainer exporting unit-norm centers.
#[derive(Debug, Clone, Copy)]
pub struct KMeansTrainer {
    pub max_iter: usize,
}

impl CodebookTrainer for KMeansTrainer {
    fn name(&self) -> &'static str {
        super::METHOD_KMEANS
    }

    fn train(&self, samples: ArrayView2<'_, f32>, p: usize, seed: u64) -> Result<(Dictionary, TrainLog)> {
        let fit = lloyd(samples, p, self.max_iter, seed)?;
        Ok((fit.to_dictionary(), fit.log))
    }
}

pub fn kmeans_train(
    set: &DescriptorSet,
    p: usize,
    max_iter: usize,
    seed: u64,
) -> Result<(Dictionary, TrainLog)> {
    KMeansTrainer { max_iter }.train(set.data().view(), p, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use ndarray::array;

    #[test]
    fn separated_duplicates() {
        let x = array![[0.0f32, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        for seed in 0..10 {
            let fit = lloyd(x.view(), 2, 100, seed).unwrap();
            let mut centers: Vec<Vec<f64>> = fit.centers.outer_iter().map(|r| r.to_vec()).collect();
            centers.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            assert_eq!(centers, vec![vec![0.0, 0.0], vec![1.0, 1.0]], "seed {seed}");
            assert_eq!(*fit.log.objective.last().unwrap(), 0.0);
            // the zero center exports as a basis vector
            let d = fit.to_dictionary();
            assert!((d.norm_sq(0) - 1.0).abs() < 1e-12 && (d.norm_sq(1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_center_is_mean() {
        let x = array![[1.0f32, 0.0], [0.0, 2.0], [2.0, 1.0]];
        let fit = lloyd(x.view(), 1, 10, 3).unwrap();
        assert!((fit.centers[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((fit.centers[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(fit.log.converged);
    }

    #[test]
    fn empty_cluster_reseeds_to_farthest_point() {
        let x = array![[0.0f32], [0.0], [0.0], [5.0], [9.0]];
        let mut centers = array![[0.0], [0.0], [100.0]];
        let assigned = vec![(0, 0.0), (0, 0.0), (0, 0.0), (0, 25.0), (0, 81.0)];
        update_centers(&x.mapv(f64::from), &mut centers, &assigned);
        // mean of cluster 0 is 2.8; farthest is 9 for cluster 1, then 5 for cluster 2
        assert!((centers[(0, 0)] - 2.8).abs() < 1e-12);
        assert_eq!(centers[(1, 0)], 9.0);
        assert_eq!(centers[(2, 0)], 0.0);
    }

    #[test]
    fn invalid_sizes() {
        let x = array![[0.0f32, 1.0]];
        assert!(matches!(lloyd(x.view(), 2, 10, 0), Err(Error::InvalidArgument(_))));
        let empty = Array2::<f32>::zeros((0, 2));
        assert!(matches!(lloyd(empty.view(), 1, 10, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn max_iter_zero_only_assigns() {
        let x = array![[0.0f32], [1.0], [4.0]];
        let fit = lloyd(x.view(), 2, 0, 1).unwrap();
        assert_eq!(fit.log.objective.len(), 1);
        assert_eq!(fit.log.iterations, 0);
    }
}
