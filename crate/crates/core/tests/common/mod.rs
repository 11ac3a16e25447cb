//! Fixtures and independent checks shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nnsc::classifier::LabeledFeatures;
use nnsc::codebook::Dictionary;
use nnsc::pipeline::synthetic::{self, SyntheticSpec};
use nnsc::pipeline::{run_experiment_on, Dataset, ImageEntry, PipelineConfig};
use nnsc::pooling::CodedImage;
use nnsc::solver::{brute_force_oracle, nn_weighted_l1_solve, objective, SolverConfig, WeightVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian columns scaled to unit norm.
pub fn random_dictionary(rng: &mut ChaCha8Rng, l: usize, p: usize) -> Dictionary {
    let n = Normal::new(0.0, 1.0).unwrap();
    Dictionary::normalized(Array2::from_shape_fn((l, p), |_| n.sample(rng))).unwrap()
}

pub fn as_matrix(dict: &Dictionary) -> Array2<f64> {
    dict.to_array()
}

/// Worst KKT violation of the nonnegative weighted problem, from `Dᵀ(Dα − x)`
/// computed by dense matrix products rather than the library's residual loop.
pub fn independent_kkt(x: &[f64], dict: &Dictionary, alpha: &[f64], w: &WeightVector, lambda: f64) -> f64 {
    let d = as_matrix(dict);
    let a = Array1::from(alpha.to_vec());
    let xv = Array1::from(x.to_vec());
    let g = 2.0 * d.t().dot(&(d.dot(&a) - &xv));
    let mut worst = 0.0f64;
    for k in 0..alpha.len() {
        let s = g[k] + lambda * w.get(k);
        let v = if alpha[k] > 0.0 { s.abs() } else { (-s).max(0.0) };
        assert!(alpha[k] >= 0.0, "negative coefficient {}", alpha[k]);
        worst = worst.max(v);
    }
    worst
}

pub struct OracleInstance {
    pub x: Vec<f64>,
    pub dict: Dictionary,
    pub w: WeightVector,
    pub lambda: f64,
}

/// `L ∈ [5,10]`, `p ∈ [6,10]`, `λ ∈ {0.1, 0.3}`, weights mixing 0 and 1.
pub fn oracle_instance(seed: u64) -> OracleInstance {
    let mut r = rng(1000 + seed);
    let l = r.random_range(5..=10);
    let p = r.random_range(6..=10);
    let lambda = if r.random_bool(0.5) { 0.1 } else { 0.3 };
    let dict = random_dictionary(&mut r, l, p);
    let mut bits: Vec<bool> = (0..p).map(|_| r.random_bool(0.7)).collect();
    let zero = r.random_range(0..p);
    let one = (zero + 1 + r.random_range(0..p - 1)) % p;
    bits[zero] = false;
    bits[one] = true;
    let n = Normal::new(0.0, 1.0).unwrap();
    let x = (0..l).map(|_| n.sample(&mut r)).collect();
    OracleInstance {
        x,
        dict,
        w: WeightVector::from_bits(bits),
        lambda,
    }
}

pub struct OracleOutcome {
    pub gap: f64,
    pub kkt: f64,
    pub independent_kkt: f64,
    pub converged: bool,
}

pub fn run_oracle_instance(seed: u64) -> OracleOutcome {
    let inst = oracle_instance(seed);
    let cfg = SolverConfig {
        lambda: inst.lambda,
        ..SolverConfig::default()
    };
    let code = nn_weighted_l1_solve(&inst.x, &inst.dict, &inst.w, &cfg).unwrap();
    let best = brute_force_oracle(&inst.x, &inst.dict, &inst.w, inst.lambda).unwrap();
    let ours = objective(&inst.x, &inst.dict, &code.alpha, &inst.w, inst.lambda);
    let theirs = objective(&inst.x, &inst.dict, &best.alpha, &inst.w, inst.lambda);
    OracleOutcome {
        gap: (ours - theirs).abs(),
        kkt: code.kkt_residual,
        independent_kkt: independent_kkt(&inst.x, &inst.dict, &code.alpha, &inst.w, inst.lambda),
        converged: code.converged,
    }
}

/// Noiseless `x = Dα*` with a 2-sparse nonnegative `α*`, `L = 16`, `p = 32`.
pub fn sparsity_instance(seed: u64) -> (Vec<f64>, Dictionary) {
    let mut r = rng(5000 + seed);
    let dict = random_dictionary(&mut r, 16, 32);
    let picks = rand::seq::index::sample(&mut r, 32, 2);
    let mut x = vec![0.0; 16];
    for k in picks.iter() {
        let c: f64 = r.random_range(0.5..1.5);
        for (xi, di) in x.iter_mut().zip(dict.atom(k)) {
            *xi += c * di;
        }
    }
    (x, dict)
}

/// Four unit codes at the quadrant centres of a 32×32 image with `p = 4`.
pub fn quadrant_image() -> CodedImage {
    CodedImage {
        codes: Array2::eye(4),
        locations: vec![[8.0, 8.0], [24.0, 8.0], [8.0, 24.0], [24.0, 24.0]],
        image_size: (32, 32),
    }
}

/// Hand-enumerated expected feature for [`quadrant_image`]. Level 0 holds
/// all four atoms; each level-1 quadrant and the level-2 cells (1,1), (1,3),
/// (3,1), (3,3) hold one atom each.
pub fn quadrant_oracle() -> Vec<f64> {
    let ones = [0, 1, 2, 3, 4, 9, 14, 19, 40, 49, 74, 83];
    let mut v = vec![0.0; 84];
    let value = 1.0 / 12f64.sqrt();
    for i in ones {
        v[i] = value;
    }
    v
}

/// Three spherical Gaussians (σ = 0.05) with 100 points each, shuffled.
pub fn three_gaussians(seed: u64) -> (Array2<f32>, Vec<[f64; 2]>) {
    let centers = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut r = rng(seed);
    let n = Normal::new(0.0, 0.05).unwrap();
    let mut pts: Vec<[f32; 2]> = Vec::new();
    for c in &centers {
        for _ in 0..100 {
            pts.push([(c[0] + n.sample(&mut r)) as f32, (c[1] + n.sample(&mut r)) as f32]);
        }
    }
    use rand::seq::SliceRandom;
    pts.shuffle(&mut r);
    let flat: Vec<f32> = pts.iter().flatten().copied().collect();
    (Array2::from_shape_vec((300, 2), flat).unwrap(), centers)
}

/// Two classes of two points in the plane; see [`SVM_TOY_OBJECTIVE`].
pub fn svm_toy() -> LabeledFeatures {
    let x = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0]).unwrap();
    LabeledFeatures::new(x, vec![0, 0, 1, 1])
        .unwrap()
        .with_class_names(vec!["A".into(), "B".into()])
}

/// Optimum of `½(‖w‖² + b²) + C Σ max(0, 1 − y(wᵀx + b))²` for [`svm_toy`]
/// with `C = 10`, solved as a smooth QP outside this crate.
pub const SVM_TOY_OBJECTIVE: f64 = 0.9642687534111608;

pub fn synthetic_dataset() -> Dataset {
    let data = synthetic::generate(&SyntheticSpec::default()).unwrap();
    Dataset {
        class_names: data.class_names,
        images: data
            .images
            .into_iter()
            .enumerate()
            .map(|(i, (label, descriptors))| ImageEntry {
                path: format!("synthetic/{i}").into(),
                label,
                descriptors,
            })
            .collect(),
    }
}

pub fn synthetic_config(mode: &str) -> PipelineConfig {
    PipelineConfig {
        mode: mode.into(),
        p: 16,
        train_per_class: 20,
        splits: 5,
        seed: 1,
        ..PipelineConfig::default()
    }
}

/// Mean accuracy of the 20/20 protocol on the shipped synthetic dataset
/// (40 images per class).
pub fn synthetic_mean(mode: &str) -> f64 {
    run_experiment_on(&synthetic_config(mode), &synthetic_dataset()).unwrap().mean
}
