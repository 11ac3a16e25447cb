mod common;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use nnsc::codebook::kmeans::lloyd;
use nnsc::codebook::sc::sc_dictionary_train_traced;
use nnsc::codebook::{trainer_registry, Dictionary, TrainerConfig};

/// `Σ_m ‖x_m − Dα_m‖² + λ Σ_m ‖α_m‖₁` via dense products.
fn sc_objective(x: &Array2<f64>, dict: &Dictionary, codes: &Array2<f64>, lambda: f64) -> f64 {
    let recon = codes.dot(&dict.to_array().t());
    let diff = x - &recon;
    diff.iter().map(|v| v * v).sum::<f64>() + lambda * codes.iter().map(|v| v.abs()).sum::<f64>()
}

fn assert_unit_columns(d: &Dictionary, tol: f64) {
    for k in 0..d.size() {
        let n: f64 = d.atom(k).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= tol, "atom {k} norm {n}");
    }
}

#[test]
fn kmeans_recovers_three_gaussians() {
    for seed in 0..5 {
        let (x, truth) = common::three_gaussians(seed);
        let fit = lloyd(x.view(), 3, 100, seed).unwrap();
        for t in &truth {
            let best = fit
                .centers
                .outer_iter()
                .map(|c| ((c[0] - t[0]).powi(2) + (c[1] - t[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 0.1, "seed {seed}: center {t:?} missed by {best}");
        }
        for w in fit.log.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.log.objective);
        }
    }
}

#[test]
fn kmeans_partition_matches_generating_clusters() {
    use rand_distr::{Distribution, Normal};
    let n = Normal::new(0.0, 0.01).unwrap();
    for seed in 0..20 {
        let mut r = common::rng(300 + seed);
        let x = Array2::from_shape_fn((30, 3), |(m, i)| {
            (if m % 3 == i { 1.0 } else { 0.0 }) as f32 + n.sample(&mut r) as f32
        });
        let fit = lloyd(x.view(), 3, 100, seed).unwrap();
        // every generating cluster maps to one distinct center
        let mut mapping = [usize::MAX; 3];
        for (m, &a) in fit.assignments.iter().enumerate() {
            let g = m % 3;
            assert!(mapping[g] == usize::MAX || mapping[g] == a, "seed {seed}: cluster {g} split");
            mapping[g] = a;
        }
        let mut distinct = mapping.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 3, "seed {seed}");
        for g in 0..3 {
            let c = fit.centers.row(mapping[g]);
            let d: f64 = (0..3).map(|i| (c[i] - if i == g { 1.0 } else { 0.0 }).powi(2)).sum::<f64>().sqrt();
            assert!(d <= 0.1, "seed {seed}: {d}");
        }
    }
}

#[test]
fn kmeans_objective_matches_independent_recomputation() {
    let (x, _) = common::three_gaussians(11);
    let fit = lloyd(x.view(), 3, 100, 4).unwrap();
    let xf = x.mapv(f64::from);
    let total: f64 = xf
        .outer_iter()
        .map(|row| {
            fit.centers
                .outer_iter()
                .map(|c| (&row - &c).iter().map(|v| v * v).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    let last = *fit.log.objective.last().unwrap();
    assert!((last - total).abs() <= 1e-9 * total.max(1.0));
}

#[test]
fn kmeans_export_is_unit_norm() {
    let (x, _) = common::three_gaussians(3);
    let reg = trainer_registry();
    let t = reg.create("kmeans", &TrainerConfig::default()).unwrap();
    let (d, _) = t.train(x.view(), 3, 0).unwrap();
    assert_unit_columns(&d, 1e-9);
}

fn sc_samples() -> Array2<f32> {
    let mut r = common::rng(77);
    let d = common::random_dictionary(&mut r, 8, 4).to_array();
    Array2::from_shape_fn((20, 8), |(m, i)| {
        let a = Array1::from_shape_fn(4, |k| if (m + k) % 3 == 0 { 0.5 + 0.1 * k as f64 } else { 0.0 });
        (d.row(i).dot(&a) + 0.05 * ((m * 8 + i) as f64).sin()) as f32
    })
}

#[test]
fn sc_objective_is_monotone_and_recomputable() {
    let x = sc_samples();
    let xf = x.mapv(f64::from);
    let lambda = 0.3;
    let (d, log, its) = sc_dictionary_train_traced(x.view(), 4, lambda, 10, 2).unwrap();
    assert_eq!(log.objective.len(), 11);
    assert_eq!(its.len(), 11);
    for (t, it) in its.iter().enumerate() {
        let obj = sc_objective(&xf, &it.dictionary, &it.codes, lambda);
        assert!((obj - log.objective[t]).abs() <= 1e-9 * obj.max(1.0), "iterate {t}: {obj} vs {}", log.objective[t]);
        assert_unit_columns(&it.dictionary, 1e-9);
    }
    for w in log.objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{:?}", log.objective);
    }
    assert_eq!(its.last().unwrap().dictionary, d);
}

#[test]
fn sc_fits_orthonormal_copies() {
    let l = 6;
    let x = Array2::from_shape_fn((12, l), |(m, i)| if m % l == i { 1.0f32 } else { 0.0 });
    let (d, _, its) = sc_dictionary_train_traced(x.view(), l, 0.01, 10, 1).unwrap();
    let codes = &its.last().unwrap().codes;
    let recon = codes.dot(&d.to_array().t());
    let err: f64 = (&x.mapv(f64::from) - &recon).iter().map(|v| v * v).sum();
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn trainers_are_deterministic_across_pools() {
    let x = sc_samples();
    let reg = trainer_registry();
    for name in reg.names() {
        let t = reg.create(name, &TrainerConfig::default()).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| t.train(x.view(), 4, 9).unwrap());
        let b = four.install(|| t.train(x.view(), 4, 9).unwrap());
        assert_eq!(a.0.to_bytes(), b.0.to_bytes(), "{name}");
        assert_eq!(a.1, b.1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lloyd_never_increases_objective(
        pts in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 3), 4..40),
        p in 1usize..5,
        seed in 0u64..1000,
    ) {
        let m = pts.len();
        let p = p.min(m);
        let x = Array2::from_shape_vec((m, 3), pts.into_iter().flatten().collect()).unwrap();
        let fit = lloyd(x.view(), p, 100, seed).unwrap();
        for w in fit.log.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0));
        }
        prop_assert!(fit.assignments.iter().all(|&a| a < p));
    }
}
