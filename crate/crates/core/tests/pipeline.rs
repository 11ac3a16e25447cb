mod common;

use ndarray::Array2;

use nnsc::codebook::trainer_registry;
use nnsc::descriptors::DescriptorSet;
use nnsc::pipeline::synthetic::{self, SyntheticSpec};
use nnsc::pipeline::{encode_image, encode_with, run_experiment, run_experiment_on, sample_std, PipelineConfig};
use nnsc::solver::{brute_force_oracle, coding_registry, WeightVector};
use nnsc::Error;

#[test]
fn empty_descriptor_set_encodes_to_zero() {
    let mut r = common::rng(1);
    let dict = common::random_dictionary(&mut r, 16, 8);
    let f = encode_image(&DescriptorSet::empty(16, (32, 32)), &dict, &PipelineConfig::default()).unwrap();
    assert_eq!(f.values(), vec![0.0; 21 * 8].as_slice());
}

#[test]
fn atom_descriptor_codes_onto_that_atom() {
    let mut r = common::rng(2);
    let dict = common::random_dictionary(&mut r, 16, 8);
    let x: Vec<f32> = dict.atom(3).iter().map(|&v| v as f32).collect();
    let set = DescriptorSet::new(Array2::from_shape_vec((1, 16), x).unwrap(), vec![[4.0, 4.0]], (8, 8)).unwrap();
    let cfg = PipelineConfig {
        lambda: 0.01,
        ..PipelineConfig::default()
    };
    let strategy = cfg.coding_strategy().unwrap();
    let e = encode_with(strategy.as_ref(), &set, &dict).unwrap();
    let code = e.codes.row(0);
    assert!(code[3] >= 0.9, "{code}");
    for (k, &a) in code.iter().enumerate() {
        if k != 3 {
            assert!(a <= 0.05, "{code}");
        }
    }
    assert_eq!(encode_image(&set, &dict, &cfg).unwrap(), e.feature);
}

#[test]
fn nnsc_codes_are_no_denser_than_sc_codes() {
    let data = synthetic::generate(&SyntheticSpec {
        images_per_class: 34,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let images: Vec<&DescriptorSet> = data.images.iter().take(100).map(|(_, s)| s).collect();
    assert_eq!(images.len(), 100);
    let samples = nnsc::codebook::gather_samples(&images, usize::MAX, 0).unwrap();
    let trainer = trainer_registry().create("sc", &PipelineConfig::default().trainer_config()).unwrap();
    let (dict, _) = trainer.train(samples.view(), 16, 3).unwrap();

    let l0 = |mode: &str, set: &DescriptorSet| {
        let cfg = PipelineConfig {
            mode: mode.into(),
            ..PipelineConfig::default()
        };
        let s = cfg.coding_strategy().unwrap();
        let e = encode_with(s.as_ref(), set, &dict).unwrap();
        e.codes.iter().filter(|a| a.abs() > 1e-6).count()
    };
    let wins = images.iter().filter(|s| l0("nnsc", s) <= l0("sc", s)).count();
    assert!(wins >= 90, "{wins}/100");
}

#[test]
fn generator_descriptors_are_exact_on_class_atoms() {
    // Each descriptor is a positive multiple of one atom owned by its class,
    // so the exact nonnegative code is 1-sparse on that class's block.
    let spec = SyntheticSpec::default();
    let data = synthetic::generate(&spec).unwrap();
    let a = spec.atoms_per_class;
    for (label, set) in data.images.iter().step_by(17).take(6) {
        for m in 0..set.len() {
            let best = brute_force_oracle(&set.descriptor_f64(m), &data.atoms, &WeightVector::ones(data.atoms.size()), 1e-4)
                .unwrap();
            let top = best
                .alpha
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
            assert_eq!(top.0 / a, *label as usize, "{:?}", best.alpha);
        }
    }
}

#[test]
fn experiment_report_is_consistent() {
    let ds = common::synthetic_dataset();
    let cfg = PipelineConfig {
        splits: 3,
        ..common::synthetic_config("nnsc")
    };
    let rep = run_experiment_on(&cfg, &ds).unwrap();
    assert_eq!(rep.splits.len(), 3);
    let acc = rep.accuracies();
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (acc.len() - 1) as f64;
    assert!((rep.mean - mean).abs() <= 1e-12);
    assert!((rep.std - var.sqrt()).abs() <= 1e-12);
    assert_eq!(rep.std, sample_std(&acc));
    for s in &rep.splits {
        assert_eq!(s.confusion.sum() as usize, s.test_size);
        assert_eq!(s.train_size + s.test_size, ds.images.len());
        assert_eq!(s.train_size, 60);
        assert!((0.0..=1.0).contains(&s.accuracy));
        let diag: u64 = (0..3).map(|i| s.confusion[(i, i)]).sum();
        assert!((diag as f64 / s.test_size as f64 - s.accuracy).abs() < 1e-15);
    }
    assert!(rep.mean >= 0.95, "{}", rep.mean);
    let text = rep.render();
    assert!(text.contains(&format!("accuracy_mean={}", rep.mean)));
    assert!(!text.contains("timing"));
}

#[test]
fn train_set_evaluation_is_near_perfect() {
    let cfg = PipelineConfig {
        splits: 1,
        test_on_train: true,
        ..common::synthetic_config("nnsc")
    };
    let rep = run_experiment_on(&cfg, &common::synthetic_dataset()).unwrap();
    assert!(rep.mean >= 0.99, "{}", rep.mean);
    assert_eq!(rep.std, 0.0);
}

#[test]
fn fixed_codebook_reuses_the_first_dictionary() {
    let cfg = PipelineConfig {
        splits: 3,
        fixed_codebook: true,
        ..common::synthetic_config("nsc")
    };
    let rep = run_experiment_on(&cfg, &common::synthetic_dataset()).unwrap();
    let first = rep.splits[0].codebook_objective;
    assert!(rep.splits.iter().all(|s| s.codebook_objective == first));
}

#[test]
fn too_few_images_is_an_invalid_dataset() {
    let cfg = PipelineConfig {
        train_per_class: 41,
        ..common::synthetic_config("nnsc")
    };
    let e = run_experiment_on(&cfg, &common::synthetic_dataset()).unwrap_err();
    assert!(matches!(e, Error::InvalidDataset(_)), "{e}");
}

#[test]
fn experiment_from_directory_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic::generate(&SyntheticSpec::default()).unwrap();
    synthetic::write_dataset(dir.path(), &data).unwrap();
    let cfg = PipelineConfig {
        splits: 2,
        ..common::synthetic_config("sc")
    };
    let from_disk = run_experiment(&cfg, dir.path()).unwrap();
    let in_memory = run_experiment_on(&cfg, &common::synthetic_dataset()).unwrap();
    assert_eq!(from_disk.render(), in_memory.render());
}

#[test]
fn unreadable_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let e = run_experiment(&PipelineConfig::default(), &missing).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("nowhere"));
}

#[test]
fn registry_lists_all_modes() {
    assert_eq!(coding_registry().names(), vec!["nnsc", "nsc", "sc"]);
}
