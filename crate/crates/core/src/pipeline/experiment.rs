//! Repeated random train/test splits reporting mean ± std accuracy.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{svm_predict, svm_train_traced, LabeledFeatures};
use crate::codebook::{gather_samples, Dictionary};
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};

use super::dataset::{load_dataset, Dataset};
use super::{encode_with, PipelineConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub load: Duration,
    pub codebook: Duration,
    pub encode: Duration,
    pub classify: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Array2<u64>,
    pub train_size: usize,
    pub test_size: usize,
    /// Inner solves that exhausted their sweep budget.
    pub nonconverged: usize,
    pub codebook_objective: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: PipelineConfig,
    pub class_names: Vec<String>,
    pub splits: Vec<SplitResult>,
    pub mean: f64,
    pub std: f64,
    /// Wall-clock time per stage summed over splits; not part of the rendered report.
    pub timings: StageTimings,
}

/// Sample standard deviation (`n − 1` denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], classes: usize) -> Array2<u64> {
    let mut m = Array2::<u64>::zeros((classes, classes));
    for (&t, &p) in truth.iter().zip(predicted) {
        m[(t, p)] += 1;
    }
    m
}

impl ExperimentReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.splits.iter().map(|s| s.accuracy).collect()
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: mode={} method={} p={} lambda={} beta={}",
            self.config.mode, self.config.method, self.config.p, self.config.lambda, self.config.beta);
        let _ = writeln!(s, "{:<8}{:>10}{:>8}{:>8}{:>14}", "split", "accuracy", "train", "test", "nonconverged");
        for (i, r) in self.splits.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<8}{:>10.4}{:>8}{:>8}{:>14}",
                i + 1,
                r.accuracy,
                r.train_size,
                r.test_size,
                r.nonconverged
            );
        }
        let _ = writeln!(s, "{:<8}{:>10.4}", "mean", self.mean);
        let _ = writeln!(s, "{:<8}{:>10.4}", "std", self.std);
        let _ = writeln!(s, "accuracy: {:.2} ± {:.2} %", 100.0 * self.mean, 100.0 * self.std);
        if let Some(last) = self.splits.last() {
            let _ = writeln!(s, "confusion (split {}, rows=true, cols=predicted):", self.splits.len());
            let width = self.class_names.iter().map(String::len).max().unwrap_or(0).max(6);
            for (i, name) in self.class_names.iter().enumerate() {
                let _ = write!(s, "  {name:<width$}");
                for j in 0..self.class_names.len() {
                    let _ = write!(s, "{:>6}", last.confusion[(i, j)]);
                }
                let _ = writeln!(s);
            }
        }
        s
    }

    /// Machine-readable `key=value` summary.
    pub fn render_kv(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.config.to_kv());
        let _ = writeln!(s, "classes={}", self.class_names.join(","));
        for (i, r) in self.splits.iter().enumerate() {
            let n = i + 1;
            let _ = writeln!(s, "split.{n}.accuracy={}", r.accuracy);
            let _ = writeln!(s, "split.{n}.train_size={}", r.train_size);
            let _ = writeln!(s, "split.{n}.test_size={}", r.test_size);
            let _ = writeln!(s, "split.{n}.nonconverged={}", r.nonconverged);
            let _ = writeln!(s, "split.{n}.codebook_objective={}", r.codebook_objective);
            let rows: Vec<String> = r
                .confusion
                .outer_iter()
                .map(|row| row.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
                .collect();
            let _ = writeln!(s, "split.{n}.confusion={}", rows.join(";"));
        }
        let _ = writeln!(s, "accuracy_mean={}", self.mean);
        let _ = writeln!(s, "accuracy_std={}", self.std);
        s
    }

    /// Table followed by the `key=value` block; identical for identical inputs.
    pub fn render(&self) -> String {
        format!("{}\n[summary]\n{}", self.render_table(), self.render_kv())
    }

    pub fn render_timings(&self) -> String {
        let t = &self.timings;
        format!(
            "timing.load_s={:.3}\ntiming.codebook_s={:.3}\ntiming.encode_s={:.3}\ntiming.classify_s={:.3}\n",
            t.load.as_secs_f64(),
            t.codebook.as_secs_f64(),
            t.encode.as_secs_f64(),
            t.classify.as_secs_f64()
        )
    }
}

pub fn run_experiment(cfg: &PipelineConfig, dataset_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let dataset = load_dataset(dataset_dir, cfg.patch, cfg.step)?;
    let load = start.elapsed();
    let mut report = run_experiment_on(cfg, &dataset)?;
    report.timings.load = load;
    Ok(report)
}

struct Partition {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn partition(ds: &Dataset, cfg: &PipelineConfig, rng: &mut ChaCha8Rng) -> Result<Partition> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, name) in ds.class_names.iter().enumerate() {
        let mut idx = ds.class_indices(label as u32);
        if idx.len() < cfg.train_per_class {
            return Err(Error::InvalidDataset(format!(
                "class '{name}' has {} images, fewer than train_per_class = {}",
                idx.len(),
                cfg.train_per_class
            )));
        }
        idx.shuffle(rng);
        let (tr, te) = idx.split_at(cfg.train_per_class);
        train.extend_from_slice(tr);
        if cfg.test_on_train {
            test.extend_from_slice(tr);
        } else {
            test.extend_from_slice(te);
        }
    }
    if test.is_empty() {
        return Err(Error::InvalidDataset("no test images left after the split".into()));
    }
    Ok(Partition { train, test })
}

fn train_codebook(
    ds: &Dataset,
    train: &[usize],
    cfg: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Dictionary, f64)> {
    let sets: Vec<&DescriptorSet> = train.iter().map(|&i| &ds.images[i].descriptors).collect();
    let samples = gather_samples(&sets, cfg.sample, rng.random())?;
    let trainer = cfg.codebook_trainer()?;
    let (dict, log) = trainer.train(samples.view(), cfg.p, rng.random())?;
    Ok((dict, log.objective.last().copied().unwrap_or(0.0)))
}

/// Runs every split on an already loaded dataset.
pub fn run_experiment_on(cfg: &PipelineConfig, ds: &Dataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    if ds.class_names.len() < 2 {
        return Err(Error::InvalidDataset("need at least 2 classes".into()));
    }
    let strategy = cfg.coding_strategy()?;
    let classes = ds.class_names.len();
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split_seeds: Vec<u64> = (0..cfg.splits).map(|_| master.random()).collect();

    let mut timings = StageTimings::default();
    let mut splits = Vec::with_capacity(cfg.splits);
    let mut fixed: Option<(Dictionary, f64)> = None;

    for &split_seed in &split_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
        let part = partition(ds, cfg, &mut rng)?;

        let t = Instant::now();
        let (dict, cb_obj) = match (&fixed, cfg.fixed_codebook) {
            (Some(f), true) => f.clone(),
            _ => {
                let trained = train_codebook(ds, &part.train, cfg, &mut rng)?;
                if cfg.fixed_codebook {
                    fixed = Some(trained.clone());
                }
                trained
            }
        };
        timings.codebook += t.elapsed();

        let t = Instant::now();
        let mut needed: Vec<usize> = part.train.iter().chain(&part.test).copied().collect();
        needed.sort_unstable();
        needed.dedup();
        let encoded = needed
            .par_iter()
            .map(|&i| encode_with(strategy.as_ref(), &ds.images[i].descriptors, &dict).map(|e| (i, e)))
            .collect::<Result<Vec<_>>>()?;
        timings.encode += t.elapsed();
        let nonconverged = encoded.iter().map(|(_, e)| e.nonconverged).sum();
        let lookup = |i: usize| -> &[f64] {
            let pos = needed.binary_search(&i).expect("encoded image");
            encoded[pos].1.feature.values()
        };

        let t = Instant::now();
        let f = dict.size() * crate::pooling::PYRAMID_CELLS;
        let matrix = |idx: &[usize]| {
            let mut m = Array2::<f64>::zeros((idx.len(), f));
            for (r, &i) in idx.iter().enumerate() {
                m.row_mut(r).iter_mut().zip(lookup(i)).for_each(|(a, &b)| *a = b);
            }
            m
        };
        let train_data = LabeledFeatures::new(
            matrix(&part.train),
            part.train.iter().map(|&i| ds.images[i].label).collect(),
        )?
        .with_class_names(ds.class_names.clone());
        let svm = svm_train_traced(&train_data, &cfg.svm_params(rng.random()))?;
        let test_x = matrix(&part.test);
        let predicted: Vec<usize> = svm_predict(&svm.model, test_x.view())?
            .into_iter()
            .map(|c| svm.class_ids[c] as usize)
            .collect();
        let truth: Vec<usize> = part.test.iter().map(|&i| ds.images[i].label as usize).collect();
        timings.classify += t.elapsed();

        let correct = truth.iter().zip(&predicted).filter(|(a, b)| a == b).count();
        splits.push(SplitResult {
            accuracy: correct as f64 / truth.len() as f64,
            confusion: confusion_matrix(&truth, &predicted, classes),
            train_size: part.train.len(),
            test_size: part.test.len(),
            nonconverged,
            codebook_objective: cb_obj,
        });
    }

    let acc: Vec<f64> = splits.iter().map(|s| s.accuracy).collect();
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    let std = sample_std(&acc);
    Ok(ExperimentReport {
        config: cfg.clone(),
        class_names: ds.class_names.clone(),
        splits,
        mean,
        std,
        timings,
    })
}
