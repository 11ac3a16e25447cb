use std::fmt::Write as _;
use std::path::Path;

use crate::classifier::{SvmParams, DEFAULT_EPOCHS, DEFAULT_REG_C};
use crate::codebook::{
    trainer_registry, CodebookTrainer, TrainerConfig, DEFAULT_KMEANS_MAX_ITER,
    DEFAULT_SC_OUTER_ITERS, METHOD_SC,
};
use crate::descriptors::{DEFAULT_PATCH, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::solver::{
    coding_registry, CodingStrategy, SolverConfig, DEFAULT_BETA, DEFAULT_INNER_MAX_ITER,
    DEFAULT_INNER_TOL, DEFAULT_LAMBDA, DEFAULT_OUTER_MAX_ITER, MODE_NNSC, MODE_SC,
};

/// Every tunable of the pipeline. Keys of the `key = value` config file
/// match the field names (dashes and underscores are interchangeable).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: String,
    pub lambda: f64,
    pub beta: f64,
    pub outer_max: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub p: usize,
    pub patch: usize,
    pub step: usize,
    pub method: String,
    pub sample: usize,
    pub kmeans_max_iter: usize,
    pub sc_outer_iters: usize,
    pub train_per_class: usize,
    pub splits: usize,
    pub seed: u64,
    pub reg_c: f64,
    pub epochs: usize,
    /// Train the codebook on the first split only and reuse it.
    pub fixed_codebook: bool,
    /// Evaluate on the training images instead of the held-out ones.
    pub test_on_train: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: MODE_NNSC.to_string(),
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            outer_max: DEFAULT_OUTER_MAX_ITER,
            inner_tol: DEFAULT_INNER_TOL,
            inner_max_iter: DEFAULT_INNER_MAX_ITER,
            p: 1024,
            patch: DEFAULT_PATCH,
            step: DEFAULT_STEP,
            method: METHOD_SC.to_string(),
            sample: 50_000,
            kmeans_max_iter: DEFAULT_KMEANS_MAX_ITER,
            sc_outer_iters: DEFAULT_SC_OUTER_ITERS,
            train_per_class: 100,
            splits: 5,
            seed: 0,
            reg_c: DEFAULT_REG_C,
            epochs: DEFAULT_EPOCHS,
            fixed_codebook: false,
            test_on_train: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("bad value '{value}' for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(Error::InvalidArgument(format!("bad boolean '{other}' for {key}"))),
    }
}

impl PipelineConfig {
    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let norm = key.trim().replace('-', "_");
        match norm.as_str() {
            "mode" => self.mode = value.trim().to_string(),
            "lambda" => self.lambda = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "outer_max" => self.outer_max = parse(key, value)?,
            "inner_tol" => self.inner_tol = parse(key, value)?,
            "inner_max_iter" => self.inner_max_iter = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "patch" => self.patch = parse(key, value)?,
            "step" => self.step = parse(key, value)?,
            "method" => self.method = value.trim().to_string(),
            "sample" => self.sample = parse(key, value)?,
            "kmeans_max_iter" => self.kmeans_max_iter = parse(key, value)?,
            "sc_outer_iters" => self.sc_outer_iters = parse(key, value)?,
            "train_per_class" => self.train_per_class = parse(key, value)?,
            "splits" => self.splits = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "reg_c" => self.reg_c = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "fixed_codebook" => self.fixed_codebook = parse_bool(key, value)?,
            "test_on_train" => self.test_on_train = parse_bool(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key=value", n + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_kv_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_kv_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !coding_registry().contains(&self.mode) {
            return Err(Error::InvalidArgument(format!("unknown mode '{}'", self.mode)));
        }
        if !trainer_registry().contains(&self.method) {
            return Err(Error::InvalidArgument(format!(
                "unknown codebook method '{}'",
                self.method
            )));
        }
        self.solver_config().validate()?;
        if self.p == 0 || self.sample == 0 {
            return Err(Error::InvalidArgument("p and sample must be >= 1".into()));
        }
        if self.splits == 0 {
            return Err(Error::InvalidArgument("splits must be >= 1".into()));
        }
        if self.train_per_class == 0 {
            return Err(Error::InvalidArgument("train_per_class must be >= 1".into()));
        }
        if !(self.reg_c > 0.0) {
            return Err(Error::InvalidArgument("reg_c must be > 0".into()));
        }
        if self.patch < 8 || self.step == 0 {
            return Err(Error::InvalidArgument("patch must be >= 8 and step >= 1".into()));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            beta: self.beta,
            inner_tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter,
            outer_max_iter: self.outer_max,
            nonnegative: self.mode != MODE_SC,
        }
    }

    pub fn coding_strategy(&self) -> Result<Box<dyn CodingStrategy>> {
        coding_registry().create(&self.mode, &self.solver_config())
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            kmeans_max_iter: self.kmeans_max_iter,
            lambda: self.lambda,
            sc_outer_iters: self.sc_outer_iters,
            solver: self.solver_config(),
        }
    }

    pub fn codebook_trainer(&self) -> Result<Box<dyn CodebookTrainer>> {
        trainer_registry().create(&self.method, &self.trainer_config())
    }

    pub fn svm_params(&self, seed: u64) -> SvmParams {
        SvmParams {
            reg_c: self.reg_c,
            epochs: self.epochs,
            seed,
        }
    }

    /// `key=value` lines in a fixed order; parses back with [`Self::apply_kv_text`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode={}", self.mode);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "outer_max={}", self.outer_max);
        let _ = writeln!(s, "inner_tol={}", self.inner_tol);
        let _ = writeln!(s, "inner_max_iter={}", self.inner_max_iter);
        let _ = writeln!(s, "p={}", self.p);
        let _ = writeln!(s, "patch={}", self.patch);
        let _ = writeln!(s, "step={}", self.step);
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "sample={}", self.sample);
        let _ = writeln!(s, "kmeans_max_iter={}", self.kmeans_max_iter);
        let _ = writeln!(s, "sc_outer_iters={}", self.sc_outer_iters);
        let _ = writeln!(s, "train_per_class={}", self.train_per_class);
        let _ = writeln!(s, "splits={}", self.splits);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "reg_c={}", self.reg_c);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "fixed_codebook={}", self.fixed_codebook);
        let _ = writeln!(s, "test_on_train={}", self.test_on_train);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_kv_text("# comment\nmode = sc\nreg-c=2.5\n\np=64 # inline\nfixed_codebook=yes\n")
            .unwrap();
        assert_eq!(cfg.mode, "sc");
        assert_eq!(cfg.reg_c, 2.5);
        assert_eq!(cfg.p, 64);
        assert!(cfg.fixed_codebook);
        let mut back = PipelineConfig::default();
        back.apply_kv_text(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_keys_and_values() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("lambda", "abc").is_err());
        assert!(cfg.apply_kv_text("lambda").is_err());
        cfg.set("mode", "lasso").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sc_mode_is_signed() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.solver_config().nonnegative);
        cfg.mode = "sc".into();
        assert!(!cfg.solver_config().nonnegative);
        assert_eq!(cfg.coding_strategy().unwrap().name(), "sc");
    }
}
