//! Coding modes as interchangeable strategies.

use crate::codebook::Dictionary;
use crate::error::Result;
use crate::registry::Registry;

use super::{isd_solve, solve_weighted_from, SolverConfig, SparseCode, WeightVector};

/// Plain signed ℓ1 coding.
pub const MODE_SC: &str = "sc";
/// Nonnegative ℓ1 coding without support detection.
pub const MODE_NSC: &str = "nsc";
/// Nonnegative truncated ℓ1 coding with iterative support detection.
pub const MODE_NNSC: &str = "nnsc";

/// Encodes one descriptor against a dictionary.
pub trait CodingStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn config(&self) -> &SolverConfig;

    fn encode(&self, x: &[f64], dict: &Dictionary) -> Result<SparseCode>;
}

#[derive(Debug, Clone)]
pub struct PlainL1 {
    cfg: SolverConfig,
}

impl PlainL1 {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl CodingStrategy for PlainL1 {
    fn name(&self) -> &'static str {
        MODE_SC
    }

    fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn encode(&self, x: &[f64], dict: &Dictionary) -> Result<SparseCode> {
        solve_weighted_from(x, dict, &WeightVector::ones(dict.size()), &self.cfg, false, None)
    }
}

#[derive(Debug, Clone)]
pub struct NonNegativeL1 {
    cfg: SolverConfig,
}

impl NonNegativeL1 {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl CodingStrategy for NonNegativeL1 {
    fn name(&self) -> &'static str {
        MODE_NSC
    }

    fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn encode(&self, x: &[f64], dict: &Dictionary) -> Result<SparseCode> {
        solve_weighted_from(x, dict, &WeightVector::ones(dict.size()), &self.cfg, true, None)
    }
}

#[derive(Debug, Clone)]
pub struct IsdNonNegativeL1 {
    cfg: SolverConfig,
}

impl IsdNonNegativeL1 {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        let cfg = SolverConfig {
            nonnegative: true,
            ..cfg
        };
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl CodingStrategy for IsdNonNegativeL1 {
    fn name(&self) -> &'static str {
        MODE_NNSC
    }

    fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn encode(&self, x: &[f64], dict: &Dictionary) -> Result<SparseCode> {
        isd_solve(x, dict, &self.cfg)
    }
}

/// Registry with the three built-in coding modes.
pub fn coding_registry() -> Registry<dyn CodingStrategy, SolverConfig> {
    let mut reg: Registry<dyn CodingStrategy, SolverConfig> = Registry::new("coding mode");
    reg.register(MODE_SC, |cfg| Ok(Box::new(PlainL1::new(*cfg)?)));
    reg.register(MODE_NSC, |cfg| Ok(Box::new(NonNegativeL1::new(*cfg)?)));
    reg.register(MODE_NNSC, |cfg| Ok(Box::new(IsdNonNegativeL1::new(*cfg)?)));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn registry_resolves_all_modes() {
        let reg = coding_registry();
        assert_eq!(reg.names(), vec!["nnsc", "nsc", "sc"]);
        let d = Dictionary::from_columns(Array2::eye(4)).unwrap();
        let x = [1.0, -0.2, 0.0, 0.05];
        let cfg = SolverConfig::default();
        let sc = reg.create("sc", &cfg).unwrap().encode(&x, &d).unwrap();
        let nsc = reg.create("nsc", &cfg).unwrap().encode(&x, &d).unwrap();
        let nnsc = reg.create("nnsc", &cfg).unwrap().encode(&x, &d).unwrap();
        assert!((sc.alpha[1] + 0.05).abs() < 1e-12);
        assert!((nsc.alpha[0] - 0.85).abs() < 1e-12 && nsc.alpha[1] == 0.0);
        assert!((nnsc.alpha[0] - 1.0).abs() < 1e-12);
        assert!(reg.create("lasso", &cfg).is_err());
    }
}
