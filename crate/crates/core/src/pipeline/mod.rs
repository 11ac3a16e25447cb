//! End-to-end orchestration: configuration, dataset loading, image
//! encoding and the split-based experiment harness.

mod config;
mod dataset;
mod experiment;
pub mod synthetic;

use crate::codebook::Dictionary;
use crate::descriptors::DescriptorSet;
use crate::error::Result;
use crate::pooling::{build_pyramid, CodedImage, PyramidFeature};
use crate::solver::CodingStrategy;

use ndarray::Array2;

pub use config::PipelineConfig;
pub use dataset::{is_image_path, load_dataset, load_descriptor_inputs, Dataset, ImageEntry};
pub use experiment::{
    confusion_matrix, run_experiment, run_experiment_on, sample_std, ExperimentReport, SplitResult,
    StageTimings,
};

/// Codes of every descriptor of one image.
#[derive(Debug, Clone)]
pub struct EncodedImage {
    pub feature: PyramidFeature,
    pub codes: Array2<f64>,
    /// Number of inner solves that hit their sweep budget.
    pub nonconverged: usize,
}

/// Codes each descriptor with `strategy` and pools the result.
pub fn encode_with(
    strategy: &dyn CodingStrategy,
    descriptors: &DescriptorSet,
    dict: &Dictionary,
) -> Result<EncodedImage> {
    if descriptors.dim() != dict.dim() && !descriptors.is_empty() {
        return Err(crate::Error::InvalidArgument(format!(
            "descriptor dimension {} does not match dictionary dimension {}",
            descriptors.dim(),
            dict.dim()
        )));
    }
    let p = dict.size();
    let mut codes = Array2::<f64>::zeros((descriptors.len(), p));
    let mut nonconverged = 0;
    for m in 0..descriptors.len() {
        let code = strategy.encode(&descriptors.descriptor_f64(m), dict)?;
        if !code.converged {
            nonconverged += 1;
        }
        codes
            .row_mut(m)
            .iter_mut()
            .zip(&code.alpha)
            .for_each(|(c, &a)| *c = a);
    }
    let ci = CodedImage {
        codes,
        locations: descriptors.locations().to_vec(),
        image_size: descriptors.image_size(),
    };
    let feature = build_pyramid(&ci)?;
    Ok(EncodedImage {
        feature,
        codes: ci.codes,
        nonconverged,
    })
}

/// Mode-selected coding followed by pyramid pooling.
pub fn encode_image(
    descriptors: &DescriptorSet,
    dict: &Dictionary,
    cfg: &PipelineConfig,
) -> Result<PyramidFeature> {
    let strategy = cfg.coding_strategy()?;
    encode_with(strategy.as_ref(), descriptors, dict).map(|e| e.feature)
}
