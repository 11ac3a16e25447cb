//! Non-convex, non-negative sparse coding for image classification.
//!
//! The pipeline runs dense gradient-histogram descriptors through a learned
//! codebook, encodes each descriptor with a truncated nonnegative ℓ1 solver
//! driven by iterative support detection, max-pools the codes over a
//! three-level spatial pyramid and classifies the pooled vectors with a
//! one-vs-rest linear SVM.
//!
//! Coding strategies and codebook trainers are trait objects looked up by
//! name in a [`Registry`], so the CLI and experiment harness select them at
//! runtime.

pub mod classifier;
pub mod codebook;
pub mod descriptors;
mod error;
pub mod format;
pub(crate) mod linalg;
pub mod pipeline;
pub mod pooling;
mod registry;
pub mod solver;

pub use classifier::{svm_predict, svm_train, LabeledFeatures, LinearModel, SvmParams};
pub use codebook::{
    kmeans_train, sc_dictionary_train, trainer_registry, CodebookTrainer, Dictionary, TrainLog,
};
pub use descriptors::{extract_dense, DescriptorSet, GrayImage};
pub use error::{Error, Result};
pub use pipeline::{encode_image, run_experiment, ExperimentReport, PipelineConfig};
pub use pooling::{build_pyramid, max_pool, CodedImage, PyramidFeature};
pub use registry::Registry;
pub use solver::{
    brute_force_oracle, coding_registry, isd_solve, nn_weighted_l1_solve, support_detect,
    CodingStrategy, SolverConfig, SparseCode, SupportSet, WeightVector,
};
