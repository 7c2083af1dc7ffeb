//! Self-training toolkit for human pose estimators.
//!
//! Candidate poses produced by an external estimator are described by
//! pose-representation (PR) features, screened by a correct-pose-selection
//! SVM and, for poses unlike any annotation, recovered by Dirichlet-process
//! clustering with a Bayes-factor outlier test. The accepted poses are fed
//! back as training annotations.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for common use.

pub mod candidates;
pub mod dpmm;
pub mod error;
pub mod features;
pub mod hog;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod raster;
pub mod scalar;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Skeleton64 = model::Skeleton<f64>;
pub type Skeleton32 = model::Skeleton<f32>;
pub type Point64 = model::Point<f64>;
pub type Point32 = model::Point<f32>;
pub type CandidatePose64 = model::CandidatePose<f64>;
pub type CandidatePose32 = model::CandidatePose<f32>;
pub type PrFeature64 = features::PrFeature<f64>;
pub type PrFeature32 = features::PrFeature<f32>;
pub type SvmModel64 = svm::SvmModel<f64>;
pub type SvmModel32 = svm::SvmModel<f32>;
pub type NigBase64 = dpmm::NigBase<f64>;
pub type NigBase32 = dpmm::NigBase<f32>;
pub type Heatmap64 = candidates::Heatmap<f64>;
pub type Heatmap32 = candidates::Heatmap<f32>;
pub type GrayRaster64 = raster::GrayRaster<f64>;
pub type GrayRaster32 = raster::GrayRaster<f32>;
