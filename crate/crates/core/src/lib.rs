//! Line detection with standard, randomized and region-segmented randomized
//! Hough transforms, plus Hessian ridge preprocessing, false-peak filters,
//! a sampling probability model and a synthetic benchmark harness.

pub mod filter;
pub mod hough;
pub mod pipeline;
pub mod prob;
pub mod raster;
pub mod region;
pub mod ridge;
pub mod rng;
pub mod synth;

pub use hough::PolarLine;
pub use pipeline::{detect_pipeline, DetectionReport, Method, PipelineConfig};
pub use raster::{BinaryImage, GrayImage};
