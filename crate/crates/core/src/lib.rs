//! Micro-FTIR hyperspectral preprocessing, dual-path CNN training,
//! explainability and evaluation.

pub mod autonn;
pub mod carenet;
pub mod evaluate;
pub mod explain;
pub mod labels;
pub mod preprocess;
pub mod spectra;
