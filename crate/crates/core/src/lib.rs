//! Auditing meta-analyses.
//!
//! Fisher combining of p-values and DerSimonian–Laird pooling, how far one
//! extreme study moves either of them, p-value-plot diagnostics for mixed
//! evidence, analysis search-space counts, and a seeded simulator of
//! p-hacked and publication-biased literatures.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to one precision. File formats and the simulator use `f64`.

pub mod cli;
pub mod combine;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod numerics;
pub mod robustness;
pub mod scalar;
pub mod searchspace;
pub mod simulate;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FitLine64 = numerics::FitLine<f64>;
pub type FitLine32 = numerics::FitLine<f32>;
pub type BaseStudy64 = study::BaseStudy<f64>;
pub type BaseStudy32 = study::BaseStudy<f32>;
pub type MetaDataset64 = study::MetaDataset<f64>;
pub type MetaDataset32 = study::MetaDataset<f32>;
pub type FisherResult64 = combine::FisherResult<f64>;
pub type FisherResult32 = combine::FisherResult<f32>;
pub type PooledResult64 = combine::PooledResult<f64>;
pub type PooledResult32 = combine::PooledResult<f32>;
pub type PValuePlot64 = diagnostics::PValuePlot<f64>;
pub type PValuePlot32 = diagnostics::PValuePlot<f32>;
pub type DiagnosticReport64 = diagnostics::DiagnosticReport<f64>;
pub type DiagnosticReport32 = diagnostics::DiagnosticReport<f32>;
pub type InfluenceRecord64 = robustness::InfluenceRecord<f64>;
pub type InfluenceRecord32 = robustness::InfluenceRecord<f32>;
pub type CombinedResult64 = robustness::CombinedResult<f64>;
pub type CombinedResult32 = robustness::CombinedResult<f32>;
