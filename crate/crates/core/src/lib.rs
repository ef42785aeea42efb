//! Instance retrieval over convolutional feature maps (CFMs).
//!
//! The crate covers the full offline/online path:
//!
//! * [`tensor`] and [`manifest`]: the `CFM1` tensor format and corpus manifests.
//! * [`aggregate`]: global descriptors (sum-pooling, regional max aggregation)
//!   and PCA-whitening.
//! * [`regions`]: per-image base regions from feature-map pooling (FMP) or
//!   overlapped spatial pyramid pooling (OSPP).
//! * [`qam`]: query-adaptive matching, a small quadratic program that softly
//!   merges base regions to best match a query.
//! * [`pipeline`]: descriptor index, initial search, reranking and query
//!   expansion.
//! * [`eval`]: Oxford-style average precision and a synthetic corpus generator.
//!
//! Data-parallel loops go through [`Exec`]; with the `parallel` feature
//! disabled every loop runs sequentially.

pub mod aggregate;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod exec;
pub mod manifest;
pub mod pipeline;
pub mod qam;
pub mod regions;
pub mod tensor;

mod binio;
mod vecmath;

pub use descriptor::GlobalDescriptor;
pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::CfmTensor;
