//! Unsupervised node embeddings for citation graphs: adaptive feature
//! mixing, a multi-head graph-attention encoder and a contrastive
//! mutual-information objective, plus the linear-probe evaluation.
//!
//! Every differentiable op has an explicit forward/backward pair; there is
//! no autodiff tape. [`numerics::GradCheck`] checks each pair against
//! central finite differences.

pub mod adaptive;
pub mod data;
pub mod encoder;
mod error;
pub mod evaluation;
pub mod experiment;
pub mod fixtures;
pub mod gradient_suite;
pub mod infomax;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
