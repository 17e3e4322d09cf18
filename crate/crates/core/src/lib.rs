//! Operator learning with generalized integral transform networks.
//!
//! Functions sampled on a mesh are encoded on PCA bases, lifted to a
//! `C×K` channel/mode representation, pushed through a stack of GIT layers
//! (change of basis, per-mode channel mixing, inverse change of basis),
//! projected back and decoded.

pub mod cost;
pub mod error;
pub mod gitnet;
pub mod grad;
pub mod io;
pub mod pca;
pub mod pdedata;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use gitnet::{Architecture, GitLayerParams, GitNetParams, PcaNetParams, Variant};
pub use grad::{Differentiable, GitNetGrads, GradTape};
pub use pca::{PcaBasis, PcaOptions};
pub use pdedata::Dataset;
pub use tensor::{Activation, Tensor};
pub use train::{LossKind, TrainConfig};
