//! Stacked multichannel autoencoders for closing the gap between synthetic
//! and real feature distributions, plus the supporting pieces needed to run
//! the handwritten-digit and sketch-matching experiments: HOG features,
//! synthetic digit generation and evaluation metrics.

pub mod ae;
pub mod error;
pub mod eval;
pub mod hog;
pub mod optim;
pub mod smcae;
pub mod synthgen;

pub use ae::{ChannelParams, FeatureMatrix, SparsityConfig};
pub use error::{Error, Result};
pub use hog::{GrayImage, HogConfig, MinMaxScaler};
pub use optim::LbfgsOptions;
pub use smcae::{SmcaeConfig, SmcaeLayer, SmcaeModel, Variant};
