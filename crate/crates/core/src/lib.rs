//! Hyperdimensional (HD) classification with a privacy toolkit.
//!
//! * [`codebook`], [`hv`]: seeded bipolar base/level vectors and the dot/cosine algebra.
//! * [`encoding`], [`quant`]: scalar and level encodings, encoding quantization,
//!   query obfuscation by quantizing and masking dimensions.
//! * [`model`]: bundling, prediction, online retraining, global dimension pruning.
//! * [`privacy`]: encoder sensitivity, Gaussian-mechanism calibration, noisy model release.
//! * [`reconstruction`]: the linear inversion attack and MSE/PSNR scoring.
//! * [`hwsim`]: bit-exact model of the majority-LUT and saturated adder-tree encoder.
//! * [`data`], [`format`]: datasets, CSV, model files and the query wire record.

pub mod codebook;
pub mod data;
pub mod encoding;
pub mod error;
pub mod format;
pub mod hv;
pub mod hwsim;
pub mod model;
pub mod privacy;
pub mod quant;
pub mod reconstruction;
pub mod rng;

pub use codebook::CodebookSet;
pub use data::{Dataset, SyntheticSpec};
pub use encoding::{Encoder, EncodingConfig, EncodingVariant, FeatureRange};
pub use error::{Error, Result};
pub use hv::{cosine, dot, Hypervector, Kind};
pub use model::{Labeled, Model, Prediction};
pub use privacy::{PrivacyParams, SensitivityReport};
pub use quant::{DimensionMask, QuantScheme, SchemeTag, ThresholdSource};
