//! Inference runtime and verification toolkit for the METER family of
//! lightweight monocular depth estimators.
//!
//! The crate covers model construction in three sizes (S, XS, XXS), forward
//! inference on hand-written kernels, the balanced depth loss with analytic
//! gradients, the shifting-strategy augmentation, depth metrics, and a
//! parameter/MAC/latency profiler.
//!
//! ```
//! use meter::model::{MeterModel, ModelConfig, Variant};
//!
//! let model = MeterModel::build(ModelConfig::preset(Variant::XXS), 42).unwrap();
//! assert!(model.param_count() > 600_000);
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod augment;
pub mod cli;
pub mod error;
pub mod io;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod profile;
pub mod selfcheck;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{DepthMap, MeterModel, ModelConfig, Variant};
pub use tensor::{Shape, Tensor};
