//! Sim-to-real environment representations for learned indoor navigation.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`image`]: depth/gray/RGB images, detections and the eight observation kinds
//! - [`edge`] and [`noise`]: Canny edges and the depth-sensor noise model
//! - [`semantic`]: the categorized detection image
//! - [`sim`]: a 2.5-D corridor simulator with a scripted expert
//! - [`net`]: the conditional dual-encoder policy, generic over `f32`/`f64`
//! - [`repr`] and [`policy`]: observations for the network and closed-loop driving
//! - [`featmap`], [`metrics`], [`dataset`]: evaluation and persistence
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod dataset;
pub mod edge;
pub mod error;
pub mod featmap;
pub mod image;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod policy;
pub mod repr;
pub mod rng;
pub mod scalar;
pub mod semantic;
pub mod sim;

pub use error::{Error, Result};
pub use image::{BBox, DepthImage, Detection, GrayImage, PrimaryImage, ReprBundle, ReprKind, RgbImage, RiskCategory};
pub use rng::RngStream;
pub use scalar::Scalar;

pub type Network32 = net::Network<f32>;
pub type Network64 = net::Network<f64>;
pub type Tensor32 = net::Tensor<f32>;
pub type Tensor64 = net::Tensor<f64>;
pub type TrainState32 = net::TrainState<f32>;
pub type TrainState64 = net::TrainState<f64>;
