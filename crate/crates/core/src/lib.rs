//! Gaussian-process regression discontinuity estimation along geographic borders.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! aliases below name the common instantiations. File handling and the
//! pipeline in [`io`] work in `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod cliff;
pub mod data;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod io;
pub mod late;
pub mod rng;
pub mod scalar;
pub mod sims;
pub mod testing;

pub use data::RegionData;
pub use error::{Error, Result};
pub use scalar::{normal_cdf, Real};

pub type Point64 = geometry::Point<f64>;
pub type Point32 = geometry::Point<f32>;
pub type Border64 = geometry::Border<f64>;
pub type Border32 = geometry::Border<f32>;
pub type Hyperparams64 = gp::Hyperparams<f64>;
pub type Hyperparams32 = gp::Hyperparams<f32>;
pub type RegionData64 = RegionData<f64>;
pub type RegionData32 = RegionData<f32>;
pub type CliffPosterior64 = cliff::CliffPosterior<f64>;
pub type CliffPosterior32 = cliff::CliffPosterior<f32>;
pub type LateResult64 = late::LateResult<f64>;
pub type LateResult32 = late::LateResult<f32>;
