//! Decoding speech units and phonemes from multichannel surface EMG.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod dsp;
pub mod error;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod probe;
pub mod quantize;
pub mod scalar;
pub mod spd;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Real;

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type CovFrame32 = spd::CovFrame<f32>;
pub type CovFrame64 = spd::CovFrame<f64>;
pub type CholFrame32 = spd::CholFrame<f32>;
pub type CholFrame64 = spd::CholFrame<f64>;
pub type Codebook32 = quantize::Codebook<f32>;
pub type Codebook64 = quantize::Codebook<f64>;
pub type TdsModel32 = nn::TdsModel<f32>;
pub type TdsModel64 = nn::TdsModel<f64>;
