//! Market images and the models built on them.

pub mod autodiff;
pub mod harness;
pub mod marketdata;
pub mod models;
pub mod scalar;
pub mod seeds;
pub mod segnet;

pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type TensorF32 = autodiff::Tensor<f32>;
pub type Tape = autodiff::Tape<f64>;
pub type ParamStore = autodiff::ParamStore<f64>;
pub type Adam = autodiff::Adam<f64>;
