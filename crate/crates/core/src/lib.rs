//! TempNet: a spatio-temporal 3D CNN with temporal attention for clip-wise
//! event detection, together with its preprocessing chain, a reverse-mode
//! autodiff substrate, a training and evaluation harness and a synthetic
//! clip generator.

pub mod accounting;
pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod parallel;
pub mod params;
pub mod pipeline;
pub mod preproc;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use config::Config;
pub use error::{Error, Result};
pub use model::{TempNet, TempNetConfig};
pub use params::ParamStore;
pub use tensor::{DType, Element, Tensor};
