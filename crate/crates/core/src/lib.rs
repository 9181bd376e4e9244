//! Single-scale vision transformer backbone with progressive attention
//! windows.
//!
//! The crate covers the numeric kernels and a small reverse-mode autodiff
//! tape ([`ops`], [`autodiff`]), the window-strategy grammar and layouts
//! ([`window`]), the encoder ([`model`]), architecture presets and ablation
//! families ([`arch`]), analytic cost counting ([`cost`]) and the relative
//! receptive-field metric ([`analysis`]).

pub mod analysis;
pub mod arch;
pub mod autodiff;
pub mod cost;
pub mod error;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod window;

pub use arch::{ArchConfig, Flags, Mode, Transition};
pub use cost::{count_flops, count_params, CostReport};
pub use error::{Error, Result};
pub use tensor::Tensor;
pub use window::{parse_strategy, Scale, WindowStrategy};
