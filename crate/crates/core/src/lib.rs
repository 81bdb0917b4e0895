//! Rate-constrained depth contour approximation for depth-image-based
//! rendering: crack-edge contours, arithmetic edge coding, a synthesized
//! view quality proxy and the dynamic-programming approximation built on it.

pub mod aec;
pub mod approx;
pub mod augment;
pub mod config;
pub mod contour;
pub mod error;
pub mod harness;
pub mod image_io;
pub mod range_coder;
pub mod swim;

pub use error::{Error, Result};
