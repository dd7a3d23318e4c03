extern crate openblas_src;

pub mod config;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod spectrum;

pub use error::{Error, Result};
