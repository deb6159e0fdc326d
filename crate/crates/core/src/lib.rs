pub mod bs;
pub mod error;
pub mod experiments;
pub mod gauss_sim;
pub mod kernels;
pub mod pricing;
pub mod quadrature;
pub mod ratefn;

pub use error::{Error, Result};
