pub mod accounting;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod tp;
pub mod train;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
