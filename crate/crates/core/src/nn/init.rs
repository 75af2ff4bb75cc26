use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform with bound `sqrt(6 / fan_in)` (ReLU gain). Used for conv kernels.
pub fn kaiming_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

/// Uniform with bound `1 / sqrt(fan_in)`. Used for the classifier.
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}
