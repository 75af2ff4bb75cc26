//! Differentiable building blocks: parameters, the tape, and conv kernels.

pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod layers;
pub mod param;

pub use conv::{conv2d_reference, ConvGeom};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{BatchStats, Grads, Graph, ThresholdAct, Var};
pub use layers::{BatchNorm2d, Conv2d, ForwardCtx, Linear, Mode, RunningStats};
pub use param::{ParamId, ParamStore, Parameter};

/// Batch norm running-average momentum.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;
