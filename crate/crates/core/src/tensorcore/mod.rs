//! Dense networks with hand-written reverse-mode gradients.

mod grad;
mod mlp;
mod optim;

pub use grad::{
    finite_diff_grad, grad_check, relative_error, value_and_grad, Detached, GradReport, Objective,
    REL_ERR_FLOOR,
};
pub use mlp::{logistic, softplus, Activation, Forward, LayerShape, ParamVector, POSITIVE_FLOOR};
pub use optim::{adam_step, OptimizerState};
