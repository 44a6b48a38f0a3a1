//! Dense tensors, reverse-mode autodiff, AdamW and the learning-rate schedule.

pub mod container;
mod optim;
mod param;
mod scalar;
mod schedule;
mod tape;
mod tensor;

pub use optim::{clip_grad_norm, AdamW, AdamWConfig};
pub use param::{Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use schedule::{lr_at, LrSchedule, ScheduleShape};
pub use tape::{gelu_scalar, CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
