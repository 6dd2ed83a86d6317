//! Minimal reverse-mode differentiation over dense shaped arrays, with
//! exactly the primitive set the predictor needs, plus Adam and the
//! cosine learning-rate schedule.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s;
//! [`Tape::backward`] replays the record in reverse, accumulating
//! gradients across fan-out. Tapes are cheap and rebuilt per step;
//! independent tapes may run on different threads.

mod checkpoint;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_sampled};
pub use optim::{adam_step, cosine_lr, AdamHyper, AdamState};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
