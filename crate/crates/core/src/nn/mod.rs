//! Dense tensors, reverse-mode differentiation, parameters and Adam.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use params::{init_rng, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var, MASKED_LOGIT};
pub use tensor::Tensor;
