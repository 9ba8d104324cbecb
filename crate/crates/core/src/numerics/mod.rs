//! Tensors, software binary16 and the mixed multiply-accumulate contract.

pub mod f16;
pub mod mac;
pub mod tensor;

pub use f16::{cast_down, cast_up, round_through_f16, F16};
pub use mac::mixed_mac;
pub use tensor::{Dtype, Element, Real, Tensor};
