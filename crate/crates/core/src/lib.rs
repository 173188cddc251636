//! Projection-aggregation decoding of Reed-Muller codes.

pub mod allocation;
pub mod channel;
pub mod cpa;
pub mod error;
pub mod fht;
pub mod fixed;
pub mod gf2;
pub mod hw;
pub mod iupa;
pub mod llr;
pub mod pa;
pub mod rm;

pub use error::{Error, Result};
