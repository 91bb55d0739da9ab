//! Finite-alphabet probability tables, directed information, sliding-block
//! channels, capacity solvers, and executable random-coding schemes.
//!
//! Everything is exact (dense tables, double precision) at desk scale;
//! sampling is explicit-seed only so that every experiment is reproducible.

pub mod capacity;
pub mod channel;
pub mod codelab;
pub mod error;
pub mod prob;
pub mod processes;
pub mod tuning;
pub mod typicality;

pub use error::{Error, Result};
pub use prob::{Alphabet, CausalKernel, InfoResult, JointPmf, KernelDirection, Pmf};
