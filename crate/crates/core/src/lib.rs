//! Arbitrarily varying relay channels over finite alphabets: capacity bounds,
//! symmetrizability tests and Monte Carlo simulation of block Markov
//! partial decode-forward codes.

pub mod bounds;
pub mod catalog;
pub mod channel;
pub mod error;
pub mod information;
pub mod lp;
mod optimize;
pub mod probability;
pub mod simulation;
pub mod symmetrizability;

pub use channel::{Alphabets, OrthogonalSplit, RelayChannel, StateKernel, StateUncertainty, StructureReport};
pub use error::{AvrcError, Result};
pub use information::{Axis, JointDist};
pub use probability::{CondPmf, Pmf, Sequence};
