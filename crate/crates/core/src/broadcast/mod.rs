//! The broadcast hierarchy: relaxed (ideal or Dolev-Strong), unfair, fair.

pub mod dolev_strong;
pub mod fbc;
pub mod rbc;
pub mod ubc;

pub use dolev_strong::{DolevStrongPool, SignChain};
pub use fbc::{decode_pair, encode_pair, puzzle_id, FbcIdealStack, FbcProtocol, FbcTuple, IdealFbc};
pub use rbc::{IdealRbc, IdealRbcPool, InstanceId, RbcBackend, RbcOut};
pub use ubc::{IdealUbc, UbcIdealStack, UbcProtocol};
