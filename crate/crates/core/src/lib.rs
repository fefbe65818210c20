//! Deterministic simulation of synchronous broadcast protocols and their
//! ideal functionalities: relaxed, unfair, fair and simultaneous broadcast,
//! time-lock encryption, and two applications built on top (a delayed
//! random beacon and a plain-ballot vote).
//!
//! Every stack comes in two flavours sharing one [`kernel::Stack`]
//! interface: the protocol and the functionality it realizes. The
//! [`harness`] runs both under one scenario script and compares what the
//! honest parties output.

pub mod apps;
pub mod astrolabous;
pub mod broadcast;
pub mod crypto;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod sbc;
pub mod tle;

pub use error::SimError;
