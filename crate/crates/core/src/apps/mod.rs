//! Applications of simultaneous broadcast: a delayed uniform random string
//! and a plain-ballot vote.

pub mod durs;
pub mod vote;

pub use durs::{combine, durs_gate, DursIdealStack, DursProtocol, IdealDurs};
pub use vote::{decode_ballot, encode_ballot, tally, vote_gate, IdealVs, VoteIdealStack, VoteProtocol};
