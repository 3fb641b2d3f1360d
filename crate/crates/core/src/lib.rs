//! Multi-party secure broad learning.
//!
//! Two data-holding clients and a helper server jointly compute the mapped
//! features of a Broad Learning System over additively masked data; the
//! server then trains the usual BLS readout on the joint features. The crate
//! contains the plaintext model ([`bls`]), the three-party masking protocol
//! ([`protocol`]), its transports ([`transport`]), dataset handling
//! ([`datasets`]) and the experiment runners ([`experiment`]).

pub mod numerics;
pub mod bls;
pub mod datasets;
pub mod experiment;
pub mod protocol;
pub mod transport;

pub use numerics::{RealMatrix, RngStream};
