//! Passphrase agreement between Wi-Fi devices from reciprocal channel phase.
//!
//! The pipeline runs per node pair: synchronized CSI collection, per-packet
//! phase decomposition ([`dapper`]), moving-window quantization ([`mow`]), BCH
//! secure-sketch reconciliation ([`pinsketch`]), and the bit-to-passphrase and
//! PSK mapping ([`passphrase`]). [`protocol`] wires these into the three-party
//! provisioning handshake over an in-memory transport, and [`channel`] supplies
//! synthetic reciprocal CSI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dapper;
pub mod mow;
pub mod passphrase;
mod phase_model;
pub mod pinsketch;
pub mod protocol;

pub use phase_model::{
    model_value, model_with_gradient, unwrap_phase, wrap_half_turn, ChannelParams, PhaseVector,
};
