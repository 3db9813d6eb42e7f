//! Three-party passphrase agreement: an enrollee (STA) joins an access point
//! with help from an authenticator that the AP already trusts.
//!
//! Pass 1 runs between enrollee and authenticator and yields `passphrase_1`,
//! which the authenticator forwards to the AP over their secured link. The
//! enrollee proves knowledge of it with a SHA-256 hash, then pass 2 runs
//! directly with the AP and yields the final `passphrase_2`. In both passes the
//! enrollee publishes the sketch and the counterpart reconciles.

mod message;
mod node;
pub mod pipeline;
mod scc;
mod session;
mod transcript;

use thiserror::Error;

pub use message::{
    passphrase_hash, Digest32, MacAddr, MessageKind, NodeIdentity, Nonce, ProtocolMessage,
    RejectReason, Role,
};
pub use node::{AccessPoint, Authenticator, Enrollee, EnrolleeState, FailureDetail, Output};
pub use pipeline::{PipelineConfig, PipelineError, QuantizedTrace};
pub use scc::{
    scc_collect, scc_collect_with, SccFaults, SccOutput, Side, MIN_ALIGNED_PACKETS, REDUCED_N_RX,
};
pub use session::{
    default_identities, replay, run_handshake, run_handshake_with, run_session, EveAttempt,
    HandshakeOptions, SessionOutcome, SessionReport, SessionStatus, MAX_PASS2_ATTEMPTS,
};
pub use transcript::{Transcript, TranscriptRecord};

use crate::channel::ChannelError;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("only {aligned} packets survived alignment (need at least 3)")]
    TooFewPackets { aligned: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("session stalled before reaching a terminal state")]
    Stalled,
    #[error("session invariant violated: {0}")]
    Invariant(String),
    #[error("replay diverged at step {step}: expected `{expected}`, got `{found}`")]
    ReplayDivergence {
        step: usize,
        expected: String,
        found: String,
    },
    #[error("malformed transcript at line {line}: {reason}")]
    Format { line: usize, reason: String },
}
