use std::fmt;

use sha2::{Digest, Sha256};

use crate::passphrase::Passphrase;
use crate::pinsketch::Sketch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Authenticator,
    Enrollee,
    AccessPoint,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Authenticator => "authenticator",
            Role::Enrollee => "enrollee",
            Role::AccessPoint => "access_point",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddr({self})")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeIdentity {
    pub role: Role,
    pub mac: MacAddr,
    pub name_id: String,
    /// Simulated local-clock skew relative to true time, seconds.
    pub clock_offset: f64,
}

impl NodeIdentity {
    pub fn new(role: Role, mac: [u8; 6], name_id: impl Into<String>, clock_offset: f64) -> Self {
        Self {
            role,
            mac: MacAddr(mac),
            name_id: name_id.into(),
            clock_offset,
        }
    }
}

pub type Nonce = [u8; 16];
pub type Digest32 = [u8; 32];

/// SHA-256 over the UTF-8 passphrase bytes.
pub fn passphrase_hash(p: &Passphrase) -> Digest32 {
    Sha256::digest(p.as_str().as_bytes()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    HashMismatch,
    Reconciliation { block: u32 },
    Collection,
    Pipeline,
    UnknownEnrollee,
}

impl RejectReason {
    fn encode(self) -> [u8; 5] {
        let (code, detail) = match self {
            RejectReason::HashMismatch => (1u8, 0u32),
            RejectReason::Reconciliation { block } => (2, block),
            RejectReason::Collection => (3, 0),
            RejectReason::Pipeline => (4, 0),
            RejectReason::UnknownEnrollee => (5, 0),
        };
        let d = detail.to_be_bytes();
        [code, d[0], d[1], d[2], d[3]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageKind {
    Broadcast { name_id: String, mac: MacAddr, nonce: Nonce },
    Confirm { nonce: Nonce },
    SccStart { n_packets: u32, wait: f64 },
    /// Offset-exchange timestamps (requester send, responder receive,
    /// responder send), each in the sender's local clock.
    ClockSync { origin: f64, receive: f64, transmit: f64 },
    Probe { packet_index: u64 },
    SketchTransfer(Sketch),
    NetInfo { ssid: String, ap_mac: MacAddr },
    AssocRequest { mac: MacAddr, passphrase_hash: Digest32 },
    CredPush { mac: MacAddr, passphrase: Passphrase },
    NotifyJoined { mac: MacAddr, confirm: Digest32 },
    Reject { reason: RejectReason },
}

impl MessageKind {
    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::Broadcast { .. } => "broadcast",
            MessageKind::Confirm { .. } => "confirm",
            MessageKind::SccStart { .. } => "scc_start",
            MessageKind::ClockSync { .. } => "clock_sync",
            MessageKind::Probe { .. } => "probe",
            MessageKind::SketchTransfer(_) => "sketch_transfer",
            MessageKind::NetInfo { .. } => "net_info",
            MessageKind::AssocRequest { .. } => "assoc_request",
            MessageKind::CredPush { .. } => "cred_push",
            MessageKind::NotifyJoined { .. } => "notify_joined",
            MessageKind::Reject { .. } => "reject",
        }
    }

    /// Binary payload used for transcripts.
    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.push(s.len().min(255) as u8);
            out.extend_from_slice(&s.as_bytes()[..s.len().min(255)]);
        };
        match self {
            MessageKind::Broadcast { name_id, mac, nonce } => {
                put_str(&mut out, name_id);
                out.extend_from_slice(&mac.0);
                out.extend_from_slice(nonce);
            }
            MessageKind::Confirm { nonce } => out.extend_from_slice(nonce),
            MessageKind::SccStart { n_packets, wait } => {
                out.extend_from_slice(&n_packets.to_be_bytes());
                out.extend_from_slice(&wait.to_bits().to_be_bytes());
            }
            MessageKind::ClockSync {
                origin,
                receive,
                transmit,
            } => {
                for v in [origin, receive, transmit] {
                    out.extend_from_slice(&v.to_bits().to_be_bytes());
                }
            }
            MessageKind::Probe { packet_index } => out.extend_from_slice(&packet_index.to_be_bytes()),
            MessageKind::SketchTransfer(s) => {
                out.extend_from_slice(&(s.payload_bits as u32).to_be_bytes());
                out.extend_from_slice(&(s.blocks.len() as u16).to_be_bytes());
                for syn in &s.blocks {
                    out.extend(syn.0.iter().map(|g| g.value()));
                }
            }
            MessageKind::NetInfo { ssid, ap_mac } => {
                put_str(&mut out, ssid);
                out.extend_from_slice(&ap_mac.0);
            }
            MessageKind::AssocRequest {
                mac,
                passphrase_hash,
            } => {
                out.extend_from_slice(&mac.0);
                out.extend_from_slice(passphrase_hash);
            }
            MessageKind::CredPush { mac, passphrase } => {
                out.extend_from_slice(&mac.0);
                put_str(&mut out, passphrase.as_str());
            }
            MessageKind::NotifyJoined { mac, confirm } => {
                out.extend_from_slice(&mac.0);
                out.extend_from_slice(confirm);
            }
            MessageKind::Reject { reason } => out.extend_from_slice(&reason.encode()),
        }
        out
    }

    /// Sent over the already-secured authenticator–AP link rather than the air.
    pub fn is_trusted_path(&self, sender: Role, receiver: Role) -> bool {
        matches!(
            (sender, receiver),
            (Role::Authenticator, Role::AccessPoint) | (Role::AccessPoint, Role::Authenticator)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub sender: Role,
    pub receiver: Role,
    pub kind: MessageKind,
}

impl ProtocolMessage {
    pub fn new(sender: Role, receiver: Role, kind: MessageKind) -> Self {
        Self {
            sender,
            receiver,
            kind,
        }
    }
}
