//! State machines of the three participants. Each handler consumes one input
//! and returns the messages (or collection request) it produces.

use std::collections::BTreeMap;

use super::message::{
    passphrase_hash, Digest32, MacAddr, MessageKind, NodeIdentity, Nonce, ProtocolMessage,
    RejectReason, Role,
};
use super::pipeline::{recover_side, sketch_side, PipelineConfig, PipelineError};
use crate::channel::CsiTrace;
use crate::mow::BitString;
use crate::passphrase::{map_bits, Passphrase};
use crate::pinsketch::{Sketch, SketchError};

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send(ProtocolMessage),
    /// Ask the medium to run a synchronized collection between the enrollee
    /// and `counterpart`.
    Collect {
        counterpart: Role,
        n_packets: usize,
        wait: f64,
    },
}

fn send(from: Role, to: Role, kind: MessageKind) -> Output {
    Output::Send(ProtocolMessage::new(from, to, kind))
}

/// Why a session did not end in `Joined`.
#[derive(Debug, Clone, PartialEq)]
pub enum FailureDetail {
    NotApproved,
    Reconciliation { block: u32 },
    Pipeline(String),
    Collection(String),
    HashMismatch,
    UnknownEnrollee,
    ConfirmMismatch,
    RetriesExhausted { attempts: u32 },
    Stalled,
}

fn reject_reason(e: &PipelineError) -> RejectReason {
    match e {
        PipelineError::Reconcile(SketchError::ReconciliationFailure { block, .. }) => {
            RejectReason::Reconciliation { block: *block as u32 }
        }
        _ => RejectReason::Pipeline,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnrolleeState {
    Idle,
    AwaitingConfirm,
    AwaitingScc { pass: u8 },
    Collecting { pass: u8 },
    AwaitingNetInfo,
    AwaitingVerdict,
    Joined,
    Failed { pass: u8 },
}

#[derive(Debug, Clone)]
pub struct Enrollee {
    pub identity: NodeIdentity,
    state: EnrolleeState,
    nonce: Nonce,
    pipeline: PipelineConfig,
    max_pass2_attempts: u32,
    tamper_assoc_hash: bool,
    passphrase_1: Option<Passphrase>,
    passphrase_2: Option<Passphrase>,
    bits: Option<BitString>,
    net_info: Option<(String, MacAddr)>,
    pass2_attempts: u32,
    failure: Option<FailureDetail>,
}

impl Enrollee {
    pub fn new(
        identity: NodeIdentity,
        nonce: Nonce,
        pipeline: PipelineConfig,
        max_pass2_attempts: u32,
        tamper_assoc_hash: bool,
    ) -> Self {
        Self {
            identity,
            state: EnrolleeState::Idle,
            nonce,
            pipeline,
            max_pass2_attempts,
            tamper_assoc_hash,
            passphrase_1: None,
            passphrase_2: None,
            bits: None,
            net_info: None,
            pass2_attempts: 0,
            failure: None,
        }
    }

    pub fn state(&self) -> EnrolleeState {
        self.state
    }

    pub fn passphrase_1(&self) -> Option<&Passphrase> {
        self.passphrase_1.as_ref()
    }

    pub fn passphrase_2(&self) -> Option<&Passphrase> {
        self.passphrase_2.as_ref()
    }

    pub fn net_info(&self) -> Option<&(String, MacAddr)> {
        self.net_info.as_ref()
    }

    pub(crate) fn current_bits(&self) -> Option<&BitString> {
        self.bits.as_ref()
    }

    pub fn pass2_attempts(&self) -> u32 {
        self.pass2_attempts
    }

    pub fn failure(&self) -> Option<&FailureDetail> {
        self.failure.as_ref()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, EnrolleeState::Joined | EnrolleeState::Failed { .. })
    }

    fn role(&self) -> Role {
        self.identity.role
    }

    fn fail(&mut self, pass: u8, detail: FailureDetail) {
        log::info!("enrollee failed in pass {pass}: {detail:?}");
        self.state = EnrolleeState::Failed { pass };
        self.failure = Some(detail);
        self.bits = None;
        self.passphrase_1 = None;
        self.passphrase_2 = None;
    }

    pub fn start(&mut self) -> Vec<Output> {
        self.state = EnrolleeState::AwaitingConfirm;
        vec![send(
            self.role(),
            Role::Authenticator,
            MessageKind::Broadcast {
                name_id: self.identity.name_id.clone(),
                mac: self.identity.mac,
                nonce: self.nonce,
            },
        )]
    }

    fn assoc_request(&self) -> Vec<Output> {
        let p1 = self.passphrase_1.as_ref().expect("passphrase_1 set before association");
        let mut hash: Digest32 = passphrase_hash(p1);
        if self.tamper_assoc_hash {
            hash[0] ^= 0x01;
        }
        vec![send(
            self.role(),
            Role::AccessPoint,
            MessageKind::AssocRequest {
                mac: self.identity.mac,
                passphrase_hash: hash,
            },
        )]
    }

    /// A pass-2 attempt failed; retry association or give up.
    fn pass2_failed(&mut self, detail: FailureDetail) -> Vec<Output> {
        self.bits = None;
        self.passphrase_2 = None;
        if self.pass2_attempts < self.max_pass2_attempts {
            log::info!(
                "pass-2 attempt {} failed ({detail:?}); retrying association",
                self.pass2_attempts
            );
            self.state = EnrolleeState::AwaitingScc { pass: 2 };
            self.assoc_request()
        } else {
            let attempts = self.pass2_attempts;
            self.fail(2, FailureDetail::RetriesExhausted { attempts });
            Vec::new()
        }
    }

    pub fn on_message(&mut self, msg: &ProtocolMessage) -> Vec<Output> {
        use EnrolleeState as S;
        match (&msg.kind, self.state) {
            (MessageKind::Confirm { nonce }, S::AwaitingConfirm)
                if msg.sender == Role::Authenticator && *nonce == self.nonce =>
            {
                self.state = S::AwaitingScc { pass: 1 };
                Vec::new()
            }
            (MessageKind::SccStart { n_packets, wait }, S::AwaitingScc { pass }) => {
                let expected = if pass == 1 {
                    Role::Authenticator
                } else {
                    Role::AccessPoint
                };
                if msg.sender != expected {
                    return Vec::new();
                }
                if pass == 2 {
                    self.pass2_attempts += 1;
                }
                self.state = S::Collecting { pass };
                vec![Output::Collect {
                    counterpart: expected,
                    n_packets: *n_packets as usize,
                    wait: *wait,
                }]
            }
            (MessageKind::NetInfo { ssid, ap_mac }, S::AwaitingNetInfo)
                if msg.sender == Role::Authenticator =>
            {
                self.net_info = Some((ssid.clone(), *ap_mac));
                self.bits = None;
                self.state = S::AwaitingScc { pass: 2 };
                self.assoc_request()
            }
            (MessageKind::NotifyJoined { confirm, .. }, S::AwaitingVerdict)
                if msg.sender == Role::AccessPoint =>
            {
                let ok = self
                    .passphrase_2
                    .as_ref()
                    .is_some_and(|p| passphrase_hash(p) == *confirm);
                if ok {
                    self.state = S::Joined;
                    self.bits = None;
                    self.passphrase_1 = None;
                    Vec::new()
                } else {
                    self.pass2_failed(FailureDetail::ConfirmMismatch)
                }
            }
            (MessageKind::Reject { reason }, state) => {
                let detail = match *reason {
                    RejectReason::HashMismatch => FailureDetail::HashMismatch,
                    RejectReason::UnknownEnrollee => FailureDetail::UnknownEnrollee,
                    RejectReason::Reconciliation { block } => FailureDetail::Reconciliation { block },
                    RejectReason::Collection => FailureDetail::Collection("rejected by peer".into()),
                    RejectReason::Pipeline => FailureDetail::Pipeline("rejected by peer".into()),
                };
                match (state, reason) {
                    (S::AwaitingConfirm, _) => {
                        self.fail(1, FailureDetail::NotApproved);
                        Vec::new()
                    }
                    (_, RejectReason::HashMismatch | RejectReason::UnknownEnrollee) => {
                        self.fail(2, detail);
                        Vec::new()
                    }
                    (S::AwaitingNetInfo, _) => {
                        self.fail(1, detail);
                        Vec::new()
                    }
                    (S::AwaitingVerdict, _) => self.pass2_failed(detail),
                    _ => Vec::new(),
                }
            }
            _ => {
                log::debug!("enrollee ignored {} in {:?}", msg.kind.name(), self.state);
                Vec::new()
            }
        }
    }

    /// Local CSI for the current pass: quantize, derive the passphrase, and
    /// publish the sketch.
    pub fn on_trace(&mut self, trace: &CsiTrace) -> Vec<Output> {
        let EnrolleeState::Collecting { pass } = self.state else {
            return Vec::new();
        };
        let counterpart = if pass == 1 {
            Role::Authenticator
        } else {
            Role::AccessPoint
        };
        let derived = sketch_side(trace, &self.pipeline).and_then(|(q, s)| {
            map_bits(&q.bits)
                .map(|p| (q.bits, s, p))
                .map_err(|e| PipelineError::Mapping(e.to_string()))
        });
        match derived {
            Ok((bits, sketch, p)) => {
                self.bits = Some(bits);
                if pass == 1 {
                    self.passphrase_1 = Some(p);
                    self.state = EnrolleeState::AwaitingNetInfo;
                } else {
                    self.passphrase_2 = Some(p);
                    self.state = EnrolleeState::AwaitingVerdict;
                }
                vec![send(self.role(), counterpart, MessageKind::SketchTransfer(sketch))]
            }
            Err(e) => self.local_failure(pass, counterpart, FailureDetail::Pipeline(e.to_string())),
        }
    }

    pub fn on_collect_failed(&mut self, reason: String) -> Vec<Output> {
        let EnrolleeState::Collecting { pass } = self.state else {
            return Vec::new();
        };
        let counterpart = if pass == 1 {
            Role::Authenticator
        } else {
            Role::AccessPoint
        };
        self.local_failure(pass, counterpart, FailureDetail::Collection(reason))
    }

    fn local_failure(&mut self, pass: u8, counterpart: Role, detail: FailureDetail) -> Vec<Output> {
        let reason = match detail {
            FailureDetail::Collection(_) => RejectReason::Collection,
            _ => RejectReason::Pipeline,
        };
        let mut out = vec![send(self.role(), counterpart, MessageKind::Reject { reason })];
        if pass == 1 {
            self.fail(1, detail);
        } else {
            out.extend(self.pass2_failed(detail));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Authenticator {
    pub identity: NodeIdentity,
    approve: bool,
    ssid: String,
    ap_mac: MacAddr,
    n_packets: usize,
    wait: f64,
    pipeline: PipelineConfig,
    enrollee_mac: Option<MacAddr>,
    trace: Option<CsiTrace>,
    passphrase_1: Option<Passphrase>,
}

impl Authenticator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        identity: NodeIdentity,
        approve: bool,
        ssid: String,
        ap_mac: MacAddr,
        n_packets: usize,
        wait: f64,
        pipeline: PipelineConfig,
    ) -> Self {
        Self {
            identity,
            approve,
            ssid,
            ap_mac,
            n_packets,
            wait,
            pipeline,
            enrollee_mac: None,
            trace: None,
            passphrase_1: None,
        }
    }

    pub fn holds_passphrase_1(&self) -> bool {
        self.passphrase_1.is_some()
    }

    fn role(&self) -> Role {
        self.identity.role
    }

    pub fn on_message(&mut self, msg: &ProtocolMessage) -> Vec<Output> {
        match &msg.kind {
            MessageKind::Broadcast { mac, nonce, name_id } if msg.sender == Role::Enrollee => {
                if !self.approve {
                    log::info!("enrollee {name_id} not approved");
                    return vec![send(
                        self.role(),
                        Role::Enrollee,
                        MessageKind::Reject {
                            reason: RejectReason::UnknownEnrollee,
                        },
                    )];
                }
                self.enrollee_mac = Some(*mac);
                vec![
                    send(self.role(), Role::Enrollee, MessageKind::Confirm { nonce: *nonce }),
                    send(
                        self.role(),
                        Role::Enrollee,
                        MessageKind::SccStart {
                            n_packets: self.n_packets as u32,
                            wait: self.wait,
                        },
                    ),
                ]
            }
            MessageKind::SketchTransfer(sketch) if msg.sender == Role::Enrollee => {
                self.on_sketch(sketch)
            }
            MessageKind::NotifyJoined { .. } if msg.sender == Role::AccessPoint => {
                self.passphrase_1 = None;
                Vec::new()
            }
            MessageKind::Reject { .. } if msg.sender == Role::Enrollee => {
                self.trace = None;
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn on_sketch(&mut self, sketch: &Sketch) -> Vec<Output> {
        let (Some(trace), Some(mac)) = (self.trace.take(), self.enrollee_mac) else {
            return Vec::new();
        };
        let result = recover_side(&trace, sketch, &self.pipeline).and_then(|(_, r)| {
            map_bits(&r).map_err(|e| PipelineError::Mapping(e.to_string()))
        });
        match result {
            Ok(p1) => {
                self.passphrase_1 = Some(p1.clone());
                vec![
                    send(
                        self.role(),
                        Role::Enrollee,
                        MessageKind::NetInfo {
                            ssid: self.ssid.clone(),
                            ap_mac: self.ap_mac,
                        },
                    ),
                    send(
                        self.role(),
                        Role::AccessPoint,
                        MessageKind::CredPush { mac, passphrase: p1 },
                    ),
                ]
            }
            Err(e) => {
                log::info!("authenticator reconciliation failed: {e}");
                vec![send(
                    self.role(),
                    Role::Enrollee,
                    MessageKind::Reject {
                        reason: reject_reason(&e),
                    },
                )]
            }
        }
    }

    pub fn on_trace(&mut self, trace: CsiTrace) {
        self.trace = Some(trace);
    }

    /// Session over: forget everything derived from the channel.
    pub fn finish(&mut self) {
        self.passphrase_1 = None;
        self.trace = None;
    }
}

#[derive(Debug, Clone)]
pub struct AccessPoint {
    pub identity: NodeIdentity,
    ssid: String,
    n_packets: usize,
    wait: f64,
    pipeline: PipelineConfig,
    credentials: BTreeMap<MacAddr, Passphrase>,
    pending: Option<MacAddr>,
    trace: Option<CsiTrace>,
    passphrase_2: BTreeMap<MacAddr, Passphrase>,
}

impl AccessPoint {
    pub fn new(
        identity: NodeIdentity,
        ssid: String,
        n_packets: usize,
        wait: f64,
        pipeline: PipelineConfig,
    ) -> Self {
        Self {
            identity,
            ssid,
            n_packets,
            wait,
            pipeline,
            credentials: BTreeMap::new(),
            pending: None,
            trace: None,
            passphrase_2: BTreeMap::new(),
        }
    }

    pub fn ssid(&self) -> &str {
        &self.ssid
    }

    pub fn holds_passphrase_1(&self) -> bool {
        !self.credentials.is_empty()
    }

    pub fn passphrase_2(&self, mac: &MacAddr) -> Option<&Passphrase> {
        self.passphrase_2.get(mac)
    }

    fn role(&self) -> Role {
        self.identity.role
    }

    fn reject(&self, reason: RejectReason) -> Vec<Output> {
        vec![send(self.role(), Role::Enrollee, MessageKind::Reject { reason })]
    }

    pub fn on_message(&mut self, msg: &ProtocolMessage) -> Vec<Output> {
        match &msg.kind {
            MessageKind::CredPush { mac, passphrase } if msg.sender == Role::Authenticator => {
                self.credentials.insert(*mac, passphrase.clone());
                Vec::new()
            }
            MessageKind::AssocRequest {
                mac,
                passphrase_hash: hash,
            } if msg.sender == Role::Enrollee => match self.credentials.get(mac) {
                None => self.reject(RejectReason::UnknownEnrollee),
                Some(p1) if passphrase_hash(p1) != *hash => {
                    log::info!("association hash mismatch for {mac}");
                    self.credentials.remove(mac);
                    self.reject(RejectReason::HashMismatch)
                }
                Some(_) => {
                    self.pending = Some(*mac);
                    self.trace = None;
                    vec![send(
                        self.role(),
                        Role::Enrollee,
                        MessageKind::SccStart {
                            n_packets: self.n_packets as u32,
                            wait: self.wait,
                        },
                    )]
                }
            },
            MessageKind::SketchTransfer(sketch) if msg.sender == Role::Enrollee => {
                self.on_sketch(sketch)
            }
            MessageKind::Reject { .. } if msg.sender == Role::Enrollee => {
                self.trace = None;
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn on_sketch(&mut self, sketch: &Sketch) -> Vec<Output> {
        let (Some(trace), Some(mac)) = (self.trace.take(), self.pending) else {
            return Vec::new();
        };
        let result = recover_side(&trace, sketch, &self.pipeline).and_then(|(_, r)| {
            map_bits(&r).map_err(|e| PipelineError::Mapping(e.to_string()))
        });
        match result {
            Ok(p2) => {
                let confirm = passphrase_hash(&p2);
                self.passphrase_2.insert(mac, p2);
                self.credentials.remove(&mac);
                self.pending = None;
                vec![
                    send(
                        self.role(),
                        Role::Enrollee,
                        MessageKind::NotifyJoined { mac, confirm },
                    ),
                    send(
                        self.role(),
                        Role::Authenticator,
                        MessageKind::NotifyJoined { mac, confirm },
                    ),
                ]
            }
            Err(e) => {
                log::info!("access point reconciliation failed: {e}");
                self.passphrase_2.remove(&mac);
                self.reject(reject_reason(&e))
            }
        }
    }

    pub fn on_trace(&mut self, trace: CsiTrace) {
        self.trace = Some(trace);
    }

    pub fn finish(&mut self) {
        self.credentials.clear();
        self.pending = None;
        self.trace = None;
    }
}
