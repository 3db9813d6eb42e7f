//! Session driver: delivers messages between the three state machines, runs
//! synchronized collections on request, and lets a passive eavesdropper try
//! every sketch it hears.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::message::{MessageKind, NodeIdentity, ProtocolMessage, Role};
use super::node::{AccessPoint, Authenticator, Enrollee, EnrolleeState, FailureDetail, Output};
use super::pipeline::{quantize_trace, PipelineConfig};
use super::scc::{scc_collect_with, SccFaults};
use super::transcript::Transcript;
use super::ProtocolError;
use crate::channel::{CsiTrace, SimConfig};
use crate::mow::{BitOrigin, BitString};
use crate::passphrase::{map_bits, Passphrase, MAX_SSID_LEN};
use crate::pinsketch::{recover, Sketch};

/// Pass-2 attempts before the enrollee gives up.
pub const MAX_PASS2_ATTEMPTS: u32 = 3;

const STEP_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Joined,
    ReconFailedPass1,
    ReconFailedPass2,
    Rejected,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Joined => "joined",
            SessionStatus::ReconFailedPass1 => "recon_failed_pass1",
            SessionStatus::ReconFailedPass2 => "recon_failed_pass2",
            SessionStatus::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandshakeOptions {
    pub ssid: String,
    /// Delay between clock alignment and the first probe, seconds.
    pub wait: f64,
    pub max_pass2_attempts: u32,
    /// Corrupt the association hash (negative test).
    pub tamper_assoc_hash: bool,
    /// Whether the authenticator's user approves the enrollee.
    pub approve_enrollee: bool,
    pub pipeline: PipelineConfig,
    pub faults: SccFaults,
}

impl Default for HandshakeOptions {
    fn default() -> Self {
        Self {
            ssid: "compass-net".to_string(),
            wait: 0.01,
            max_pass2_attempts: MAX_PASS2_ATTEMPTS,
            tamper_assoc_hash: false,
            approve_enrollee: true,
            pipeline: PipelineConfig::default(),
            faults: SccFaults::default(),
        }
    }
}

/// One eavesdropper attempt against a sketch heard on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct EveAttempt {
    pub pass: u8,
    /// `recover` accepted Eve's bits.
    pub recover_ok: bool,
    /// Eve's final bits equal the enrollee's sketched bits.
    pub matches_enrollee: bool,
    /// Fraction of Eve's quantized bits that differ from the enrollee's.
    pub bit_mismatch: Option<f64>,
    /// Recovered bits mapped if `recover` succeeded, otherwise her own bits.
    pub passphrase: Option<Passphrase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub status: SessionStatus,
    pub passphrase2: Option<Passphrase>,
    pub transcript: Transcript,
    pub pass2_attempts: u32,
    pub failure: Option<FailureDetail>,
    pub eve: Vec<EveAttempt>,
    /// Residual clock-alignment error of each collection, seconds.
    pub clock_errors: Vec<f64>,
}

/// Outcome plus the participants' final state, for inspection.
#[derive(Debug, Clone)]
pub struct SessionReport {
    pub outcome: SessionOutcome,
    pub authenticator: Authenticator,
    pub enrollee: Enrollee,
    pub access_point: AccessPoint,
}

/// Authenticator, enrollee and AP with distinct MACs and skewed clocks.
pub fn default_identities() -> (NodeIdentity, NodeIdentity, NodeIdentity) {
    (
        NodeIdentity::new(Role::Authenticator, [0x02, 0, 0, 0, 0, 0x01], "phone", 0.125),
        NodeIdentity::new(Role::Enrollee, [0x02, 0, 0, 0, 0, 0x02], "sensor-1", 0.5),
        NodeIdentity::new(Role::AccessPoint, [0x02, 0, 0, 0, 0, 0x03], "ap", -0.25),
    )
}

pub fn run_handshake(
    authenticator: &NodeIdentity,
    enrollee: &NodeIdentity,
    ap: &NodeIdentity,
    channel: &SimConfig,
    rng_seed: u64,
) -> Result<SessionOutcome, ProtocolError> {
    run_handshake_with(
        authenticator,
        enrollee,
        ap,
        channel,
        rng_seed,
        &HandshakeOptions::default(),
    )
}

pub fn run_handshake_with(
    authenticator: &NodeIdentity,
    enrollee: &NodeIdentity,
    ap: &NodeIdentity,
    channel: &SimConfig,
    rng_seed: u64,
    opts: &HandshakeOptions,
) -> Result<SessionOutcome, ProtocolError> {
    run_session(authenticator, enrollee, ap, channel, rng_seed, opts).map(|r| r.outcome)
}

/// Re-runs a session and checks it reproduces `expected` record for record.
pub fn replay(
    expected: &Transcript,
    authenticator: &NodeIdentity,
    enrollee: &NodeIdentity,
    ap: &NodeIdentity,
    channel: &SimConfig,
    rng_seed: u64,
    opts: &HandshakeOptions,
) -> Result<SessionReport, ProtocolError> {
    let report = run_session(authenticator, enrollee, ap, channel, rng_seed, opts)?;
    let got = report.outcome.transcript.records();
    let want = expected.records();
    for step in 0..got.len().max(want.len()) {
        let show = |r: Option<&super::TranscriptRecord>| {
            r.map_or_else(|| "<end of transcript>".to_string(), |r| r.to_string())
        };
        let (e, f) = (want.get(step), got.get(step));
        if e != f {
            return Err(ProtocolError::ReplayDivergence {
                step,
                expected: show(e),
                found: show(f),
            });
        }
    }
    Ok(report)
}

fn validate_identities(ids: [&NodeIdentity; 3]) -> Result<(), ProtocolError> {
    let roles = [Role::Authenticator, Role::Enrollee, Role::AccessPoint];
    for (id, role) in ids.iter().zip(roles) {
        if id.role != role {
            return Err(ProtocolError::InvalidParameter(format!(
                "identity {} has role {}, expected {role}",
                id.name_id, id.role
            )));
        }
        if !id.clock_offset.is_finite() {
            return Err(ProtocolError::InvalidParameter("clock offset must be finite".into()));
        }
    }
    if ids[0].mac == ids[1].mac || ids[0].mac == ids[2].mac || ids[1].mac == ids[2].mac {
        return Err(ProtocolError::InvalidParameter("MAC addresses must be distinct".into()));
    }
    Ok(())
}

pub fn run_session(
    authenticator: &NodeIdentity,
    enrollee: &NodeIdentity,
    ap: &NodeIdentity,
    channel: &SimConfig,
    rng_seed: u64,
    opts: &HandshakeOptions,
) -> Result<SessionReport, ProtocolError> {
    validate_identities([authenticator, enrollee, ap])?;
    channel.validate()?;
    if !(1..=MAX_SSID_LEN).contains(&opts.ssid.len()) {
        return Err(ProtocolError::InvalidParameter("SSID must be 1..=32 bytes".into()));
    }
    if opts.max_pass2_attempts < 1 {
        return Err(ProtocolError::InvalidParameter("max_pass2_attempts must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let nonce: [u8; 16] = rng.random();
    let n = channel.n_packets;
    let mut driver = Driver {
        authenticator: Authenticator::new(
            authenticator.clone(),
            opts.approve_enrollee,
            opts.ssid.clone(),
            ap.mac,
            n,
            opts.wait,
            opts.pipeline,
        ),
        enrollee: Enrollee::new(
            enrollee.clone(),
            nonce,
            opts.pipeline,
            opts.max_pass2_attempts,
            opts.tamper_assoc_hash,
        ),
        access_point: AccessPoint::new(ap.clone(), opts.ssid.clone(), n, opts.wait, opts.pipeline),
        channel: channel.clone(),
        faults: opts.faults.clone(),
        pipeline: opts.pipeline,
        rng,
        queue: VecDeque::new(),
        transcript: Transcript::default(),
        eve_trace: None,
        eve: Vec::new(),
        clock_errors: Vec::new(),
    };

    let start = driver.enrollee.start();
    driver.dispatch(Role::Enrollee, start)?;
    let mut steps = 0;
    while let Some(msg) = driver.queue.pop_front() {
        steps += 1;
        if steps > STEP_LIMIT {
            return Err(ProtocolError::Stalled);
        }
        let out = match msg.receiver {
            Role::Authenticator => driver.authenticator.on_message(&msg),
            Role::Enrollee => driver.enrollee.on_message(&msg),
            Role::AccessPoint => driver.access_point.on_message(&msg),
        };
        driver.dispatch(msg.receiver, out)?;
    }
    driver.finish(enrollee)
}

struct Driver {
    authenticator: Authenticator,
    enrollee: Enrollee,
    access_point: AccessPoint,
    channel: SimConfig,
    faults: SccFaults,
    pipeline: PipelineConfig,
    rng: ChaCha8Rng,
    queue: VecDeque<ProtocolMessage>,
    transcript: Transcript,
    eve_trace: Option<(u8, CsiTrace)>,
    eve: Vec<EveAttempt>,
    clock_errors: Vec<f64>,
}

impl Driver {
    fn dispatch(&mut self, _from: Role, outputs: Vec<Output>) -> Result<(), ProtocolError> {
        let mut work: VecDeque<Output> = outputs.into();
        while let Some(o) = work.pop_front() {
            match o {
                Output::Send(msg) => {
                    self.transcript.push(&msg);
                    if let (Role::Enrollee, MessageKind::SketchTransfer(s)) = (msg.sender, &msg.kind) {
                        self.eavesdrop(s);
                    }
                    self.queue.push_back(msg);
                }
                Output::Collect {
                    counterpart,
                    n_packets,
                    wait,
                } => work.extend(self.collect(counterpart, n_packets, wait)?),
            }
        }
        Ok(())
    }

    fn collect(&mut self, counterpart: Role, n: usize, wait: f64) -> Result<Vec<Output>, ProtocolError> {
        let pass = if counterpart == Role::Authenticator { 1 } else { 2 };
        let config = SimConfig {
            seed: self.rng.random(),
            ..self.channel.clone()
        };
        let peer = match counterpart {
            Role::Authenticator => self.authenticator.identity.clone(),
            _ => self.access_point.identity.clone(),
        };
        match scc_collect_with(&peer, &self.enrollee.identity, n, wait, &config, &self.faults) {
            Ok(out) => {
                for m in &out.messages {
                    self.transcript.push(m);
                }
                self.clock_errors.push(out.clock_error);
                self.eve_trace = out.trace_e.map(|t| (pass, t));
                match counterpart {
                    Role::Authenticator => self.authenticator.on_trace(out.trace_a),
                    _ => self.access_point.on_trace(out.trace_a),
                }
                Ok(self.enrollee.on_trace(&out.trace_b))
            }
            Err(e @ ProtocolError::TooFewPackets { .. }) => {
                log::info!("collection failed: {e}");
                Ok(self.enrollee.on_collect_failed(e.to_string()))
            }
            Err(e) => Err(e),
        }
    }

    fn eavesdrop(&mut self, sketch: &Sketch) {
        let Some((pass, trace)) = self.eve_trace.take() else {
            return;
        };
        let reference = self.enrollee.current_bits().cloned();
        self.eve.push(eve_attempt(pass, &trace, sketch, &self.pipeline, reference.as_ref()));
    }

    fn finish(mut self, enrollee: &NodeIdentity) -> Result<SessionReport, ProtocolError> {
        self.authenticator.finish();
        self.access_point.finish();
        let status = match (self.enrollee.state(), self.enrollee.failure()) {
            (EnrolleeState::Joined, _) => SessionStatus::Joined,
            (
                EnrolleeState::Failed { .. },
                Some(
                    FailureDetail::NotApproved
                    | FailureDetail::HashMismatch
                    | FailureDetail::UnknownEnrollee,
                ),
            ) => SessionStatus::Rejected,
            (EnrolleeState::Failed { pass: 1 }, _) => SessionStatus::ReconFailedPass1,
            (EnrolleeState::Failed { .. }, _) => SessionStatus::ReconFailedPass2,
            _ => return Err(ProtocolError::Stalled),
        };
        let passphrase2 = if status == SessionStatus::Joined {
            let mine = self.enrollee.passphrase_2().cloned();
            let theirs = self.access_point.passphrase_2(&enrollee.mac).cloned();
            if mine.is_none() || mine != theirs {
                return Err(ProtocolError::Invariant(
                    "joined without matching passphrase_2 on both sides".into(),
                ));
            }
            mine
        } else {
            None
        };
        let outcome = SessionOutcome {
            status,
            passphrase2,
            transcript: self.transcript,
            pass2_attempts: self.enrollee.pass2_attempts(),
            failure: self.enrollee.failure().cloned(),
            eve: self.eve,
            clock_errors: self.clock_errors,
        };
        Ok(SessionReport {
            outcome,
            authenticator: self.authenticator,
            enrollee: self.enrollee,
            access_point: self.access_point,
        })
    }
}

/// Eve quantizes her own observation over the same packets, fits it to the
/// sketch's length, and runs `recover` against the sketch.
fn eve_attempt(
    pass: u8,
    trace: &CsiTrace,
    sketch: &Sketch,
    cfg: &PipelineConfig,
    reference: Option<&BitString>,
) -> EveAttempt {
    let failed = EveAttempt {
        pass,
        recover_ok: false,
        matches_enrollee: false,
        bit_mismatch: None,
        passphrase: None,
    };
    let Ok(q) = quantize_trace(trace, cfg) else {
        return failed;
    };
    let mut bits = q.bits.into_bits();
    bits.resize(sketch.payload_bits, false);
    let Ok(own) = BitString::new(bits, BitOrigin::Quantized) else {
        return failed;
    };
    let bit_mismatch = reference.map(|r| r.distance(&own) as f64 / r.len().max(1) as f64);
    let (recover_ok, final_bits) = match recover(&own, sketch) {
        Ok(r) => (true, r),
        Err(_) => (false, own),
    };
    EveAttempt {
        pass,
        recover_ok,
        matches_enrollee: reference.is_some_and(|r| r.bits() == final_bits.bits()),
        bit_mismatch,
        passphrase: map_bits(&final_bits).ok(),
    }
}
