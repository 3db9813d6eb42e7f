//! Synchronized CSI collection: offset exchange, probe burst, and alignment of
//! both sides' traces to a common packet set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::message::{MessageKind, NodeIdentity, ProtocolMessage};
use super::ProtocolError;
use crate::channel::{generate_channel_pair, CsiPacket, CsiTrace, SimConfig};

/// Fewest aligned packets a collection may yield.
pub const MIN_ALIGNED_PACKETS: usize = 3;
/// Receive-antenna count of an injected reduced report.
pub const REDUCED_N_RX: usize = 2;

const STREAM_CLOCK: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

/// Fault injection: each `(side, packet_index)` pair makes that side report
/// only `REDUCED_N_RX × n_tx` antenna combinations for the packet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SccFaults {
    pub reduced_reports: Vec<(Side, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SccOutput {
    pub trace_a: CsiTrace,
    pub trace_b: CsiTrace,
    /// Eve's observation over the same aligned packet set.
    pub trace_e: Option<CsiTrace>,
    /// Offset-exchange and probe messages, in order.
    pub messages: Vec<ProtocolMessage>,
    /// B's estimate of `clock(a) − clock(b)`.
    pub offset_estimate: f64,
    /// Residual `|estimate − true offset|`.
    pub clock_error: f64,
    /// Packets dropped on both sides for an incomplete antenna report.
    pub dropped: Vec<u64>,
}

pub fn scc_collect(
    a: &NodeIdentity,
    b: &NodeIdentity,
    n: usize,
    t_d: f64,
    channel: &SimConfig,
) -> Result<SccOutput, ProtocolError> {
    scc_collect_with(a, b, n, t_d, channel, &SccFaults::default())
}

/// `b` aligns its clock to `a`, then both record `n` packets starting `t_d`
/// seconds later. Timestamps of both traces are expressed in `a`'s clock.
pub fn scc_collect_with(
    a: &NodeIdentity,
    b: &NodeIdentity,
    n: usize,
    t_d: f64,
    channel: &SimConfig,
    faults: &SccFaults,
) -> Result<SccOutput, ProtocolError> {
    if !(t_d >= 0.0) || !t_d.is_finite() {
        return Err(ProtocolError::InvalidParameter("t_d must be >= 0".into()));
    }
    let config = SimConfig {
        n_packets: n,
        ..channel.clone()
    };
    config.validate()?;

    // One two-way offset exchange; the path asymmetry is bounded by a quarter
    // of the RTT jitter.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STREAM_CLOCK);
    let q = config.rtt_jitter / 4.0;
    let asym = if q > 0.0 { rng.random_range(-q..=q) } else { 0.0 };
    let d_fwd = config.rtt_mean / 2.0 + asym;
    let d_back = config.rtt_mean / 2.0 - asym;
    let t1 = b.clock_offset;
    let t2 = d_fwd + a.clock_offset;
    let t3 = t2;
    let t4 = d_fwd + d_back + b.clock_offset;
    let offset_estimate = ((t2 - t1) + (t3 - t4)) / 2.0;
    let clock_error = (offset_estimate - (a.clock_offset - b.clock_offset)).abs();

    let mut messages = vec![
        ProtocolMessage::new(
            b.role,
            a.role,
            MessageKind::ClockSync {
                origin: t1,
                receive: 0.0,
                transmit: 0.0,
            },
        ),
        ProtocolMessage::new(
            a.role,
            b.role,
            MessageKind::ClockSync {
                origin: t1,
                receive: t2,
                transmit: t3,
            },
        ),
    ];
    messages.extend((0..n as u64).map(|i| {
        ProtocolMessage::new(b.role, a.role, MessageKind::Probe { packet_index: i })
    }));

    let pair = generate_channel_pair(&config)?;
    let start = d_fwd + d_back + t_d;
    let expected = config.n_rx * config.n_tx;
    let reduced = |side: Side, idx: u64| faults.reduced_reports.contains(&(side, idx));

    let mut kept_a = Vec::with_capacity(n);
    let mut kept_b = Vec::with_capacity(n);
    let mut kept_e = Vec::new();
    let mut dropped = Vec::new();
    let mut eve_packets = pair.trace_e.map(|t| t.packets.into_iter());
    for (mut pa, mut pb) in pair.trace_a.packets.into_iter().zip(pair.trace_b.packets) {
        let pe = eve_packets.as_mut().and_then(|it| it.next());
        let idx = pa.packet_index;
        let global = start + idx as f64 * config.packet_interval;
        if reduced(Side::A, idx) {
            pa.csi = pa.csi.truncate_rx(REDUCED_N_RX.min(config.n_rx));
        }
        if reduced(Side::B, idx) {
            pb.csi = pb.csi.truncate_rx(REDUCED_N_RX.min(config.n_rx));
        }
        let complete = |p: &CsiPacket| p.csi.n_rx() * p.csi.n_tx() == expected;
        if !complete(&pa) || !complete(&pb) {
            log::debug!("packet {idx} dropped: incomplete antenna report");
            dropped.push(idx);
            continue;
        }
        pa.timestamp = global + a.clock_offset;
        pb.timestamp = global + b.clock_offset + offset_estimate;
        if let Some(mut pe) = pe {
            pe.timestamp = global + a.clock_offset;
            kept_e.push(pe);
        }
        kept_a.push(pa);
        kept_b.push(pb);
    }

    if kept_a.len() < MIN_ALIGNED_PACKETS {
        return Err(ProtocolError::TooFewPackets {
            aligned: kept_a.len(),
        });
    }
    Ok(SccOutput {
        trace_a: CsiTrace::new(pair.trace_a.node_id, kept_a)?,
        trace_b: CsiTrace::new(pair.trace_b.node_id, kept_b)?,
        trace_e: if config.eve_enabled {
            Some(CsiTrace::new("E", kept_e)?)
        } else {
            None
        },
        messages,
        offset_estimate,
        clock_error,
        dropped,
    })
}
