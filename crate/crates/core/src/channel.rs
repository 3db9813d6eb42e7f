//! Synthetic reciprocal CSI for two legitimate nodes and an optional eavesdropper.
//!
//! Every packet draws a latent [`ChannelParams`] around [`ChannelParams::REFERENCE`].
//! Node `A` and node `B` observe `base + spread ⊙ (ρ·z_shared + (1 − ρ)·z_node)`
//! where `ρ` is the configured correlation, then add Gaussian phase noise. The
//! eavesdropper observes the per-subcarrier product of the noiseless shared
//! channel and an independent Bob–Eve channel.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::phase_model::{self, ChannelParams, PhaseVector};

pub const DEFAULT_N_RX: usize = 3;
pub const DEFAULT_N_TX: usize = 3;
pub const DEFAULT_N_SC: usize = 56;

const STREAM_PARAMS: u64 = 1;
const STREAM_RTT: u64 = 2;
const STREAM_NOISE_A: u64 = 3;
const STREAM_NOISE_B: u64 = 4;
const STREAM_EVE: u64 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("phase model is singular at subcarrier {k}")]
    SingularModel { k: usize },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("malformed CSI trace at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ChannelError {
    fn from(e: std::io::Error) -> Self {
        ChannelError::Io(e.to_string())
    }
}

/// Complex channel matrix indexed `[rx][tx][subcarrier]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    n_rx: usize,
    n_tx: usize,
    n_sc: usize,
    entries: Vec<Complex64>,
}

impl CsiMatrix {
    pub fn new(
        n_rx: usize,
        n_tx: usize,
        n_sc: usize,
        entries: Vec<Complex64>,
    ) -> Result<Self, ChannelError> {
        if entries.len() != n_rx * n_tx * n_sc {
            return Err(ChannelError::InvalidConfig(format!(
                "expected {} entries for {n_rx}x{n_tx}x{n_sc}, got {}",
                n_rx * n_tx * n_sc,
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(ChannelError::InvalidConfig("non-finite CSI entry".into()));
        }
        Ok(Self {
            n_rx,
            n_tx,
            n_sc,
            entries,
        })
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    fn offset(&self, rx: usize, tx: usize, sc: usize) -> usize {
        (rx * self.n_tx + tx) * self.n_sc + sc
    }

    pub fn get(&self, rx: usize, tx: usize, sc: usize) -> Complex64 {
        self.entries[self.offset(rx, tx, sc)]
    }

    /// Entries of one antenna path across all subcarriers.
    pub fn path(&self, rx: usize, tx: usize) -> Option<&[Complex64]> {
        if rx >= self.n_rx || tx >= self.n_tx {
            return None;
        }
        let start = self.offset(rx, tx, 0);
        Some(&self.entries[start..start + self.n_sc])
    }

    /// Keeps only the first `n_rx` receive chains, as a driver does when link
    /// adaptation switches antennas off.
    pub fn truncate_rx(&self, n_rx: usize) -> CsiMatrix {
        let n_rx = n_rx.min(self.n_rx);
        let len = n_rx * self.n_tx * self.n_sc;
        CsiMatrix {
            n_rx,
            n_tx: self.n_tx,
            n_sc: self.n_sc,
            entries: self.entries[..len].to_vec(),
        }
    }

    /// Elementwise product, the composition of two cascaded channels.
    pub fn hadamard(&self, other: &CsiMatrix) -> Option<CsiMatrix> {
        if (self.n_rx, self.n_tx, self.n_sc) != (other.n_rx, other.n_tx, other.n_sc) {
            return None;
        }
        Some(CsiMatrix {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            n_sc: self.n_sc,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiPacket {
    pub packet_index: u64,
    /// Seconds.
    pub timestamp: f64,
    /// Seconds.
    pub rtt: f64,
    pub csi: CsiMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiTrace {
    pub node_id: String,
    pub packets: Vec<CsiPacket>,
}

impl CsiTrace {
    pub fn new(node_id: impl Into<String>, packets: Vec<CsiPacket>) -> Result<Self, ChannelError> {
        let trace = Self {
            node_id: node_id.into(),
            packets,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for w in self.packets.windows(2) {
            if w[1].packet_index <= w[0].packet_index {
                return Err(ChannelError::InvalidConfig(
                    "packet_index must be strictly increasing".into(),
                ));
            }
            if w[1].timestamp < w[0].timestamp {
                return Err(ChannelError::InvalidConfig(
                    "timestamps must be non-decreasing".into(),
                ));
            }
        }
        if self.packets.iter().any(|p| !(p.rtt > 0.0)) {
            return Err(ChannelError::InvalidConfig("rtt must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn rtts(&self) -> Vec<f64> {
        self.packets.iter().map(|p| p.rtt).collect()
    }

    /// Mean spacing between consecutive timestamps, `None` with fewer than two
    /// packets or a zero span.
    pub fn mean_packet_interval(&self) -> Option<f64> {
        let (first, last) = (self.packets.first()?, self.packets.last()?);
        if self.packets.len() < 2 {
            return None;
        }
        let span = last.timestamp - first.timestamp;
        (span > 0.0).then(|| span / (self.packets.len() - 1) as f64)
    }

    /// Unwrapped phase of one antenna path for packet `i`.
    pub fn path_phase(&self, i: usize, rx: usize, tx: usize) -> Option<Vec<f64>> {
        let path = self.packets.get(i)?.csi.path(rx, tx)?;
        let raw: Vec<f64> = path.iter().map(|c| c.arg()).collect();
        Some(phase_model::unwrap_phase(&raw))
    }
}

/// Per-parameter standard deviations of the latent per-packet variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentSpread(pub ChannelParams);

impl Default for LatentSpread {
    fn default() -> Self {
        LatentSpread(ChannelParams::new(0.08, 0.0005, 0.004, 2e-6, 0.04))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Number of probe packets.
    pub n_packets: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_sc: usize,
    /// Reciprocity strength in `[0, 1]`; stands in for proximity.
    pub correlation: f64,
    /// Standard deviation of additive phase noise, radians.
    pub noise_sigma: f64,
    /// Seconds.
    pub rtt_mean: f64,
    /// Half-width of the uniform RTT jitter, seconds.
    pub rtt_jitter: f64,
    /// Seconds between probe packets.
    pub packet_interval: f64,
    /// Subcarrier spacing factor of the phase model.
    pub f_s: f64,
    pub spread: LatentSpread,
    pub eve_enabled: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_packets: 200,
            n_rx: DEFAULT_N_RX,
            n_tx: DEFAULT_N_TX,
            n_sc: DEFAULT_N_SC,
            correlation: 1.0,
            noise_sigma: 0.02,
            rtt_mean: 2.0e-3,
            rtt_jitter: 0.5e-3,
            packet_interval: 1.0e-3,
            f_s: 1.0,
            spread: LatentSpread::default(),
            eve_enabled: false,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidConfig(m.to_string()));
        if self.n_packets < 1 {
            return bad("n_packets must be >= 1");
        }
        if self.n_rx < 1 || self.n_tx < 1 || self.n_sc < 1 {
            return bad("antenna and subcarrier counts must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad("correlation must lie in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.rtt_mean > 0.0) || !self.rtt_mean.is_finite() {
            return bad("rtt_mean must be > 0");
        }
        if !(self.rtt_jitter >= 0.0) || self.rtt_jitter >= self.rtt_mean {
            return bad("rtt_jitter must lie in [0, rtt_mean)");
        }
        if !(self.packet_interval > 0.0) {
            return bad("packet_interval must be > 0");
        }
        if !(self.f_s > 0.0) || !self.f_s.is_finite() {
            return bad("f_s must be > 0");
        }
        if !self.spread.0.is_finite() {
            return bad("latent spread must be finite");
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Evaluates the phase model on subcarriers `1..=n_sc`.
pub fn synth_phase(params: &ChannelParams, n_sc: usize, f_s: f64) -> Result<PhaseVector, ChannelError> {
    if n_sc < 1 || !(f_s > 0.0) {
        return Err(ChannelError::InvalidConfig(
            "synth_phase needs n_sc >= 1 and f_s > 0".into(),
        ));
    }
    let values = (1..=n_sc)
        .map(|k| phase_model::model_value(params, k, f_s).ok_or(ChannelError::SingularModel { k }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PhaseVector::new(values).expect("model values are finite"))
}

/// RTT samples `rtt_mean ± U(0, rtt_jitter)`, one per packet.
pub fn simulate_rtt(config: &SimConfig) -> Result<Vec<f64>, ChannelError> {
    config.validate()?;
    let mut rng = config.rng(STREAM_RTT);
    Ok((0..config.n_packets)
        .map(|_| {
            if config.rtt_jitter == 0.0 {
                config.rtt_mean
            } else {
                config.rtt_mean + rng.random_range(-config.rtt_jitter..=config.rtt_jitter)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub trace_a: CsiTrace,
    pub trace_b: CsiTrace,
    pub trace_e: Option<CsiTrace>,
}

/// Internal draws of one packet, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketLatents {
    /// Noiseless reciprocal channel parameters.
    pub shared: ChannelParams,
    pub node_a: ChannelParams,
    pub node_b: ChannelParams,
    /// `(H_AB, H_BE)` whose elementwise product is Eve's observation.
    pub eve_factors: Option<(CsiMatrix, CsiMatrix)>,
}

pub fn generate_channel_pair(config: &SimConfig) -> Result<ChannelPair, ChannelError> {
    generate_channel_pair_detailed(config).map(|(pair, _)| pair)
}

/// Same as [`generate_channel_pair`] but also returns the per-packet latents.
pub fn generate_channel_pair_detailed(
    config: &SimConfig,
) -> Result<(ChannelPair, Vec<PacketLatents>), ChannelError> {
    config.validate()?;
    let rtts = simulate_rtt(config)?;
    let mut param_rng = config.rng(STREAM_PARAMS);
    let mut noise_a = config.rng(STREAM_NOISE_A);
    let mut noise_b = config.rng(STREAM_NOISE_B);
    let mut eve_rng = config.rng(STREAM_EVE);
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");

    let rho = config.correlation;
    let base = ChannelParams::REFERENCE.to_array();
    let spread = config.spread.0.to_array();
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 5] {
        std::array::from_fn(|_| StandardNormal.sample(rng))
    };
    let compose = |z: [f64; 5]| -> ChannelParams {
        ChannelParams::from_array(std::array::from_fn(|i| base[i] + spread[i] * z[i]))
    };

    let mut packets_a = Vec::with_capacity(config.n_packets);
    let mut packets_b = Vec::with_capacity(config.n_packets);
    let mut packets_e = Vec::new();
    let mut latents = Vec::with_capacity(config.n_packets);

    for (i, &rtt) in rtts.iter().enumerate() {
        let z_shared = draw(&mut param_rng);
        let z_a = draw(&mut param_rng);
        let z_b = draw(&mut param_rng);
        let mix = |z: [f64; 5]| -> [f64; 5] {
            std::array::from_fn(|j| rho * z_shared[j] + (1.0 - rho) * z[j])
        };
        let shared = compose(z_shared);
        let node_a = compose(mix(z_a));
        let node_b = compose(mix(z_b));

        let csi_a = channel_matrix(config, &node_a, |_| noise.sample(&mut noise_a))?;
        let csi_b = channel_matrix(config, &node_b, |_| noise.sample(&mut noise_b))?;

        let eve_factors = if config.eve_enabled {
            let mut be = compose(draw(&mut eve_rng));
            be.beta = eve_rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let h_ab = channel_matrix(config, &shared, |_| 0.0)?;
            let h_be = channel_matrix(config, &be, |_| noise.sample(&mut eve_rng))?;
            let h_e = h_ab.hadamard(&h_be).expect("same shape");
            packets_e.push(packet(i, config, rtt, h_e));
            Some((h_ab, h_be))
        } else {
            None
        };

        packets_a.push(packet(i, config, rtt, csi_a));
        packets_b.push(packet(i, config, rtt, csi_b));
        latents.push(PacketLatents {
            shared,
            node_a,
            node_b,
            eve_factors,
        });
    }

    let pair = ChannelPair {
        trace_a: CsiTrace::new("A", packets_a)?,
        trace_b: CsiTrace::new("B", packets_b)?,
        trace_e: if config.eve_enabled {
            Some(CsiTrace::new("E", packets_e)?)
        } else {
            None
        },
    };
    Ok((pair, latents))
}

fn packet(i: usize, config: &SimConfig, rtt: f64, csi: CsiMatrix) -> CsiPacket {
    CsiPacket {
        packet_index: i as u64,
        timestamp: i as f64 * config.packet_interval,
        rtt,
        csi,
    }
}

/// Builds a unit-amplitude matrix; path `(rx, tx)` shifts β and ε_θ by a fixed
/// per-path offset so the antenna paths are distinguishable.
fn channel_matrix(
    config: &SimConfig,
    params: &ChannelParams,
    mut noise: impl FnMut(usize) -> f64,
) -> Result<CsiMatrix, ChannelError> {
    let mut entries = Vec::with_capacity(config.n_rx * config.n_tx * config.n_sc);
    for rx in 0..config.n_rx {
        for tx in 0..config.n_tx {
            let path = (rx * config.n_tx + tx) as f64;
            let p = ChannelParams {
                beta: params.beta + 0.1 * path,
                eps_theta: params.eps_theta + 0.002 * path,
                ..*params
            };
            let phases = synth_phase(&p, config.n_sc, config.f_s)?;
            for (k, &phi) in phases.values().iter().enumerate() {
                entries.push(Complex64::from_polar(1.0, phi + noise(k)));
            }
        }
    }
    CsiMatrix::new(config.n_rx, config.n_tx, config.n_sc, entries)
}

pub const TRACE_MAGIC: &str = "COMPASS-CSI";
pub const TRACE_VERSION: &str = "v1";

/// Writes a trace in the line-delimited `COMPASS-CSI v1` text format.
///
/// All packets must share one matrix shape.
pub fn write_trace<W: Write>(trace: &CsiTrace, mut out: W) -> Result<(), ChannelError> {
    let (n_rx, n_tx, n_sc) = trace
        .packets
        .first()
        .map(|p| (p.csi.n_rx, p.csi.n_tx, p.csi.n_sc))
        .unwrap_or((DEFAULT_N_RX, DEFAULT_N_TX, DEFAULT_N_SC));
    writeln!(out, "{TRACE_MAGIC} {TRACE_VERSION} {n_rx} {n_tx} {n_sc}")?;
    for p in &trace.packets {
        if (p.csi.n_rx, p.csi.n_tx, p.csi.n_sc) != (n_rx, n_tx, n_sc) {
            return Err(ChannelError::InvalidConfig(format!(
                "packet {} has a different matrix shape",
                p.packet_index
            )));
        }
        let mut line = format!("{} {} {}", p.packet_index, p.timestamp, p.rtt);
        for c in &p.csi.entries {
            line.push_str(&format!(" {} {}", c.re, c.im));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R, node_id: &str) -> Result<CsiTrace, ChannelError> {
    let mut lines = input.lines().enumerate();
    let fmt = |line: usize, reason: &str| ChannelError::Format {
        line,
        reason: reason.to_string(),
    };
    let (_, header) = lines.next().ok_or_else(|| fmt(1, "missing header"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != TRACE_MAGIC || fields[1] != TRACE_VERSION {
        return Err(fmt(1, "expected `COMPASS-CSI v1 n_rx n_tx n_sc`"));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| fmt(1, "bad dimension"));
    let (n_rx, n_tx, n_sc) = (dim(fields[2])?, dim(fields[3])?, dim(fields[4])?);
    let n_entries = n_rx * n_tx * n_sc;

    let mut packets = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 + 2 * n_entries {
            return Err(fmt(lineno, "wrong number of fields"));
        }
        let packet_index = tok[0]
            .parse::<u64>()
            .map_err(|_| fmt(lineno, "bad packet_index"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| fmt(lineno, "bad number"));
        let timestamp = num(tok[1])?;
        let rtt = num(tok[2])?;
        let entries = tok[3..]
            .chunks(2)
            .map(|c| Ok(Complex64::new(num(c[0])?, num(c[1])?)))
            .collect::<Result<Vec<_>, ChannelError>>()?;
        let csi = CsiMatrix::new(n_rx, n_tx, n_sc, entries).map_err(|e| fmt(lineno, &e.to_string()))?;
        packets.push(CsiPacket {
            packet_index,
            timestamp,
            rtt,
            csi,
        });
    }
    CsiTrace::new(node_id, packets).map_err(|e| fmt(0, &e.to_string()))
}
