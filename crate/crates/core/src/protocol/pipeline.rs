//! Per-side key-agreement pipeline: CSI trace → ε_g series → bits → sketch or
//! reconciled bits.

use thiserror::Error;

use crate::channel::CsiTrace;
use crate::dapper::{extract_eps_g_with, DapperError, ExtractOptions};
use crate::mow::{quantize, window_size, BitString, QuantizeError};
use crate::pinsketch::{self, Sketch, SketchError};
use crate::ChannelParams;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("parameter extraction failed: {0}")]
    Extract(#[from] DapperError),
    #[error("quantization failed: {0}")]
    Quantize(#[from] QuantizeError),
    #[error("reconciliation failed: {0}")]
    Reconcile(#[from] SketchError),
    #[error("passphrase mapping failed: {0}")]
    Mapping(String),
    #[error("trace has fewer than two distinct timestamps")]
    NoTimeUnit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub init: ChannelParams,
    pub extract: ExtractOptions,
    /// Quantizer time unit in seconds; `None` uses the trace's mean packet
    /// interval.
    pub time_unit: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            init: ChannelParams::REFERENCE,
            extract: ExtractOptions::default(),
            time_unit: None,
        }
    }
}

/// Bits derived from one side's trace, with the window size that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTrace {
    pub bits: BitString,
    pub window: usize,
    pub dropped: Vec<u64>,
}

pub fn quantize_trace(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<QuantizedTrace, PipelineError> {
    let series = extract_eps_g_with(trace, &cfg.init, &cfg.extract)?;
    let unit = match cfg.time_unit {
        Some(u) => u,
        None => trace.mean_packet_interval().ok_or(PipelineError::NoTimeUnit)?,
    };
    let window = window_size(&trace.rtts(), unit)?;
    let bits = quantize(&series, window)?;
    Ok(QuantizedTrace {
        bits,
        window,
        dropped: series.dropped,
    })
}

/// Sketching side: quantize and publish the helper string.
pub fn sketch_side(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<(QuantizedTrace, Sketch), PipelineError> {
    let q = quantize_trace(trace, cfg)?;
    let s = pinsketch::sketch(&q.bits);
    Ok((q, s))
}

/// Reconciling side: quantize and correct towards the sketched string.
pub fn recover_side(
    trace: &CsiTrace,
    sketch: &Sketch,
    cfg: &PipelineConfig,
) -> Result<(QuantizedTrace, BitString), PipelineError> {
    let q = quantize_trace(trace, cfg)?;
    let r = pinsketch::recover(&q.bits, sketch)?;
    Ok((q, r))
}
