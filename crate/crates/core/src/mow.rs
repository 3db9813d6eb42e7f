//! Moving-window quantizer.
//!
//! The series is cut into consecutive windows of `w` samples; a sample becomes
//! `1` when it is at least its window's mean. A short trailing window is padded
//! with `0` bits up to `w`, and its mean covers the real samples only.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dapper::ParameterSeries;

/// Smallest admissible window.
pub const MIN_WINDOW: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizeError {
    #[error("no RTT samples")]
    EmptyRtt,
    #[error("RTT samples and time unit must be positive and finite")]
    InvalidRtt,
    #[error("window size {0} is below the minimum of 3")]
    WindowTooSmall(usize),
    #[error("series is empty")]
    EmptySeries,
    #[error("bit string must be non-empty")]
    EmptyBits,
    #[error("invalid bit character {0:?}")]
    InvalidBit(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitOrigin {
    Quantized,
    Reconciled,
}

/// Non-empty ordered bit sequence. Text form is ASCII `0`/`1`, first bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    bits: Vec<bool>,
    origin: BitOrigin,
}

impl BitString {
    pub fn new(bits: Vec<bool>, origin: BitOrigin) -> Result<Self, QuantizeError> {
        if bits.is_empty() {
            return Err(QuantizeError::EmptyBits);
        }
        Ok(Self { bits, origin })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn origin(&self) -> BitOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn with_origin(mut self, origin: BitOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    /// Hamming distance over the common prefix plus the length difference.
    pub fn distance(&self, other: &BitString) -> usize {
        let common = self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count();
        common + self.len().abs_diff(other.len())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl FromStr for BitString {
    type Err = QuantizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(QuantizeError::InvalidBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        BitString::new(bits, BitOrigin::Quantized)
    }
}

/// `max(3, ceil(mean(rtts) / time_unit))`.
pub fn window_size(rtts: &[f64], time_unit: f64) -> Result<usize, QuantizeError> {
    if rtts.is_empty() {
        return Err(QuantizeError::EmptyRtt);
    }
    if !(time_unit > 0.0) || rtts.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(QuantizeError::InvalidRtt);
    }
    let mean = rtts.iter().sum::<f64>() / rtts.len() as f64;
    let w = (mean / time_unit).ceil();
    if !w.is_finite() {
        return Err(QuantizeError::InvalidRtt);
    }
    Ok((w as usize).max(MIN_WINDOW))
}

pub fn quantize(series: &ParameterSeries, w: usize) -> Result<BitString, QuantizeError> {
    quantize_values(&series.values(), w)
}

pub fn quantize_values(values: &[f64], w: usize) -> Result<BitString, QuantizeError> {
    if w < MIN_WINDOW {
        return Err(QuantizeError::WindowTooSmall(w));
    }
    if values.is_empty() {
        return Err(QuantizeError::EmptySeries);
    }
    let mut bits = Vec::with_capacity(values.len().div_ceil(w) * w);
    for window in values.chunks(w) {
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        bits.extend(window.iter().map(|&v| v >= mean));
        bits.extend(std::iter::repeat_n(false, w - window.len()));
    }
    BitString::new(bits, BitOrigin::Quantized)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(values: &[f64], w: usize) -> String {
        quantize_values(values, w).unwrap().to_string()
    }

    #[test]
    fn window_size_examples() {
        assert_eq!(window_size(&[2.0, 2.2], 1.0), Ok(3));
        assert_eq!(window_size(&[1.0, 1.0], 1.0), Ok(3));
        assert_eq!(window_size(&[6.3], 1.0), Ok(7));
        assert_eq!(window_size(&[6.3e-3], 1e-3), Ok(7));
        assert_eq!(window_size(&[], 1.0), Err(QuantizeError::EmptyRtt));
        assert_eq!(window_size(&[1.0, 0.0], 1.0), Err(QuantizeError::InvalidRtt));
        assert_eq!(window_size(&[1.0], 0.0), Err(QuantizeError::InvalidRtt));
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(q(&[1.0, 2.0, 3.0], 3), "011");
        assert_eq!(q(&[5.0, 5.0, 5.0], 3), "111");
        assert_eq!(q(&[1.0, 2.0, 3.0, 9.0], 3), "011100");
    }

    #[test]
    fn quantize_preconditions() {
        assert_eq!(
            quantize_values(&[1.0], 2),
            Err(QuantizeError::WindowTooSmall(2))
        );
        assert_eq!(quantize_values(&[], 3), Err(QuantizeError::EmptySeries));
    }

    #[test]
    fn bit_text_round_trip() {
        let b: BitString = "0110001".parse().unwrap();
        assert_eq!(b.to_string(), "0110001");
        assert_eq!("01x".parse::<BitString>(), Err(QuantizeError::InvalidBit('x')));
        assert_eq!("".parse::<BitString>(), Err(QuantizeError::EmptyBits));
    }
}
