//! Syndrome-based secure sketch over the binary BCH code of length 127.
//!
//! Bit strings are zero-padded to a multiple of 56, each 56-bit block is placed
//! in positions `0..56` of a 127-bit word, and the sketch is the list of block
//! syndromes. Recovery XORs the other party's block syndromes with the sketch,
//! decodes the difference to error positions, and flips them.

pub mod bch;
pub mod gf;

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::mow::{BitOrigin, BitString};
pub use bch::{bch_syndrome, syndrome_decode, DecodeError, Syndrome, CODE_LEN, T};
pub use gf::Gf128;

/// Payload bits carried per 127-bit word.
pub const BLOCK_PAYLOAD_BITS: usize = 56;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BchConfig {
    pub m: u32,
    pub n: usize,
    pub t: usize,
    pub block_payload_bits: usize,
    pub primitive_poly: u16,
}

pub const BCH: BchConfig = BchConfig {
    m: gf::FIELD_BITS,
    n: CODE_LEN,
    t: T,
    block_payload_bits: BLOCK_PAYLOAD_BITS,
    primitive_poly: gf::PRIMITIVE_POLY,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SketchError {
    #[error("input has {bits} bits ({blocks} blocks) but the sketch has {expected} blocks")]
    BlockCountMismatch {
        bits: usize,
        blocks: usize,
        expected: usize,
    },
    #[error("reconciliation failed in block {block}: {reason}")]
    ReconciliationFailure { block: usize, reason: String },
    #[error("malformed sketch at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SketchError {
    fn from(e: std::io::Error) -> Self {
        SketchError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    pub blocks: Vec<Syndrome>,
    /// Length of the sketched string before padding.
    pub payload_bits: usize,
}

impl Sketch {
    /// Size of the helper string in bits (`t·m` per block).
    pub fn size_bits(&self) -> usize {
        self.blocks.len() * BCH.t * BCH.m as usize
    }
}

/// Block count after padding `len` bits to a multiple of 56.
pub fn block_count(len: usize) -> usize {
    len.div_ceil(BLOCK_PAYLOAD_BITS)
}

/// Packs block `i` of `bits` (zero-padded) into positions `0..56` of a word.
fn block_word(bits: &[bool], i: usize) -> u128 {
    let start = i * BLOCK_PAYLOAD_BITS;
    bits.iter()
        .skip(start)
        .take(BLOCK_PAYLOAD_BITS)
        .enumerate()
        .fold(0u128, |w, (j, &b)| if b { w | 1u128 << j } else { w })
}

pub fn sketch(q: &BitString) -> Sketch {
    let bits = q.bits();
    Sketch {
        blocks: (0..block_count(bits.len()))
            .map(|i| bch_syndrome(block_word(bits, i)))
            .collect(),
        payload_bits: bits.len(),
    }
}

/// Corrects `q_other` towards the sketched string; output has the sketch's
/// `payload_bits` length.
pub fn recover(q_other: &BitString, s: &Sketch) -> Result<BitString, SketchError> {
    let bits = q_other.bits();
    let blocks = block_count(bits.len());
    if blocks != s.blocks.len() {
        return Err(SketchError::BlockCountMismatch {
            bits: bits.len(),
            blocks,
            expected: s.blocks.len(),
        });
    }
    let mut out = Vec::with_capacity(blocks * BLOCK_PAYLOAD_BITS);
    for (i, target) in s.blocks.iter().enumerate() {
        let word = block_word(bits, i);
        let delta = bch_syndrome(word).xor(target);
        let positions = syndrome_decode(&delta).map_err(|e| SketchError::ReconciliationFailure {
            block: i,
            reason: e.to_string(),
        })?;
        if let Some(&p) = positions.iter().find(|&&p| p >= BLOCK_PAYLOAD_BITS) {
            return Err(SketchError::ReconciliationFailure {
                block: i,
                reason: format!("decoded error at position {p}, outside the payload region"),
            });
        }
        let fixed = positions.iter().fold(word, |w, &p| w ^ 1u128 << p);
        out.extend((0..BLOCK_PAYLOAD_BITS).map(|j| fixed >> j & 1 == 1));
    }
    if out[s.payload_bits..].iter().any(|&b| b) {
        return Err(SketchError::ReconciliationFailure {
            block: blocks - 1,
            reason: "padding bits recovered as non-zero".into(),
        });
    }
    out.truncate(s.payload_bits);
    BitString::new(out, BitOrigin::Reconciled).map_err(|_| SketchError::ReconciliationFailure {
        block: 0,
        reason: "empty result".into(),
    })
}

/// Information-leakage accounting for a sketch of `payload_bits` input bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageReport {
    pub blocks: usize,
    /// Total helper-string size, `blocks · t · m`.
    pub sketch_bits: usize,
    /// `t · log2(n + 1)` per block.
    pub syndrome_bound_per_block: f64,
    pub syndrome_bound_total: f64,
    /// Payload-size bound per block (the block can leak no more than it holds).
    pub payload_bound_per_block: usize,
}

pub fn leakage_report(payload_bits: usize) -> LeakageReport {
    let blocks = block_count(payload_bits);
    let per_block = BCH.t as f64 * ((BCH.n + 1) as f64).log2();
    LeakageReport {
        blocks,
        sketch_bits: blocks * BCH.t * BCH.m as usize,
        syndrome_bound_per_block: per_block,
        syndrome_bound_total: per_block * blocks as f64,
        payload_bound_per_block: BLOCK_PAYLOAD_BITS,
    }
}

pub const SKETCH_MAGIC: &str = "COMPASS-SS";
pub const SKETCH_VERSION: &str = "v1";

/// `COMPASS-SS v1 payload_bits n_blocks`, then one line of 9 integers per block.
pub fn write_sketch<W: Write>(s: &Sketch, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SKETCH_MAGIC} {SKETCH_VERSION} {} {}", s.payload_bits, s.blocks.len())?;
    for syn in &s.blocks {
        let line: Vec<String> = syn.0.iter().map(|g| g.value().to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_sketch<R: BufRead>(input: R) -> Result<Sketch, SketchError> {
    let fmt = |line: usize, reason: &str| SketchError::Format {
        line,
        reason: reason.into(),
    };
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| fmt(1, "missing header"))??;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 || h[0] != SKETCH_MAGIC || h[1] != SKETCH_VERSION {
        return Err(fmt(1, "expected `COMPASS-SS v1 payload_bits n_blocks`"));
    }
    let payload_bits: usize = h[2].parse().map_err(|_| fmt(1, "bad payload_bits"))?;
    let n_blocks: usize = h[3].parse().map_err(|_| fmt(1, "bad n_blocks"))?;
    if payload_bits == 0 || block_count(payload_bits) != n_blocks {
        return Err(fmt(1, "payload_bits and n_blocks disagree"));
    }
    let mut blocks = Vec::with_capacity(n_blocks);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let vals = line
            .split_whitespace()
            .map(|t| {
                t.parse::<u8>()
                    .ok()
                    .and_then(Gf128::new)
                    .ok_or_else(|| fmt(lineno, "syndrome values must be integers in [0, 127]"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let arr: [Gf128; T] = vals
            .try_into()
            .map_err(|_| fmt(lineno, "expected 9 syndrome values"))?;
        blocks.push(Syndrome(arr));
    }
    if blocks.len() != n_blocks {
        return Err(fmt(0, "block count differs from header"));
    }
    Ok(Sketch {
        blocks,
        payload_bits,
    })
}
