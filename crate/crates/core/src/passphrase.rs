//! Reconciled bits to printable passphrase, passphrase to PSK, and a simple
//! brute-force strength estimate.
//!
//! Mapping, one byte at a time starting from the most significant bit:
//!
//! | byte          | output                    |
//! |---------------|---------------------------|
//! | `0x00..=0x20` | two uppercase hex digits  |
//! | `0x21..=0x7E` | the ASCII character       |
//! | `0x7F`        | two uppercase hex digits  |
//! | `0x80..=0xFF` | two lowercase hex digits  |
//!
//! The mapping is not injective on byte sequences: `[0x30, 0x41]` and `[0x0A]`
//! both produce `"0A"`, because a remapped byte's hex digits are themselves
//! printable characters.

use std::collections::BTreeSet;
use std::fmt;

use pbkdf2::pbkdf2_hmac;
use sha1::Sha1;
use thiserror::Error;

use crate::mow::BitString;

/// IEEE 802.11 passphrase-to-PSK parameters for PBKDF2-HMAC-SHA1.
pub const PSK_ITERATIONS: u32 = 4096;
pub const PSK_LEN: usize = 32;
pub const MAX_SSID_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PassphraseError {
    #[error("fewer than 8 bits to map")]
    NotEnoughBits,
    #[error("passphrase must be non-empty printable ASCII (0x21..=0x7E)")]
    InvalidPassphrase,
    #[error("SSID must be 1..=32 bytes, got {0}")]
    InvalidSsid(usize),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Passphrase(String);

impl Passphrase {
    pub fn new(text: impl Into<String>) -> Result<Self, PassphraseError> {
        let text = text.into();
        if text.is_empty() || !text.bytes().all(|b| (0x21..=0x7E).contains(&b)) {
            return Err(PassphraseError::InvalidPassphrase);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Passphrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Passphrase(<{} chars>)", self.0.len())
    }
}

impl fmt::Display for Passphrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Psk([u8; PSK_LEN]);

impl Psk {
    pub fn as_bytes(&self) -> &[u8; PSK_LEN] {
        &self.0
    }

    /// 64 lowercase hex characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Psk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Psk(..)")
    }
}

/// Packs bits MSB-first into bytes, discarding a trailing partial byte.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| acc << 1 | b as u8))
        .collect()
}

pub fn map_bytes(bytes: &[u8]) -> Result<Passphrase, PassphraseError> {
    if bytes.is_empty() {
        return Err(PassphraseError::NotEnoughBits);
    }
    let mut text = String::with_capacity(bytes.len() * 2);
    for &b in bytes {
        match b {
            0x21..=0x7E => text.push(b as char),
            0x00..=0x20 | 0x7F => text.push_str(&format!("{b:02X}")),
            0x80..=0xFF => text.push_str(&format!("{b:02x}")),
        }
    }
    Ok(Passphrase(text))
}

pub fn map_bits(q: &BitString) -> Result<Passphrase, PassphraseError> {
    map_bytes(&bits_to_bytes(q.bits()))
}

/// PBKDF2(HMAC-SHA1, passphrase, ssid, 4096, 32 bytes).
pub fn derive_psk(p: &Passphrase, ssid: &str) -> Result<Psk, PassphraseError> {
    let n = ssid.len();
    if !(1..=MAX_SSID_LEN).contains(&n) {
        return Err(PassphraseError::InvalidSsid(n));
    }
    let mut key = [0u8; PSK_LEN];
    pbkdf2_hmac::<Sha1>(p.as_str().as_bytes(), ssid.as_bytes(), PSK_ITERATIONS, &mut key);
    Ok(Psk(key))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CharClass {
    Lower,
    Upper,
    Digit,
    Symbol,
}

impl CharClass {
    pub fn of(c: char) -> CharClass {
        if c.is_ascii_lowercase() {
            CharClass::Lower
        } else if c.is_ascii_uppercase() {
            CharClass::Upper
        } else if c.is_ascii_digit() {
            CharClass::Digit
        } else {
            CharClass::Symbol
        }
    }

    pub fn pool_size(self) -> u32 {
        match self {
            CharClass::Lower | CharClass::Upper => 26,
            CharClass::Digit => 10,
            CharClass::Symbol => 33,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrengthReport {
    pub entropy_bits: f64,
    pub guess_count_log10: f64,
    pub char_classes: BTreeSet<CharClass>,
}

/// Character-pool entropy: `effective_length · log2(pool)`, where runs of one
/// repeated character count at most twice.
pub fn estimate_strength(p: &Passphrase) -> StrengthReport {
    let chars: Vec<char> = p.as_str().chars().collect();
    let char_classes: BTreeSet<CharClass> = chars.iter().map(|&c| CharClass::of(c)).collect();
    let pool: u32 = char_classes.iter().map(|c| c.pool_size()).sum();

    let mut effective = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let run = chars[i..].iter().take_while(|&&c| c == chars[i]).count();
        effective += run.min(2);
        i += run;
    }
    let entropy_bits = effective as f64 * (pool as f64).log2();
    StrengthReport {
        entropy_bits,
        guess_count_log10: ((entropy_bits - 1.0) * 2f64.log10()).max(0.0),
        char_classes,
    }
}

/// Fifty human-style passphrases bundled as a comparison baseline.
pub fn human_style_corpus() -> Vec<Passphrase> {
    include_str!("../data/human_passphrases.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| Passphrase::new(l).expect("corpus entries are printable ASCII"))
        .collect()
}
