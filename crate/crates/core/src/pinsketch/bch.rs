//! Binary narrow-sense BCH code of length 127 correcting up to 9 errors.
//!
//! Words are `u128` values whose bit `i` is the coefficient of `x^i`; bit 127 is
//! never used.

use thiserror::Error;

use super::gf::{Gf128, ORDER};

/// Codeword length `2^7 - 1`.
pub const CODE_LEN: usize = ORDER;
/// Designed error-correcting capability.
pub const T: usize = 9;

const WORD_MASK: u128 = (1u128 << CODE_LEN) - 1;

/// Odd power sums `s_1, s_3, ..., s_17` of a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Syndrome(pub [Gf128; T]);

impl Syndrome {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|s| s.is_zero())
    }

    /// Component for odd index `j` (1, 3, ..., 17).
    pub fn odd(&self, j: usize) -> Gf128 {
        debug_assert!(j % 2 == 1 && j < 2 * T);
        self.0[j / 2]
    }

    pub fn xor(&self, other: &Syndrome) -> Syndrome {
        Syndrome(std::array::from_fn(|i| self.0[i] + other.0[i]))
    }

    /// Full sequence `S_1..S_18`, using `S_2j = S_j^2` over GF(2).
    fn expand(&self) -> [Gf128; 2 * T] {
        let mut s = [Gf128::ZERO; 2 * T];
        for j in 1..=2 * T {
            s[j - 1] = if j % 2 == 1 {
                self.odd(j)
            } else {
                s[j / 2 - 1].square()
            };
        }
        s
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("error locator degree {0} exceeds the correction capability")]
    TooManyErrors(usize),
    #[error("error locator of degree {degree} has {roots} roots in the field")]
    RootMismatch { degree: usize, roots: usize },
}

/// `s_j = Σ_{i : bit_i = 1} α^{j·i}` for odd `j ≤ 17`.
pub fn bch_syndrome(word: u128) -> Syndrome {
    let word = word & WORD_MASK;
    let mut s = [Gf128::ZERO; T];
    let mut rest = word;
    while rest != 0 {
        let i = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        for (slot, j) in s.iter_mut().zip((1..2 * T).step_by(2)) {
            *slot += Gf128::alpha_pow(j * i);
        }
    }
    Syndrome(s)
}

/// Berlekamp–Massey: shortest LFSR (error locator `Λ`, `Λ_0 = 1`) generating
/// `S_1..S_2t`. Returns the coefficients and the register length.
fn berlekamp_massey(s: &[Gf128; 2 * T]) -> (Vec<Gf128>, usize) {
    let mut lambda = vec![Gf128::ZERO; 2 * T + 1];
    let mut prev = vec![Gf128::ZERO; 2 * T + 1];
    lambda[0] = Gf128::ONE;
    prev[0] = Gf128::ONE;
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut prev_disc = Gf128::ONE;

    for n in 0..2 * T {
        let mut d = s[n];
        for i in 1..=len {
            d += lambda[i] * s[n - i];
        }
        if d.is_zero() {
            shift += 1;
            continue;
        }
        let coef = d / prev_disc;
        let snapshot = lambda.clone();
        for i in 0..=2 * T - shift {
            let p = prev[i];
            if !p.is_zero() {
                lambda[i + shift] += coef * p;
            }
        }
        if 2 * len <= n {
            len = n + 1 - len;
            prev = snapshot;
            prev_disc = d;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    lambda.truncate(len + 1);
    (lambda, len)
}

/// Exhaustive root search: position `i` is in error when `Λ(α^{-i}) = 0`.
fn locate(lambda: &[Gf128]) -> Vec<usize> {
    (0..CODE_LEN)
        .filter(|&i| {
            let x = Gf128::alpha_pow((ORDER - i) % ORDER);
            let mut acc = Gf128::ZERO;
            let mut xp = Gf128::ONE;
            for &c in lambda {
                acc += c * xp;
                xp *= x;
            }
            acc.is_zero()
        })
        .collect()
}

/// Error positions (ascending) of the unique weight-≤9 pattern with syndrome
/// `delta`, or a decode failure.
pub fn syndrome_decode(delta: &Syndrome) -> Result<Vec<usize>, DecodeError> {
    if delta.is_zero() {
        return Ok(Vec::new());
    }
    let (lambda, len) = berlekamp_massey(&delta.expand());
    if len > T {
        return Err(DecodeError::TooManyErrors(len));
    }
    let degree = lambda.iter().rposition(|c| !c.is_zero()).unwrap_or(0);
    let roots = locate(&lambda);
    if degree != len || roots.len() != len {
        return Err(DecodeError::RootMismatch {
            degree: len,
            roots: roots.len(),
        });
    }
    // A genuine pattern reproduces the observed syndrome exactly.
    let pattern = roots.iter().fold(0u128, |w, &i| w | 1u128 << i);
    if bch_syndrome(pattern) != *delta {
        return Err(DecodeError::RootMismatch {
            degree: len,
            roots: roots.len(),
        });
    }
    Ok(roots)
}
