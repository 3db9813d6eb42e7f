//! GF(2^7) arithmetic over the primitive polynomial `x^7 + x^3 + 1`.
//!
//! Addition is XOR and multiplication adds discrete logarithms.

#![allow(clippy::suspicious_arithmetic_impl, clippy::suspicious_op_assign_impl)]

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign};

pub const FIELD_BITS: u32 = 7;
/// `x^7 + x^3 + 1`
pub const PRIMITIVE_POLY: u16 = 0x89;
/// Multiplicative group order, `2^7 - 1`.
pub const ORDER: usize = 127;

struct Tables {
    exp: [u8; 2 * ORDER],
    log: [u8; ORDER + 1],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 2 * ORDER];
    let mut log = [0u8; ORDER + 1];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < ORDER {
        exp[i] = x as u8;
        exp[i + ORDER] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x80 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

/// Element of GF(2^7).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Gf128(u8);

impl Gf128 {
    pub const ZERO: Gf128 = Gf128(0);
    pub const ONE: Gf128 = Gf128(1);
    /// The primitive element `x`.
    pub const ALPHA: Gf128 = Gf128(2);

    /// `None` unless `v < 128`.
    pub fn new(v: u8) -> Option<Self> {
        (v < 128).then_some(Gf128(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `α^e`, exponent taken modulo 127.
    pub fn alpha_pow(e: usize) -> Self {
        Gf128(TABLES.exp[e % ORDER])
    }

    /// Discrete logarithm base α; `None` for zero.
    pub fn log(self) -> Option<usize> {
        (self.0 != 0).then(|| TABLES.log[self.0 as usize] as usize)
    }

    pub fn inverse(self) -> Option<Self> {
        self.log().map(|l| Gf128(TABLES.exp[(ORDER - l) % ORDER]))
    }

    pub fn pow(self, e: usize) -> Self {
        match self.log() {
            None if e == 0 => Gf128::ONE,
            None => Gf128::ZERO,
            Some(l) => Gf128(TABLES.exp[(l * (e % ORDER)) % ORDER]),
        }
    }

    pub fn square(self) -> Self {
        self * self
    }
}

impl fmt::Debug for Gf128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf128({})", self.0)
    }
}

impl fmt::Display for Gf128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Gf128 {
    type Output = Gf128;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf128) -> Gf128 {
        Gf128(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf128 {
    fn add_assign(&mut self, rhs: Gf128) {
        self.0 ^= rhs.0;
    }
}

impl Mul for Gf128 {
    type Output = Gf128;
    fn mul(self, rhs: Gf128) -> Gf128 {
        match (self.log(), rhs.log()) {
            (Some(a), Some(b)) => Gf128(TABLES.exp[a + b]),
            _ => Gf128::ZERO,
        }
    }
}

impl MulAssign for Gf128 {
    fn mul_assign(&mut self, rhs: Gf128) {
        *self = *self * rhs;
    }
}

impl Div for Gf128 {
    type Output = Gf128;
    /// Panics on division by zero.
    fn div(self, rhs: Gf128) -> Gf128 {
        self * rhs.inverse().expect("division by zero in GF(2^7)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> impl Iterator<Item = Gf128> {
        (0..128u8).map(|v| Gf128::new(v).unwrap())
    }

    /// Carry-less multiply then reduce, independent of the log tables.
    fn slow_mul(a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for i in 0..7 {
            if b >> i & 1 == 1 {
                acc ^= (a as u16) << i;
            }
        }
        for bit in (7..14).rev() {
            if acc >> bit & 1 == 1 {
                acc ^= PRIMITIVE_POLY << (bit - 7);
            }
        }
        acc as u8
    }

    #[test]
    fn tables_match_schoolbook_multiplication() {
        for a in all() {
            for b in all() {
                assert_eq!((a * b).value(), slow_mul(a.value(), b.value()));
            }
        }
    }

    #[test]
    fn alpha_generates_the_group() {
        let mut seen = [false; 128];
        for e in 0..ORDER {
            let v = Gf128::alpha_pow(e).value() as usize;
            assert!(!seen[v]);
            seen[v] = true;
        }
        assert!(!seen[0]);
        assert_eq!(Gf128::alpha_pow(ORDER), Gf128::ONE);
    }

    #[test]
    fn field_axioms_exhaustive() {
        for a in all() {
            assert_eq!(a + Gf128::ZERO, a);
            assert_eq!(a * Gf128::ONE, a);
            if !a.is_zero() {
                assert_eq!(a * a.inverse().unwrap(), Gf128::ONE);
            }
            for b in all() {
                assert_eq!(a * b, b * a);
                assert_eq!(a + b, b + a);
                for c in all() {
                    assert_eq!((a * b) * c, a * (b * c));
                    assert_eq!(a * (b + c), a * b + a * c);
                }
            }
        }
        assert_eq!(Gf128::ZERO.inverse(), None);
    }

    #[test]
    fn pow_and_log() {
        assert_eq!(Gf128::ZERO.pow(0), Gf128::ONE);
        assert_eq!(Gf128::ZERO.pow(3), Gf128::ZERO);
        for a in all().skip(1) {
            assert_eq!(Gf128::alpha_pow(a.log().unwrap()), a);
            assert_eq!(a.pow(3), a * a * a);
        }
        assert_eq!(Gf128::new(128), None);
    }
}
