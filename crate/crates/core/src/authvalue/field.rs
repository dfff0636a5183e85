//! Arithmetic in the Mersenne prime field of order 2^61 - 1.

use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// The field modulus, 2^61 - 1.
pub const MODULUS: u64 = (1u64 << 61) - 1;

/// Number of bits in the modulus.
pub const MODULUS_BITS: u32 = 61;

/// An element of GF(2^61 - 1), always stored in canonical form `0 <= v < p`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fp(u64);

#[inline(always)]
fn reduce_once(x: u64) -> u64 {
    if x >= MODULUS {
        x - MODULUS
    } else {
        x
    }
}

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    /// Reduces an arbitrary `u64` into the field.
    #[inline]
    pub const fn new(v: u64) -> Self {
        let folded = (v & MODULUS) + (v >> 61);
        Fp(if folded >= MODULUS { folded - MODULUS } else { folded })
    }

    /// Builds an element from an already-canonical value, or `None` if `v >= p`.
    pub const fn from_canonical(v: u64) -> Option<Self> {
        if v < MODULUS {
            Some(Fp(v))
        } else {
            None
        }
    }

    /// Embeds a signed integer, mapping negatives to `p - |v|`.
    #[inline]
    pub fn from_i64(v: i64) -> Self {
        if v >= 0 {
            Fp::new(v as u64)
        } else {
            -Fp::new(v.unsigned_abs())
        }
    }

    #[inline]
    pub const fn value(self) -> u64 {
        self.0
    }

    /// Centered lift into `(-p/2, p/2]`.
    pub fn to_signed(self) -> i64 {
        if self.0 > MODULUS / 2 {
            -((MODULUS - self.0) as i64)
        } else {
            self.0 as i64
        }
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(MODULUS - 2))
        }
    }

    /// Uniform sample by rejection on 61-bit words.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = rng.next_u64() & MODULUS;
            if v < MODULUS {
                return Fp(v);
            }
        }
    }

    /// Uniform nonzero sample.
    pub fn random_nonzero<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = Fp::random(rng);
            if !v.is_zero() {
                return v;
            }
        }
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    /// Decodes a canonical little-endian encoding.
    pub fn from_le_bytes(bytes: [u8; 8]) -> Option<Self> {
        Fp::from_canonical(u64::from_le_bytes(bytes))
    }

    /// Reduces the first 8 bytes of a digest into the field.
    pub fn from_digest(bytes: &[u8]) -> Self {
        let mut word = [0u8; 8];
        word.copy_from_slice(&bytes[..8]);
        Fp::new(u64::from_le_bytes(word) & MODULUS)
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::LowerHex for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

impl From<u64> for Fp {
    fn from(v: u64) -> Self {
        Fp::new(v)
    }
}

impl From<u32> for Fp {
    fn from(v: u32) -> Self {
        Fp(v as u64)
    }
}

impl From<bool> for Fp {
    fn from(v: bool) -> Self {
        Fp(v as u64)
    }
}

impl Add for Fp {
    type Output = Fp;
    #[inline(always)]
    fn add(self, rhs: Fp) -> Fp {
        Fp(reduce_once(self.0 + rhs.0))
    }
}

impl Sub for Fp {
    type Output = Fp;
    #[inline(always)]
    fn sub(self, rhs: Fp) -> Fp {
        Fp(reduce_once(self.0 + MODULUS - rhs.0))
    }
}

impl Neg for Fp {
    type Output = Fp;
    #[inline(always)]
    fn neg(self) -> Fp {
        Fp(reduce_once(MODULUS - self.0))
    }
}

impl Mul for Fp {
    type Output = Fp;
    #[inline(always)]
    fn mul(self, rhs: Fp) -> Fp {
        let wide = (self.0 as u128) * (rhs.0 as u128);
        let lo = (wide as u64) & MODULUS;
        let hi = (wide >> 61) as u64;
        Fp(reduce_once(lo + hi))
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, rhs: Fp) {
        *self = *self * rhs;
    }
}

impl Sum for Fp {
    fn sum<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ZERO, Add::add)
    }
}

impl Product for Fp {
    fn product<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ONE, Mul::mul)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(v: u64) -> u128 {
        v as u128
    }

    proptest! {
        #[test]
        fn mul_matches_u128_reference(a in 0..MODULUS, b in 0..MODULUS) {
            let expected = (big(a) * big(b) % big(MODULUS)) as u64;
            prop_assert_eq!((Fp::new(a) * Fp::new(b)).value(), expected);
        }

        #[test]
        fn add_sub_roundtrip(a in 0..MODULUS, b in 0..MODULUS) {
            let (x, y) = (Fp::new(a), Fp::new(b));
            prop_assert_eq!(x + y - y, x);
            prop_assert_eq!((x + y).value() as u128, (big(a) + big(b)) % big(MODULUS));
        }

        #[test]
        fn signed_lift_roundtrip(v in -(1i64 << 59)..(1i64 << 59)) {
            prop_assert_eq!(Fp::from_i64(v).to_signed(), v);
        }

        #[test]
        fn inverse_is_inverse(a in 1..MODULUS) {
            let x = Fp::new(a);
            prop_assert_eq!(x * x.inverse().unwrap(), Fp::ONE);
        }
    }

    #[test]
    fn reduction_edges() {
        assert_eq!(Fp::new(MODULUS), Fp::ZERO);
        assert_eq!(Fp::new(u64::MAX).value(), (u64::MAX as u128 % MODULUS as u128) as u64);
        assert_eq!(-Fp::ZERO, Fp::ZERO);
        assert_eq!(Fp::from_canonical(MODULUS), None);
        assert!(Fp::ZERO.inverse().is_none());
    }
}
