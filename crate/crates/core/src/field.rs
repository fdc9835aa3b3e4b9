//! Arithmetic in prime fields whose modulus fits below 2^127.
//!
//! Both the pairing-group order `q` and the hash-group order `p` are held as
//! [`PrimeField`] values. Keeping the modulus under 2^127 means `a + b` never
//! overflows a `u128` for reduced operands, so every operation here is plain
//! integer code with no bignum dependency.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::fmt;

/// An integer reduced modulo some prime; the modulus is fixed by context.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scalar(pub u128);

impl Scalar {
    pub const ZERO: Scalar = Scalar(0);
    pub const ONE: Scalar = Scalar(1);

    pub fn value(self) -> u128 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn to_be_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 16]) -> Scalar {
        Scalar(u128::from_be_bytes(bytes))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Scalar {
    fn from(v: u64) -> Self {
        Scalar(v as u128)
    }
}

/// Largest modulus accepted by [`PrimeField`].
pub const MAX_MODULUS: u128 = (1u128 << 127) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    modulus: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldError {
    #[error("modulus {0} is not a prime below 2^127")]
    BadModulus(u128),
}

impl PrimeField {
    pub fn new(modulus: u128) -> Result<Self, FieldError> {
        if !(2..=MAX_MODULUS).contains(&modulus) || !is_probable_prime(modulus) {
            return Err(FieldError::BadModulus(modulus));
        }
        Ok(PrimeField { modulus })
    }

    pub fn modulus(&self) -> u128 {
        self.modulus
    }

    /// Byte length of the big-endian encoding of the largest element.
    pub fn byte_len(&self) -> usize {
        let bits = 128 - self.modulus.leading_zeros() as usize;
        bits.div_ceil(8)
    }

    pub fn contains(&self, s: Scalar) -> bool {
        s.0 < self.modulus
    }

    pub fn reduce(&self, v: u128) -> Scalar {
        Scalar(v % self.modulus)
    }

    pub fn add(&self, a: Scalar, b: Scalar) -> Scalar {
        let s = a.0 + b.0;
        Scalar(if s >= self.modulus { s - self.modulus } else { s })
    }

    pub fn sub(&self, a: Scalar, b: Scalar) -> Scalar {
        if a.0 >= b.0 {
            Scalar(a.0 - b.0)
        } else {
            Scalar(self.modulus - (b.0 - a.0))
        }
    }

    pub fn neg(&self, a: Scalar) -> Scalar {
        if a.0 == 0 {
            a
        } else {
            Scalar(self.modulus - a.0)
        }
    }

    pub fn mul(&self, a: Scalar, b: Scalar) -> Scalar {
        Scalar(mul_mod(a.0, b.0, self.modulus))
    }

    pub fn pow(&self, base: Scalar, mut exp: u128) -> Scalar {
        let mut acc = 1u128 % self.modulus;
        let mut b = base.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul_mod(acc, b, self.modulus);
            }
            b = mul_mod(b, b, self.modulus);
            exp >>= 1;
        }
        Scalar(acc)
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inv(&self, a: Scalar) -> Option<Scalar> {
        if a.0 == 0 {
            None
        } else {
            Some(self.pow(a, self.modulus - 2))
        }
    }

    pub fn sum<I: IntoIterator<Item = Scalar>>(&self, items: I) -> Scalar {
        items.into_iter().fold(Scalar::ZERO, |acc, x| self.add(acc, x))
    }

    /// Interprets `bytes` as a big-endian integer of any length and reduces it.
    pub fn reduce_bytes(&self, bytes: &[u8]) -> Scalar {
        let mut acc = 0u128;
        for &b in bytes {
            for _ in 0..8 {
                acc = add_mod(acc, acc, self.modulus);
            }
            acc = add_mod(acc, b as u128 % self.modulus, self.modulus);
        }
        Scalar(acc)
    }

    pub fn random<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        // 2^128 mod modulus is tiny relative to the range; rejection keeps it exact.
        let zone = u128::MAX - (u128::MAX % self.modulus);
        loop {
            let mut buf = [0u8; 16];
            rng.fill_bytes(&mut buf);
            let v = u128::from_be_bytes(buf);
            if v < zone {
                return Scalar(v % self.modulus);
            }
        }
    }

    pub fn random_nonzero<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        loop {
            let s = self.random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }
}

fn add_mod(a: u128, b: u128, m: u128) -> u128 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

/// `a * b mod m` for `m < 2^127`, by double-and-add on reduced operands.
pub(crate) fn mul_mod(a: u128, b: u128, m: u128) -> u128 {
    let (mut a, mut b) = (a % m, b % m);
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    if let Some(p) = a.checked_mul(b) {
        return p % m;
    }
    let mut acc = 0u128;
    while b > 0 {
        if b & 1 == 1 {
            acc = add_mod(acc, a, m);
        }
        a = add_mod(a, a, m);
        b >>= 1;
    }
    acc
}

/// Miller-Rabin with the first 24 prime bases.
pub fn is_probable_prime(n: u128) -> bool {
    const BASES: [u128; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for &a in &BASES {
        let f = PrimeField { modulus: n };
        let mut x = f.pow(Scalar(a), d).0;
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    const M127: u128 = (1u128 << 127) - 1;

    #[test]
    fn rejects_composites_and_oversized_moduli() {
        assert!(PrimeField::new(M127).is_ok());
        assert!(PrimeField::new(101).is_ok());
        assert!(PrimeField::new(100).is_err());
        assert!(PrimeField::new(1).is_err());
        assert!(PrimeField::new(u128::MAX).is_err());
        // Carmichael number
        assert!(!is_probable_prime(561));
        assert!(is_probable_prime((1u128 << 126) - 137));
    }

    #[test]
    fn byte_len_tracks_modulus_width() {
        assert_eq!(PrimeField::new(M127).unwrap().byte_len(), 16);
        assert_eq!(PrimeField::new(101).unwrap().byte_len(), 1);
    }

    proptest! {
        #[test]
        fn mul_matches_bignum(a in any::<u128>(), b in any::<u128>()) {
            let f = PrimeField::new(M127).unwrap();
            let (a, b) = (f.reduce(a), f.reduce(b));
            let expected = (BigUint::from(a.0) * BigUint::from(b.0)) % BigUint::from(M127);
            prop_assert_eq!(BigUint::from(f.mul(a, b).0), expected);
        }

        #[test]
        fn reduce_bytes_matches_bignum(bytes in proptest::collection::vec(any::<u8>(), 0..48)) {
            let f = PrimeField::new(M127).unwrap();
            let expected = BigUint::from_bytes_be(&bytes) % BigUint::from(M127);
            prop_assert_eq!(BigUint::from(f.reduce_bytes(&bytes).0), expected);
        }

        #[test]
        fn inverse_round_trips(a in 1u128..M127) {
            let f = PrimeField::new(M127).unwrap();
            let inv = f.inv(Scalar(a)).unwrap();
            prop_assert_eq!(f.mul(Scalar(a), inv), Scalar::ONE);
        }

        #[test]
        fn sub_undoes_add(a in 0u128..M127, b in 0u128..M127) {
            let f = PrimeField::new(M127).unwrap();
            prop_assert_eq!(f.sub(f.add(Scalar(a), Scalar(b)), Scalar(b)), Scalar(a));
            prop_assert_eq!(f.add(Scalar(a), f.neg(Scalar(a))), Scalar::ZERO);
        }
    }
}
