//! Small finite fields GF(q) for q prime or q = 2^e.
//!
//! The seed-set designs need polynomial evaluation over a field of order at
//! least the seed-block length `t`; when `t` itself is neither prime nor a
//! power of two it is promoted to the next order that is. Binary fields use a
//! fixed table of irreducible polynomials (one per degree up to 31), so field
//! arithmetic is reproducible across runs and platforms.

use crate::error::{Error, Result};

/// Irreducible polynomial over GF(2) of degree `e`, as a bit mask including
/// the `x^e` term, for `e` in `1..=31`. Entry `IRREDUCIBLE[e - 1]` has degree
/// `e`. Irreducibility of every entry is checked by brute force in the tests.
pub const IRREDUCIBLE: [u32; 31] = [
    0b11,        // x + 1
    0b111,       // x^2 + x + 1
    0b1011,      // x^3 + x + 1
    0b10011,     // x^4 + x + 1
    0b100101,    // x^5 + x^2 + 1
    0b1000011,   // x^6 + x + 1
    0b10000011,  // x^7 + x + 1
    0x11b,       // x^8 + x^4 + x^3 + x + 1
    0x211,       // x^9 + x^4 + 1
    0x409,       // x^10 + x^3 + 1
    0x805,       // x^11 + x^2 + 1
    0x1053,      // x^12 + x^6 + x^4 + x + 1
    0x201b,      // x^13 + x^4 + x^3 + x + 1
    0x4443,      // x^14 + x^10 + x^6 + x + 1
    0x8003,      // x^15 + x + 1
    0x1100b,     // x^16 + x^12 + x^3 + x + 1
    0x20009,     // x^17 + x^3 + 1
    0x40081,     // x^18 + x^7 + 1
    0x80027,     // x^19 + x^5 + x^2 + x + 1
    0x100009,    // x^20 + x^3 + 1
    0x200005,    // x^21 + x^2 + 1
    0x400003,    // x^22 + x + 1
    0x800021,    // x^23 + x^5 + 1
    0x100001b,   // x^24 + x^4 + x^3 + x + 1
    0x2000009,   // x^25 + x^3 + 1
    0x400001b,   // x^26 + x^4 + x^3 + x + 1
    0x8000027,   // x^27 + x^5 + x^2 + x + 1
    0x10000003,  // x^28 + x + 1
    0x20000005,  // x^29 + x^2 + 1
    0x40000053,  // x^30 + x^6 + x^4 + x + 1
    0x80000009,  // x^31 + x^3 + 1
];

/// Largest field order we are willing to instantiate: elements are u32 masks
/// and carry-less products must fit in u64, so degree caps at 31. Callers
/// whose cost is exponential in the degree (set enumeration, code tables)
/// carry their own tighter guards.
pub const MAX_ORDER: u32 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Prime,
    Binary { e: u32, modulus: u32 },
}

/// Arithmetic in GF(q), elements represented as integers in `0..q`.
///
/// For prime q the representation is the integer residue; for q = 2^e it is
/// the coefficient mask of a polynomial over GF(2) reduced modulo the tabled
/// irreducible of degree e.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmallField {
    q: u32,
    kind: Kind,
}

impl SmallField {
    /// Builds the field of the given order; `q` must be prime or a power of
    /// two in `2..=2^20`.
    pub fn new(q: u32) -> Result<Self> {
        if q < 2 || q > MAX_ORDER {
            return Err(Error::parameter(format!(
                "field order {q} outside 2..={MAX_ORDER}"
            )));
        }
        if q.is_power_of_two() {
            let e = q.trailing_zeros();
            Ok(SmallField {
                q,
                kind: Kind::Binary {
                    e,
                    modulus: IRREDUCIBLE[(e - 1) as usize],
                },
            })
        } else if is_prime(q) {
            Ok(SmallField { q, kind: Kind::Prime })
        } else {
            Err(Error::parameter(format!(
                "field order {q} is neither prime nor a power of two"
            )))
        }
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.kind, Kind::Binary { .. })
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        debug_assert!(a < self.q && b < self.q);
        match self.kind {
            Kind::Prime => {
                let s = u64::from(a) + u64::from(b);
                (s % u64::from(self.q)) as u32
            }
            Kind::Binary { .. } => a ^ b,
        }
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        debug_assert!(a < self.q && b < self.q);
        match self.kind {
            Kind::Prime => {
                let p = u64::from(a) * u64::from(b);
                (p % u64::from(self.q)) as u32
            }
            Kind::Binary { e, modulus } => {
                // Carry-less multiply then reduce; intermediate degree < 2e ≤ 40.
                let mut acc: u64 = 0;
                let mut x = u64::from(a);
                let mut y = b;
                while y != 0 {
                    if y & 1 == 1 {
                        acc ^= x;
                    }
                    x <<= 1;
                    y >>= 1;
                }
                let m = u64::from(modulus);
                while acc >> e != 0 {
                    let deg = 63 - acc.leading_zeros();
                    acc ^= m << (deg - e);
                }
                acc as u32
            }
        }
    }

    /// Evaluates `Σ_j coeffs[j] · x^j` by Horner's rule.
    pub fn eval_poly(&self, coeffs: &[u32], x: u32) -> u32 {
        let mut acc = 0u32;
        for &c in coeffs.iter().rev() {
            acc = self.add(self.mul(acc, x), c);
        }
        acc
    }
}

/// Deterministic primality for u32 by trial division (orders are ≤ 2^20).
pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u32;
    while u64::from(d) * u64::from(d) <= u64::from(n) {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest admissible field order ≥ `t`: the first integer that is prime or
/// a power of two.
pub fn next_field_order(t: u32) -> Result<u32> {
    if t < 2 {
        return Err(Error::parameter(format!("field order target {t} < 2")));
    }
    let mut q = t;
    loop {
        if q > MAX_ORDER {
            return Err(Error::resource(format!(
                "no admissible field order in {t}..={MAX_ORDER}"
            )));
        }
        if q.is_power_of_two() || is_prime(q) {
            return Ok(q);
        }
        q += 1;
    }
}

/// The powers `x^0, x^1, ..., x^{count-1}` of the polynomial `x` in
/// GF(2^e), as coefficient masks. Errs if the powers are not distinct and
/// non-zero (i.e. `count` exceeds the multiplicative order of `x`).
pub fn gf2_power_sequence(e: u32, count: usize) -> Result<Vec<u64>> {
    if e == 0 || e > 31 {
        return Err(Error::parameter(format!("binary field degree {e} outside 1..=31")));
    }
    if count > (1usize << e) {
        return Err(Error::parameter(format!(
            "requested {count} powers from a field of order 2^{e}"
        )));
    }
    let field = SmallField::new(1u32 << e)?;
    let x = if e == 1 { 1u32 } else { 2u32 };
    let mut out = Vec::with_capacity(count);
    let mut cur = 1u32;
    let mut seen = std::collections::HashSet::with_capacity(count);
    for i in 0..count {
        if cur == 0 || !seen.insert(cur) {
            return Err(Error::parameter(format!(
                "power sequence repeats after {i} steps; order of x too small for {count} functions"
            )));
        }
        out.push(u64::from(cur));
        cur = field.mul(cur, x);
    }
    Ok(out)
}

// ───────────────────────── tests ─────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn degree(p: u64) -> i32 {
        if p == 0 {
            -1
        } else {
            63 - p.leading_zeros() as i32
        }
    }

    /// Remainder of GF(2) polynomial division.
    fn poly_rem(mut a: u64, m: u64) -> u64 {
        let dm = degree(m);
        while degree(a) >= dm {
            a ^= m << (degree(a) - dm);
        }
        a
    }

    #[test]
    fn tabled_polynomials_are_irreducible() {
        for (idx, &m) in IRREDUCIBLE.iter().enumerate() {
            let e = (idx + 1) as i32;
            assert_eq!(degree(u64::from(m)), e, "entry {idx} has wrong degree");
            // Trial division by every polynomial of degree 1..=e/2.
            for d in 1..=(e / 2).max(1) {
                if d >= e {
                    continue;
                }
                for low in 0..(1u64 << d) {
                    let candidate = (1u64 << d) | low;
                    assert!(
                        poly_rem(u64::from(m), candidate) != 0,
                        "degree-{e} entry divisible by {candidate:#b}"
                    );
                }
            }
        }
    }

    #[test]
    fn prime_field_matches_modular_arithmetic() {
        let f = SmallField::new(7).unwrap();
        assert_eq!(f.add(5, 4), 2);
        assert_eq!(f.mul(5, 4), 6);
        assert_eq!(f.eval_poly(&[1, 2, 3], 2), (1 + 4 + 12) % 7);
    }

    #[test]
    fn binary_field_known_products() {
        // GF(4) with x^2 + x + 1: x · x = x + 1.
        let f = SmallField::new(4).unwrap();
        assert_eq!(f.mul(0b10, 0b10), 0b11);
        // GF(256) with the AES polynomial: 0x53 · 0xCA = 0x01 is the classic
        // inverse-pair check.
        let f = SmallField::new(256).unwrap();
        assert_eq!(f.mul(0x53, 0xca), 0x01);
    }

    #[test]
    fn next_field_order_promotes_correctly() {
        assert_eq!(next_field_order(2).unwrap(), 2);
        assert_eq!(next_field_order(3).unwrap(), 3);
        assert_eq!(next_field_order(4).unwrap(), 4);
        assert_eq!(next_field_order(6).unwrap(), 7);
        assert_eq!(next_field_order(9).unwrap(), 11);
        assert_eq!(next_field_order(10).unwrap(), 11);
        assert_eq!(next_field_order(32).unwrap(), 32);
        assert_eq!(next_field_order(33).unwrap(), 37);
    }

    #[test]
    fn field_rejects_composite_non_power_orders() {
        assert!(SmallField::new(6).is_err());
        assert!(SmallField::new(1).is_err());
        assert!(SmallField::new(9).is_err()); // 3^2: prime power but not 2^e
    }

    #[test]
    fn power_sequence_is_distinct_nonzero() {
        // x generates GF(16)^* under x^4 + x + 1 (order 15).
        let powers = gf2_power_sequence(4, 15).unwrap();
        let set: std::collections::HashSet<u64> = powers.iter().cloned().collect();
        assert_eq!(set.len(), 15);
        assert!(!set.contains(&0));
        // Asking for 16 powers must cycle and fail.
        assert!(gf2_power_sequence(4, 16).is_err());
    }

    proptest! {
        #[test]
        fn prop_binary_field_is_a_field(e in 1u32..=8, a in 0u32..256, b in 0u32..256, c in 0u32..256) {
            let q = 1u32 << e;
            let (a, b, c) = (a % q, b % q, c % q);
            let f = SmallField::new(q).unwrap();
            // Commutativity and distributivity.
            prop_assert_eq!(f.mul(a, b), f.mul(b, a));
            prop_assert_eq!(f.add(a, b), f.add(b, a));
            prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
            // Identities.
            prop_assert_eq!(f.mul(a, 1), a);
            prop_assert_eq!(f.add(a, 0), a);
            // Closure.
            prop_assert!(f.mul(a, b) < q);
        }

        #[test]
        fn prop_binary_mul_associative(a in 0u32..64, b in 0u32..64, c in 0u32..64) {
            let f = SmallField::new(64).unwrap();
            prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        }

        #[test]
        fn prop_nonzero_elements_invertible(e in 1u32..=6, a in 1u32..64) {
            let q = 1u32 << e;
            let a = (a % (q - 1)) + 1; // non-zero element
            let f = SmallField::new(q).unwrap();
            let has_inverse = (1..q).any(|b| f.mul(a, b) == 1);
            prop_assert!(has_inverse, "element {} of GF({}) lacks an inverse", a, q);
        }
    }
}
