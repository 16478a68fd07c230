//! Weak designs: families of seed-index sets with bounded pairwise overlap.
//!
//! A family S_1, ..., S_m of t-element subsets of {0, ..., d-1} is a weak
//! (t, r)-design if for every i,
//!
//! ```text
//!     Σ_{j<i} 2^{|S_i ∩ S_j|}  ≤  r · m.
//! ```
//!
//! The construction is the classic polynomial one: pick a field GF(q) with
//! q ≥ t (q the next prime or power of two), set d = q², and let
//!
//! ```text
//!     S_i = { a·q + p_i(a) : a ∈ {0, ..., t-1} }
//! ```
//!
//! where p_i is the polynomial over GF(q) whose coefficient vector is the
//! base-q digit expansion of i, using ℓ = max(1, ⌈log_q m⌉) digits. Two
//! distinct polynomials of degree < ℓ agree on fewer than ℓ points, which is
//! what bounds the overlaps; the family achieves r ≤ 2e ≈ 5.44.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{next_field_order, SmallField};

/// Overlap parameter guaranteed by the polynomial construction: r = 2e.
pub const R_GUARANTEE: f64 = 2.0 * std::f64::consts::E;

/// Caps on family size and index-set validation cost.
const MAX_SETS: usize = 1 << 16;
const MAX_VALIDATE_SETS: usize = 1 << 12;

/// A constructed weak design together with the parameters that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakDesign {
    /// Number of sets (one per output bit of the seeded extractor).
    pub m: usize,
    /// Requested set size; each set has exactly this many elements.
    pub t: u32,
    /// Field order actually used (next prime or power of two ≥ t).
    pub q: u32,
    /// Seed length d = q².
    pub d: usize,
    /// Number of base-q digits used for polynomial coefficients.
    pub ell: u32,
    /// The sets themselves, each sorted ascending.
    pub sets: Vec<Vec<u32>>,
}

/// Measured overlap statistics from [`validate_weak_design`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignCheck {
    /// max_i (Σ_{j<i} 2^{|S_i ∩ S_j|}) / m — the achieved overlap parameter.
    pub r_achieved: f64,
    /// Largest pairwise intersection observed.
    pub max_overlap: usize,
    /// Index i attaining `r_achieved`.
    pub worst_index: usize,
}

/// Builds the polynomial weak design with `m` sets of size `t`.
pub fn build_weak_design(m: usize, t: u32) -> Result<WeakDesign> {
    if m == 0 {
        return Err(Error::parameter("design needs at least one set".to_string()));
    }
    if m > MAX_SETS {
        return Err(Error::resource(format!(
            "design with {m} sets exceeds the {MAX_SETS}-set guard"
        )));
    }
    if t < 2 {
        return Err(Error::parameter(format!("set size {t} < 2")));
    }
    let q = next_field_order(t)?;
    if u64::from(q) * u64::from(q) > (1 << 26) {
        return Err(Error::resource(format!(
            "seed length {}^2 exceeds the 2^26 guard",
            q
        )));
    }
    let field = SmallField::new(q)?;
    let d = (q as usize) * (q as usize);

    // Number of digits needed to give every i < m a distinct coefficient
    // vector: ℓ = max(1, ⌈log_q m⌉).
    let mut ell = 1u32;
    let mut capacity = u128::from(q);
    while capacity < m as u128 {
        ell += 1;
        capacity *= u128::from(q);
    }

    let mut sets = Vec::with_capacity(m);
    let mut coeffs = vec![0u32; ell as usize];
    for i in 0..m {
        // Base-q digits of i, least significant first.
        let mut rem = i as u64;
        for c in coeffs.iter_mut() {
            *c = (rem % u64::from(q)) as u32;
            rem /= u64::from(q);
        }
        debug_assert_eq!(rem, 0);
        let set: Vec<u32> = (0..t)
            .map(|a| a * q + field.eval_poly(&coeffs, a))
            .collect();
        // a·q + v with v < q is strictly increasing in a, so already sorted.
        debug_assert!(set.windows(2).all(|w| w[0] < w[1]));
        sets.push(set);
    }

    Ok(WeakDesign { m, t, q, d, ell, sets })
}

/// Exhaustively verifies the weak-design property and structural invariants;
/// returns the measured overlap statistics.
///
/// Cost is O(m² t), so families larger than 4096 sets are refused.
pub fn validate_weak_design(design: &WeakDesign) -> Result<DesignCheck> {
    if design.sets.len() != design.m {
        return Err(Error::validation(format!(
            "design claims {} sets but holds {}",
            design.m,
            design.sets.len()
        )));
    }
    if design.m > MAX_VALIDATE_SETS {
        return Err(Error::resource(format!(
            "validating {} sets exceeds the {MAX_VALIDATE_SETS}-set guard",
            design.m
        )));
    }
    if design.d != (design.q as usize) * (design.q as usize) {
        return Err(Error::validation(format!(
            "seed length {} is not q² = {}",
            design.d,
            (design.q as usize) * (design.q as usize)
        )));
    }
    for (i, set) in design.sets.iter().enumerate() {
        if set.len() != design.t as usize {
            return Err(Error::validation(format!(
                "set {i} has {} elements, expected {}",
                set.len(),
                design.t
            )));
        }
        if !set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::validation(format!(
                "set {i} is not sorted strictly ascending"
            )));
        }
        if let Some(&last) = set.last() {
            if last as usize >= design.d {
                return Err(Error::validation(format!(
                    "set {i} contains index {last} ≥ d = {}",
                    design.d
                )));
            }
        }
    }

    let mut r_achieved = 0.0f64;
    let mut worst_index = 0usize;
    let mut max_overlap = 0usize;
    for i in 1..design.m {
        let mut sum = 0.0f64;
        for j in 0..i {
            let ov = sorted_intersection_size(&design.sets[i], &design.sets[j]);
            max_overlap = max_overlap.max(ov);
            sum += (ov as f64).exp2();
        }
        let ratio = sum / design.m as f64;
        if ratio > r_achieved {
            r_achieved = ratio;
            worst_index = i;
        }
    }

    if r_achieved > R_GUARANTEE + 1e-9 {
        return Err(Error::validation(format!(
            "overlap parameter {r_achieved} exceeds the 2e guarantee"
        )));
    }
    Ok(DesignCheck {
        r_achieved,
        max_overlap,
        worst_index,
    })
}

fn sorted_intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

// ───────────────────────── tests ─────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_design_matches_hand_computation() {
        // t = 3 → q = 3, d = 9; i = 0 is the zero polynomial, i = 1 the
        // constant 1. Sets: {0, 3, 6} and {1, 4, 7}.
        let wd = build_weak_design(2, 3).unwrap();
        assert_eq!(wd.q, 3);
        assert_eq!(wd.d, 9);
        assert_eq!(wd.sets[0], vec![0, 3, 6]);
        assert_eq!(wd.sets[1], vec![1, 4, 7]);
    }

    #[test]
    fn constant_polynomials_give_parallel_sets() {
        // For i < q the polynomial is the constant i, so sets are disjoint
        // "diagonal shifts" — overlap 0.
        let wd = build_weak_design(4, 5).unwrap();
        let check = validate_weak_design(&wd).unwrap();
        assert_eq!(check.max_overlap, 0);
    }

    #[test]
    fn overlap_grid_matches_frozen_reference() {
        // Worst achieved r over m ∈ {2, ..., 64} for each t, computed once by
        // an independent implementation and frozen here.
        let expected = [
            (2u32, 2.2131147540983607),
            (3, 2.328125),
            (4, 2.326530612244898),
            (5, 2.3529411764705883),
            (7, 2.38),
        ];
        for (t, want) in expected {
            let mut worst = 0.0f64;
            for m in 2..=64 {
                let wd = build_weak_design(m, t).unwrap();
                let check = validate_weak_design(&wd).unwrap();
                worst = worst.max(check.r_achieved);
            }
            assert!(
                (worst - want).abs() < 1e-12,
                "t = {t}: worst r {worst} != frozen {want}"
            );
        }
    }

    #[test]
    fn promoted_orders_still_valid() {
        // t = 6 promotes to q = 7; sets keep size 6 inside d = 49.
        let wd = build_weak_design(10, 6).unwrap();
        assert_eq!(wd.q, 7);
        assert_eq!(wd.d, 49);
        assert!(wd.sets.iter().all(|s| s.len() == 6));
        validate_weak_design(&wd).unwrap();
    }

    #[test]
    fn validation_rejects_tampered_designs() {
        let mut wd = build_weak_design(4, 3).unwrap();
        wd.sets[2] = wd.sets[1].clone(); // duplicate set: overlap 2^t each
        // Σ 2^|S_i ∩ S_j| for the duplicate ≥ 2^3 = 8 > 2e·4 is false
        // (8/4 = 2 < 5.44), so force a harder violation: every set equal.
        for s in wd.sets.iter_mut() {
            *s = vec![0, 1, 2];
        }
        assert!(validate_weak_design(&wd).is_err());
    }

    #[test]
    fn validation_rejects_out_of_range_indices() {
        let mut wd = build_weak_design(2, 3).unwrap();
        wd.sets[1] = vec![1, 4, 100];
        assert!(validate_weak_design(&wd).is_err());
    }

    #[test]
    fn design_serializes_round_trip() {
        let wd = build_weak_design(8, 4).unwrap();
        let json = serde_json::to_string(&wd).unwrap();
        let back: WeakDesign = serde_json::from_str(&json).unwrap();
        assert_eq!(back.sets, wd.sets);
        assert_eq!(back.d, wd.d);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_designs_always_satisfy_guarantee(m in 1usize..80, t in 2u32..12) {
            let wd = build_weak_design(m, t).unwrap();
            let check = validate_weak_design(&wd).unwrap();
            prop_assert!(check.r_achieved <= R_GUARANTEE);
            // Distinct polynomials of degree < ℓ agree on < ℓ points, so when
            // ℓ ≤ t no two sets can coincide and overlaps stay below t. (For
            // very small fields and large m the digit expansion needs ℓ > t
            // and whole sets may repeat — still within the 2e budget above.)
            if wd.ell <= wd.t {
                prop_assert!(check.max_overlap < wd.t as usize);
            }
        }

        #[test]
        fn prop_sets_distinct_and_in_range(m in 2usize..50, t in 2u32..10) {
            let wd = build_weak_design(m, t).unwrap();
            if wd.ell <= wd.t {
                let mut seen = std::collections::HashSet::new();
                for s in &wd.sets {
                    prop_assert!(seen.insert(s.clone()), "duplicate set");
                }
            }
            for s in &wd.sets {
                prop_assert!(s.iter().all(|&x| (x as usize) < wd.d));
            }
        }
    }
}
