//! Brute-force oracles for worst-case extractor error over flat sources.
//!
//! A flat source of min-entropy k is uniform on a size-2^k support; flat
//! sources are the extreme points of the min-entropy-k polytope, so the
//! worst statistical distance over them is the worst over all k-sources.
//!
//! Three evaluation strategies, strongest first:
//!
//! 1. **Exact by duality** ([`worst_one_bit_strong_distance`], one output
//!    bit): the seed-averaged distance is a maximum of linear functionals
//!    over the support indicator — for each sign pattern over the seeds the
//!    best support is simply the top-2^k inputs by score. Enumerating every
//!    sign pattern is exhaustive over the dual space and yields the exact
//!    worst case at any input length, where enumerating supports directly
//!    would be hopeless.
//! 2. **Exact by enumeration** ([`worst_strong_distance_exhaustive`], any
//!    output width): walks every support mask; feasible only for tiny
//!    universes, and used to validate strategy 1 and bracket strategy 3.
//! 3. **Bounds** ([`worst_strong_distance_search`] from below, by
//!    alternating maximization over supports and outcome sets;
//!    [`xor_upper_bound`] from above, by reducing a multi-bit output to the
//!    exact one-bit worst case of every XOR of output bits).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::trevisan::TrevisanExtractor;
use crate::two_source::two_source_extract;

/// Hard cap on enumerated support masks.
pub const MAX_ENUMERATED_MASKS: u128 = 12_000_000;
/// Hard cap on seed count for the sign-pattern enumeration (2^seeds patterns).
pub const MAX_DUAL_SEEDS: usize = 20;
/// Hard cap on output-table cells.
pub const MAX_TABLE_CELLS: usize = 1 << 26;

// ───────────────────────── support enumeration ─────────────────────────

/// Iterator over all size-`count` subsets of `{0, …, universe−1}` as bit
/// masks, in increasing numeric order (Gosper's hack). `universe ≤ 64`.
pub struct FlatMaskIter {
    current: u64,
    limit: u64,
    done: bool,
}

impl FlatMaskIter {
    pub fn new(universe: u32, count: u32) -> Result<Self> {
        if universe == 0 || universe > 64 {
            return Err(Error::parameter(format!(
                "mask universe {universe} outside 1..=64"
            )));
        }
        if count == 0 || count > universe {
            return Err(Error::parameter(format!(
                "subset size {count} outside 1..={universe}"
            )));
        }
        let total = crate::bits::combination_count(u64::from(universe), u64::from(count))
            .ok_or_else(|| Error::resource("subset count overflows".to_string()))?;
        if total > MAX_ENUMERATED_MASKS {
            return Err(Error::resource(format!(
                "enumeration would visit {total} subsets (guard {MAX_ENUMERATED_MASKS})"
            )));
        }
        let limit = if universe == 64 {
            u64::MAX
        } else {
            (1u64 << universe) - 1
        };
        Ok(FlatMaskIter {
            current: (1u64 << count) - 1,
            limit,
            done: false,
        })
    }
}

impl Iterator for FlatMaskIter {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.done {
            return None;
        }
        let out = self.current;
        // Gosper's hack: next integer with the same popcount.
        let c = self.current;
        let lowest = c & c.wrapping_neg();
        let ripple = c.wrapping_add(lowest);
        if ripple > self.limit || ripple == 0 {
            self.done = true;
        } else {
            self.current = ((c ^ ripple) >> (2 + lowest.trailing_zeros())) | ripple;
            if self.current > self.limit {
                self.done = true;
            }
        }
        Some(out)
    }
}

// ───────────────────────── output tables ─────────────────────────

/// Dense output table of a seeded extractor: `table[y][x]` is the m-bit
/// output packed into a u8 (so m ≤ 8), for every seed y and input x.
pub fn output_table(ext: &TrevisanExtractor) -> Result<Vec<Vec<u8>>> {
    let p = ext.params();
    if p.m > 8 {
        return Err(Error::resource(format!(
            "table packing holds at most 8 output bits, got {}",
            p.m
        )));
    }
    if p.n >= 26 || p.d >= 26 {
        return Err(Error::resource(format!(
            "table of 2^{} × 2^{} cells exceeds the guard",
            p.d, p.n
        )));
    }
    let cells = (1usize << p.d) * (1usize << p.n);
    if cells > MAX_TABLE_CELLS {
        return Err(Error::resource(format!(
            "table of {cells} cells exceeds the {MAX_TABLE_CELLS} guard"
        )));
    }
    (0..1u64 << p.d)
        .into_par_iter()
        .map(|y| {
            let seed = BitString::from_index(y, p.d)?;
            (0..1u64 << p.n)
                .map(|x| {
                    let input = BitString::from_index(x, p.n)?;
                    let out = ext.extract(&input, &seed)?;
                    Ok(out.to_index()? as u8)
                })
                .collect::<Result<Vec<u8>>>()
        })
        .collect()
}

fn check_table(table: &[Vec<u8>], max_value: u8) -> Result<(usize, usize)> {
    let seeds = table.len();
    if seeds == 0 {
        return Err(Error::parameter("empty seed table".to_string()));
    }
    let inputs = table[0].len();
    if inputs == 0 || !inputs.is_power_of_two() {
        return Err(Error::parameter(format!(
            "input count {inputs} is not a positive power of two"
        )));
    }
    for row in table {
        if row.len() != inputs {
            return Err(Error::parameter("ragged seed table".to_string()));
        }
        if row.iter().any(|&v| v > max_value) {
            return Err(Error::parameter(format!(
                "table value exceeds {max_value}"
            )));
        }
    }
    Ok((seeds, inputs))
}

// ───────────────────────── exact: one output bit ─────────────────────────

/// Exact worst-case seed-averaged distance of a one-bit table over all flat
/// sources of min-entropy `k`:
/// max over size-2^k supports S of (1/D)·Σ_y |#{x∈S : table[y][x]=1}/2^k − 1/2|.
///
/// Computed by enumerating all 2^D sign patterns: each |·| is a maximum of
/// two signs, and for a fixed sign pattern the objective is linear in the
/// support indicator, so the best support is the top-2^k inputs by score.
/// All arithmetic is integer until the final division.
pub fn worst_one_bit_strong_distance(table: &[Vec<u8>], k: u32) -> Result<f64> {
    let (seeds, inputs) = check_table(table, 1)?;
    if seeds > MAX_DUAL_SEEDS {
        return Err(Error::resource(format!(
            "{seeds} seeds would mean 2^{seeds} sign patterns (guard {MAX_DUAL_SEEDS})"
        )));
    }
    let size = 1usize << k;
    if size > inputs {
        return Err(Error::parameter(format!(
            "support size 2^{k} exceeds {inputs} inputs"
        )));
    }
    // Per-input seed profile: bit y of profile[x] = table[y][x].
    let profiles: Vec<u32> = (0..inputs)
        .map(|x| {
            (0..seeds).fold(0u32, |acc, y| acc | (u32::from(table[y][x]) << y))
        })
        .collect();
    let d32 = seeds as i64;
    let best = (0u32..1u32 << seeds)
        .into_par_iter()
        .map(|pos| {
            // Scores 2·c_s(x) where c_s(x) = Σ_y s_y·table[y][x]; bucket
            // counting sort over the value range [−D, D].
            let mut buckets = vec![0u32; 2 * seeds + 1];
            for &g in &profiles {
                let c = 2 * i64::from((g & pos).count_ones()) - i64::from(g.count_ones());
                buckets[(c + d32) as usize] += 1;
            }
            let mut remaining = size as i64;
            let mut top_sum = 0i64;
            for (slot, &cnt) in buckets.iter().enumerate().rev() {
                if remaining == 0 {
                    break;
                }
                let take = remaining.min(i64::from(cnt));
                top_sum += take * (slot as i64 - d32);
                remaining -= take;
            }
            // Σ_y s_y·(2·count_y − size) = 2·Σ_{x∈S} c_s(x) − size·Σ_y s_y.
            let sign_sum = 2 * i64::from(pos.count_ones()) - d32;
            2 * top_sum - (size as i64) * sign_sum
        })
        .max()
        .unwrap_or(0)
        .max(0);
    Ok(best as f64 / (2.0 * size as f64 * seeds as f64))
}

// ───────────────────────── exact: enumeration ─────────────────────────

/// Exact worst-case seed-averaged distance of an m-bit table over all flat
/// sources of min-entropy `k`, by walking every support. Only feasible for
/// tiny universes (the guard is [`MAX_ENUMERATED_MASKS`] supports).
pub fn worst_strong_distance_exhaustive(table: &[Vec<u8>], k: u32, m: u32) -> Result<f64> {
    let outcomes = 1usize << m;
    let (seeds, inputs) = check_table(table, (outcomes - 1) as u8)?;
    if inputs > 64 {
        return Err(Error::resource(format!(
            "enumeration packs supports in u64, got {inputs} inputs"
        )));
    }
    if m > 3 {
        return Err(Error::resource(format!("enumeration holds m ≤ 3, got {m}")));
    }
    let size = 1u32 << k;
    if size as usize > inputs {
        return Err(Error::parameter(format!(
            "support size 2^{k} exceeds {inputs} inputs"
        )));
    }
    // Per-input packed profile: bits [m·y, m·(y+1)) of profile[x] hold
    // table[y][x]; 64 bits suffice for m·seeds ≤ 48 at the sizes the mask
    // guard admits.
    if m as usize * seeds > 64 {
        return Err(Error::resource(format!(
            "profile packing needs m·seeds ≤ 64, got {}",
            m as usize * seeds
        )));
    }
    let profiles: Vec<u64> = (0..inputs)
        .map(|x| {
            (0..seeds).fold(0u64, |acc, y| {
                acc | (u64::from(table[y][x]) << (m as usize * y))
            })
        })
        .collect();
    let masks: Vec<u64> = FlatMaskIter::new(inputs as u32, size)?.collect();
    let outcome_mask = (outcomes - 1) as u64;
    let best = masks
        .par_iter()
        .map(|&mask| {
            let mut bins = [0i32; 64 * 8];
            let mut rest = mask;
            while rest != 0 {
                let x = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let prof = profiles[x];
                for y in 0..seeds {
                    let z = (prof >> (m as usize * y)) & outcome_mask;
                    bins[y * outcomes + z as usize] += 1;
                }
            }
            let mut acc = 0i64;
            for &b in &bins[..seeds * outcomes] {
                acc += i64::from((b * outcomes as i32 - size as i32).abs());
            }
            acc
        })
        .max()
        .unwrap_or(0);
    Ok(best as f64 / (2.0 * size as f64 * outcomes as f64 * seeds as f64))
}

// ───────────────────────── lower bound: alternating search ─────────────────────────

/// Lower bound on the worst-case distance by alternating maximization:
/// given a support, the best outcome sets per seed are the over-weighted
/// outcomes; given outcome sets, the best support is the top-2^k inputs by
/// score. Each step cannot decrease the objective, so the loop terminates
/// at a local maximum; seeded random restarts explore the landscape.
pub fn worst_strong_distance_search(
    table: &[Vec<u8>],
    k: u32,
    m: u32,
    restarts: u32,
    seed: u64,
) -> Result<f64> {
    let outcomes = 1usize << m;
    let (seeds, inputs) = check_table(table, (outcomes - 1) as u8)?;
    if m > 6 {
        return Err(Error::resource(format!("search holds m ≤ 6, got {m}")));
    }
    let size = 1usize << k;
    if size > inputs {
        return Err(Error::parameter(format!(
            "support size 2^{k} exceeds {inputs} inputs"
        )));
    }
    if restarts == 0 {
        return Err(Error::parameter("need at least one restart".to_string()));
    }
    let hinge_sum = |support: &[usize]| -> i64 {
        let mut bins = vec![0i64; seeds * outcomes];
        for &x in support {
            for (y, row) in table.iter().enumerate() {
                bins[y * outcomes + row[x] as usize] += 1;
            }
        }
        bins.iter()
            .map(|&b| (b * outcomes as i64 - size as i64).max(0))
            .sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..inputs).collect();
    let mut best = 0i64;
    for _ in 0..restarts {
        indices.shuffle(&mut rng);
        let mut support: Vec<usize> = indices[..size].to_vec();
        let mut value = hinge_sum(&support);
        loop {
            // Outcome sets implied by the current support.
            let mut bins = vec![0i64; seeds * outcomes];
            for &x in &support {
                for (y, row) in table.iter().enumerate() {
                    bins[y * outcomes + row[x] as usize] += 1;
                }
            }
            let chosen: Vec<bool> = bins
                .iter()
                .map(|&b| b * outcomes as i64 - size as i64 > 0)
                .collect();
            // Best support for those outcome sets: top inputs by score
            // Σ_y (outcomes·1[table[y][x] ∈ T_y] − |T_y|); the subtrahend is
            // support-independent, so rank by the indicator sum alone.
            let mut scored: Vec<(i64, usize)> = (0..inputs)
                .map(|x| {
                    let s: i64 = table
                        .iter()
                        .enumerate()
                        .map(|(y, row)| i64::from(chosen[y * outcomes + row[x] as usize]))
                        .sum();
                    (-s, x) // negated: sort ascending puts best first, ties by index
                })
                .collect();
            scored.sort_unstable();
            let next: Vec<usize> = scored[..size].iter().map(|&(_, x)| x).collect();
            let next_value = hinge_sum(&next);
            if next_value > value {
                value = next_value;
                support = next;
            } else {
                break;
            }
        }
        best = best.max(value);
    }
    Ok(best as f64 / (size as f64 * outcomes as f64 * seeds as f64))
}

// ───────────────────────── upper bound: XOR reduction ─────────────────────────

/// Certified upper bound on the worst-case m-bit distance from the exact
/// one-bit worst cases of every XOR of output bits: for any fixed seed the
/// distance obeys TV ≤ ½·√(Σ_{T≠0} bias_T²), each squared bias is at most
/// twice its absolute deviation, and averaging over seeds moves inside the
/// square root by concavity — so max over flat sources ≤ ½·√(2·Σ_T D_T)
/// with D_T the exact one-bit worst case of the T-XOR table.
pub fn xor_upper_bound(table: &[Vec<u8>], k: u32, m: u32) -> Result<f64> {
    let outcomes = 1usize << m;
    let (seeds, inputs) = check_table(table, (outcomes - 1) as u8)?;
    if m > 8 {
        return Err(Error::resource(format!("XOR reduction holds m ≤ 8, got {m}")));
    }
    let mut sum = 0.0;
    for t in 1..outcomes as u8 {
        let xor_table: Vec<Vec<u8>> = (0..seeds)
            .map(|y| {
                (0..inputs)
                    .map(|x| ((table[y][x] & t).count_ones() & 1) as u8)
                    .collect()
            })
            .collect();
        sum += worst_one_bit_strong_distance(&xor_table, k)?;
    }
    Ok((0.5 * (2.0 * sum).sqrt()).min(1.0))
}

// ───────────────────────── two-source worst case ─────────────────────────

/// Exact worst-case strong error of the one-bit inner-product kernel over
/// all pairs of flat sources (min-entropy k1 and k2, both on n bits):
/// max over (S1, S2) of (1/2^k2)·Σ_{x2∈S2} |P(Ext(X1,x2)=1) − 1/2|.
///
/// The objective is linear in the second support given the first, so the
/// inner maximum is the top-2^k2 per-x2 deviations; only the first support
/// is enumerated.
pub fn worst_ip_strong_error(n: usize, k1: u32, k2: u32) -> Result<f64> {
    if n == 0 || n > 6 {
        return Err(Error::resource(format!(
            "pair enumeration holds n ≤ 6, got {n}"
        )));
    }
    let inputs = 1usize << n;
    let size1 = 1usize << k1;
    let size2 = 1usize << k2;
    if size1 > inputs || size2 > inputs {
        return Err(Error::parameter(format!(
            "support sizes 2^{k1}, 2^{k2} must fit {inputs} inputs"
        )));
    }
    // rows[x2] = bit mask over x1 of the extractor bit.
    let rows: Vec<u64> = (0..inputs as u64)
        .map(|x2| {
            let x2_bits = BitString::from_index(x2, n)?;
            let mut row = 0u64;
            for x1 in 0..inputs as u64 {
                let x1_bits = BitString::from_index(x1, n)?;
                let bit = two_source_extract(&x1_bits, &x2_bits, 1)?.bit(0);
                row |= u64::from(bit) << x1;
            }
            Ok(row)
        })
        .collect::<Result<Vec<u64>>>()?;
    let masks: Vec<u64> = FlatMaskIter::new(inputs as u32, size1 as u32)?.collect();
    let best = masks
        .par_iter()
        .map(|&s1| {
            // Per-x2 deviation |2·count − 2^k1|, then the top-2^k2 sum.
            let mut devs: Vec<i64> = rows
                .iter()
                .map(|&row| (2 * i64::from((s1 & row).count_ones()) - size1 as i64).abs())
                .collect();
            devs.sort_unstable_by(|a, b| b.cmp(a));
            devs[..size2].iter().sum::<i64>()
        })
        .max()
        .unwrap_or(0);
    Ok(best as f64 / (2.0 * size1 as f64 * size2 as f64))
}

// ───────────────────────── tests ─────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::FlatSourceIter;
    use crate::trevisan::{CodeKind, TrevisanExtractor, TrevisanParams};
    use crate::two_source::ip_strong_error_bound;

    fn desk_extractor(n: usize, m: usize) -> TrevisanExtractor {
        let params = TrevisanParams::desk(n, 2, m, 0.25, CodeKind::LinearSelect).unwrap();
        TrevisanExtractor::new(params).unwrap()
    }

    #[test]
    fn mask_enumeration_matches_the_support_iterator() {
        let masks: Vec<u64> = FlatMaskIter::new(8, 2).unwrap().collect();
        assert_eq!(masks.len(), 28);
        let supports: Vec<Vec<u64>> = FlatSourceIter::new(3, 1).unwrap().collect();
        assert_eq!(masks.len(), supports.len());
        // Same family: every support vector appears as a mask.
        for s in &supports {
            let mask = s.iter().fold(0u64, |acc, &e| acc | (1 << e));
            assert!(masks.contains(&mask));
        }
        // Strictly increasing, all with the right popcount.
        for w in masks.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(masks.iter().all(|m| m.count_ones() == 2));
    }

    #[test]
    fn duality_matches_genuine_enumeration_on_one_bit_tables() {
        // Every flat 3-source on 5 bits: C(32, 8) = 10,518,300 supports.
        let ext = desk_extractor(5, 1);
        let table = output_table(&ext).unwrap();
        let exact = worst_one_bit_strong_distance(&table, 3).unwrap();
        let enumerated = worst_strong_distance_exhaustive(&table, 3, 1).unwrap();
        assert_eq!(exact, enumerated, "dual and primal disagree");
        assert!(exact > 0.0 && exact <= 0.5);
    }

    #[test]
    fn search_and_xor_bound_bracket_the_enumerated_two_bit_worst_case() {
        let ext = desk_extractor(5, 2);
        let table = output_table(&ext).unwrap();
        let exact = worst_strong_distance_exhaustive(&table, 3, 2).unwrap();
        let lower = worst_strong_distance_search(&table, 3, 2, 40, 17).unwrap();
        let upper = xor_upper_bound(&table, 3, 2).unwrap();
        assert!(
            lower <= exact + 1e-12,
            "search {lower} exceeded the exact worst case {exact}"
        );
        assert!(
            exact <= upper + 1e-12,
            "exact worst case {exact} exceeded the certified bound {upper}"
        );
        // The alternating search finds the true optimum at this size.
        assert!((lower - exact).abs() < 1e-12, "lower {lower}, exact {exact}");
    }

    #[test]
    fn worst_case_distance_is_monotone_in_the_entropy() {
        // A size-2^(k+1) support is an average of its size-2^k subsets and
        // the distance is convex, so the worst case cannot increase with k.
        let ext = desk_extractor(5, 1);
        let table = output_table(&ext).unwrap();
        let worst: Vec<f64> = (1..=4)
            .map(|k| worst_one_bit_strong_distance(&table, k).unwrap())
            .collect();
        for w in worst.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "worst case rose with entropy: {worst:?}");
        }
    }

    #[test]
    fn point_mass_sources_sit_at_exactly_half() {
        // With a single-element support every one-bit output is
        // deterministic, so each seed contributes exactly 1/2.
        let ext = desk_extractor(5, 1);
        let table = output_table(&ext).unwrap();
        let worst = worst_one_bit_strong_distance(&table, 0).unwrap();
        assert_eq!(worst, 0.5);
    }

    #[test]
    fn inner_product_worst_case_respects_the_entropy_bound() {
        // At (n=4, k1=3, k2=3) the closed-form bound is 2^((4−6)/2−1) = 1/4.
        let worst = worst_ip_strong_error(4, 3, 3).unwrap();
        let bound = ip_strong_error_bound(4, 3.0, 3.0);
        assert!((bound - 0.25).abs() < 1e-15);
        assert!(
            worst <= bound + 1e-15,
            "measured {worst} exceeds the bound {bound}"
        );
        assert!(worst > 0.0);
    }

    #[test]
    fn inner_product_worst_case_shrinks_with_either_entropy() {
        let grid: Vec<Vec<f64>> = (2..=3)
            .map(|k1| {
                (2..=3)
                    .map(|k2| worst_ip_strong_error(4, k1, k2).unwrap())
                    .collect()
            })
            .collect();
        assert!(grid[1][0] <= grid[0][0] + 1e-15);
        assert!(grid[0][1] <= grid[0][0] + 1e-15);
        assert!(grid[1][1] <= grid[1][0].min(grid[0][1]) + 1e-15);
    }

    #[test]
    fn oracle_values_are_thread_count_independent() {
        let ext = desk_extractor(5, 1);
        let table = output_table(&ext).unwrap();
        let base = worst_one_bit_strong_distance(&table, 2).unwrap();
        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let v = pool
                .install(|| worst_one_bit_strong_distance(&table, 2))
                .unwrap();
            assert_eq!(v, base);
        }
    }

    #[test]
    fn guards_reject_oversized_instances() {
        assert!(FlatMaskIter::new(64, 32).is_err());
        assert!(FlatMaskIter::new(65, 1).is_err());
        assert!(worst_ip_strong_error(7, 3, 3).is_err());
        let table = vec![vec![0u8; 4]; 21];
        assert!(worst_one_bit_strong_distance(&table, 1).is_err());
    }
}
