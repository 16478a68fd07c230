//! Bit strings, finite distributions, and min-entropy measures.
//!
//! Everything downstream — extractors, round sampling, certification — works
//! over explicit bit strings and explicit probability vectors, so the
//! conventions are fixed here once:
//!
//! * A [`BitString`] is an ordered sequence of bits `b_0 b_1 ... b_{n-1}`.
//!   When a string is interpreted as an integer index, `b_0` is the **least
//!   significant** bit: `value = Σ_i b_i · 2^i`.
//! * A [`Distribution`] over `n`-bit strings stores `2^n` probabilities
//!   indexed by that integer value.
//!
//! Min-entropy is `-log2 max_x P(x)`; the conditional variant used for
//! sources with classical side information takes the **worst case** over
//! side-information values (an average-case variant is also exposed, but the
//! worst case is what the extraction guarantees consume).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` for which we allow dense `2^n`-entry probability vectors.
pub const MAX_DENSE_BITS: usize = 24;

// ───────────────────────── bit strings ─────────────────────────

/// An ordered sequence of bits, index 0 least significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString(Vec<u8>);

impl BitString {
    /// Builds from explicit bit values; every entry must be 0 or 1.
    pub fn from_bits(bits: impl Into<Vec<u8>>) -> Result<Self> {
        let bits = bits.into();
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::validation(format!(
                "bit value {bad} is neither 0 nor 1"
            )));
        }
        Ok(BitString(bits))
    }

    /// The all-zero string of the given length.
    pub fn zeros(len: usize) -> Self {
        BitString(vec![0; len])
    }

    /// Encodes `value` as a `len`-bit string, least-significant bit first.
    pub fn from_index(value: u64, len: usize) -> Result<Self> {
        if len < 64 && value >> len != 0 {
            return Err(Error::parameter(format!(
                "value {value} does not fit in {len} bits"
            )));
        }
        Ok(BitString(
            (0..len)
                .map(|i| if i < 64 { ((value >> i) & 1) as u8 } else { 0 })
                .collect(),
        ))
    }

    /// Parses a text string of `0`/`1` characters (whitespace ignored).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut bits = Vec::new();
        for ch in text.chars() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                c if c.is_whitespace() => {}
                c => {
                    return Err(Error::validation(format!(
                        "unexpected character {c:?} in bit string text"
                    )))
                }
            }
        }
        Ok(BitString(bits))
    }

    /// Samples a uniformly random string of the given length.
    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        BitString((0..len).map(|_| rng.gen_range(0..=1u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn bit(&self, i: usize) -> u8 {
        self.0[i]
    }

    /// Integer value of the whole string (requires length ≤ 64).
    pub fn to_index(&self) -> Result<u64> {
        if self.len() > 64 {
            return Err(Error::parameter(format!(
                "bit string of length {} does not fit in u64",
                self.len()
            )));
        }
        Ok(self
            .0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i)))
    }

    /// Copy of the sub-string `[start, start+len)`.
    pub fn substring(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::parameter(format!(
                "substring [{start}, {}) exceeds length {}",
                start + len,
                self.len()
            )));
        }
        Ok(BitString(self.0[start..start + len].to_vec()))
    }

    /// Integer value of the bits at the given positions, where the bit at
    /// `positions[j]` becomes bit `j` of the result.
    pub fn gather(&self, positions: &[u32]) -> Result<u64> {
        if positions.len() > 64 {
            return Err(Error::parameter("cannot gather more than 64 bits".to_string()));
        }
        let mut v = 0u64;
        for (j, &p) in positions.iter().enumerate() {
            let p = p as usize;
            if p >= self.len() {
                return Err(Error::parameter(format!(
                    "gather position {p} exceeds length {}",
                    self.len()
                )));
            }
            v |= u64::from(self.0[p]) << j;
        }
        Ok(v)
    }

    /// Concatenation `self ∥ other`.
    pub fn concat(&self, other: &BitString) -> BitString {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        BitString(v)
    }

    /// Renders as a `0`/`1` text string in index order.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    /// Hex rendering: bits are consumed in index order, four per digit, with
    /// the first bit of each group most significant inside its digit. The
    /// length must be a multiple of 4.
    pub fn to_hex(&self) -> Result<String> {
        if self.len() % 4 != 0 {
            return Err(Error::parameter(format!(
                "hex rendering needs a multiple of 4 bits, got {}",
                self.len()
            )));
        }
        Ok(self
            .0
            .chunks(4)
            .map(|c| {
                let v = (c[0] << 3) | (c[1] << 2) | (c[2] << 1) | c[3];
                char::from_digit(u32::from(v), 16).unwrap()
            })
            .collect())
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}

// ───────────────────────── distributions ─────────────────────────

/// Absolute tolerance for "probabilities sum to one".
pub const MASS_TOL: f64 = 1e-12;

/// A probability distribution over `n`-bit strings, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    n: usize,
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates and wraps an explicit probability vector of length `2^n`.
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n > MAX_DENSE_BITS {
            return Err(Error::resource(format!(
                "dense distribution over {n} bits exceeds the {MAX_DENSE_BITS}-bit guard"
            )));
        }
        let size = 1usize << n;
        if probs.len() != size {
            return Err(Error::validation(format!(
                "expected {size} probabilities for {n} bits, got {}",
                probs.len()
            )));
        }
        if let Some(&bad) = probs.iter().find(|p| !p.is_finite() || **p < -MASS_TOL) {
            return Err(Error::validation(format!(
                "probability {bad} is negative or non-finite"
            )));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL * size as f64
            && (mass - 1.0).abs() > 1e-9
        {
            return Err(Error::validation(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(Distribution { n, probs })
    }

    /// Uniform distribution on `n` bits.
    pub fn uniform(n: usize) -> Result<Self> {
        if n > MAX_DENSE_BITS {
            return Err(Error::resource(format!(
                "dense distribution over {n} bits exceeds the {MAX_DENSE_BITS}-bit guard"
            )));
        }
        let size = 1usize << n;
        Ok(Distribution {
            n,
            probs: vec![1.0 / size as f64; size],
        })
    }

    /// Point mass on a single string.
    pub fn point_mass(n: usize, value: u64) -> Result<Self> {
        if n > MAX_DENSE_BITS {
            return Err(Error::resource(format!(
                "dense distribution over {n} bits exceeds the {MAX_DENSE_BITS}-bit guard"
            )));
        }
        let size = 1u64 << n;
        if value >= size {
            return Err(Error::parameter(format!(
                "point mass value {value} out of range for {n} bits"
            )));
        }
        let mut probs = vec![0.0; size as usize];
        probs[value as usize] = 1.0;
        Ok(Distribution { n, probs })
    }

    /// Uniform distribution over an explicit support set (distinct values).
    pub fn flat(n: usize, support: &[u64]) -> Result<Self> {
        if n > MAX_DENSE_BITS {
            return Err(Error::resource(format!(
                "dense distribution over {n} bits exceeds the {MAX_DENSE_BITS}-bit guard"
            )));
        }
        if support.is_empty() {
            return Err(Error::validation("flat distribution needs a non-empty support".to_string()));
        }
        let size = 1u64 << n;
        let mut probs = vec![0.0; size as usize];
        let p = 1.0 / support.len() as f64;
        for &v in support {
            if v >= size {
                return Err(Error::parameter(format!(
                    "support value {v} out of range for {n} bits"
                )));
            }
            if probs[v as usize] != 0.0 {
                return Err(Error::validation(format!(
                    "support value {v} repeated"
                )));
            }
            probs[v as usize] = p;
        }
        Ok(Distribution { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, value: u64) -> f64 {
        self.probs[value as usize]
    }

    /// Min-entropy `-log2 max_x P(x)` in bits.
    pub fn min_entropy(&self) -> f64 {
        let pmax = self.probs.iter().cloned().fold(0.0f64, f64::max);
        -pmax.log2()
    }

    /// Number of strings with non-zero probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Samples one value by inverse CDF; deterministic given the RNG stream.
    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (v, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return v as u64;
            }
        }
        (self.probs.len() - 1) as u64
    }
}

/// Total-variation (statistical) distance `½ Σ_x |P(x) − Q(x)|`.
pub fn statistical_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.n != q.n {
        return Err(Error::parameter(format!(
            "distance between distributions on {} and {} bits",
            p.n, q.n
        )));
    }
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// Total-variation distance of a distribution from uniform on its own domain.
pub fn distance_from_uniform(p: &Distribution) -> f64 {
    let u = 1.0 / p.probs.len() as f64;
    p.probs.iter().map(|a| (a - u).abs()).sum::<f64>() / 2.0
}

// ───────────────────────── conditional sources ─────────────────────────

/// A source with classical side information: a finite mixture of
/// distributions, one per side-information value `e`, with weights `P(e)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalSource {
    weights: Vec<f64>,
    components: Vec<Distribution>,
}

impl ConditionalSource {
    pub fn new(weights: Vec<f64>, components: Vec<Distribution>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::validation(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if let Some(&bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::validation(format!("weight {bad} is invalid")));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("weights sum to {mass}, not 1")));
        }
        let n = components[0].n();
        if components.iter().any(|c| c.n() != n) {
            return Err(Error::validation(
                "conditional components live on different bit lengths".to_string(),
            ));
        }
        Ok(ConditionalSource { weights, components })
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Distribution] {
        &self.components
    }

    /// Worst-case conditional min-entropy: the minimum of the component
    /// min-entropies over side-information values of positive weight. This is
    /// the quantity extraction guarantees are stated against.
    pub fn worst_case_min_entropy(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .filter(|(w, _)| **w > 0.0)
            .map(|(_, c)| c.min_entropy())
            .fold(f64::INFINITY, f64::min)
    }

    /// Average-case conditional min-entropy
    /// `-log2 Σ_e P(e) · max_x P(x|e)`; exposed for diagnostics.
    pub fn average_min_entropy(&self) -> f64 {
        let guess: f64 = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.probs().iter().cloned().fold(0.0f64, f64::max))
            .sum();
        -guess.log2()
    }

    /// The unconditional mixture distribution.
    pub fn marginal(&self) -> Distribution {
        let size = self.components[0].probs().len();
        let mut probs = vec![0.0; size];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (slot, p) in probs.iter_mut().zip(c.probs()) {
                *slot += w * p;
            }
        }
        Distribution {
            n: self.components[0].n(),
            probs,
        }
    }
}

// ───────────────────────── flat-source enumeration ─────────────────────────

/// Counts `C(n, k)` with saturation: `None` means the count exceeds `u128`.
pub fn combination_count(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Iterator over all flat sources of min-entropy exactly `k` on `n` bits:
/// uniform distributions over every size-`2^k` subset of `{0,1}^n`.
///
/// Subsets are represented as sorted index vectors and visited in
/// lexicographic order. Enumeration is refused when the count exceeds
/// [`FlatSourceIter::MAX_COUNT`].
pub struct FlatSourceIter {
    n: usize,
    support: Vec<u64>,
    done: bool,
}

impl FlatSourceIter {
    /// Hard guard on the number of subsets we are willing to walk.
    pub const MAX_COUNT: u128 = 200_000_000;

    pub fn new(n: usize, k: u32) -> Result<Self> {
        if n > MAX_DENSE_BITS {
            return Err(Error::resource(format!(
                "flat-source enumeration over {n} bits exceeds the {MAX_DENSE_BITS}-bit guard"
            )));
        }
        if u64::from(k) > n as u64 {
            return Err(Error::parameter(format!(
                "min-entropy {k} exceeds {n} bits"
            )));
        }
        let size = 1u64 << k;
        let total = combination_count(1 << n, size)
            .ok_or_else(|| Error::resource("flat-source count overflows u128".to_string()))?;
        if total > Self::MAX_COUNT {
            return Err(Error::resource(format!(
                "flat-source enumeration would visit {total} subsets (guard {})",
                Self::MAX_COUNT
            )));
        }
        Ok(FlatSourceIter {
            n,
            support: (0..size).collect(),
            done: false,
        })
    }

    /// Number of subsets the iterator will yield.
    pub fn count_exact(n: usize, k: u32) -> Option<u128> {
        combination_count(1u64 << n, 1u64 << k)
    }
}

impl Iterator for FlatSourceIter {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let current = self.support.clone();
        // Advance to the next lexicographic combination of {0, ..., 2^n - 1}.
        let max = 1u64 << self.n;
        let size = self.support.len();
        let mut i = size;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.support[i] < max - (size - i) as u64 {
                self.support[i] += 1;
                for j in i + 1..size {
                    self.support[j] = self.support[j - 1] + 1;
                }
                break;
            }
        }
        Some(current)
    }
}

// ───────────────────────── tests ─────────────────────────
