//! Device behaviours: conditional output distributions of untrusted boxes.
//!
//! A [`Behavior`] is the full table p(outputs | inputs) for two or three
//! parties with binary inputs and outputs. Behaviours come from three places:
//!
//! * [`QuantumStrategy::behavior`] — the Born rule applied to an explicit
//!   state and per-party binary measurements, used for honest devices. The
//!   two bundled strategies are [`hardy_strategy`] (two parties; a state and
//!   basis pair exhibiting the Hardy-paradox constraints exactly) and
//!   [`ghz_strategy`] (three parties; the maximally entangled state with
//!   σ_x/σ_y measurements reaching the algebraic parity-game maximum).
//! * [`deterministic_behavior2`] / [`deterministic_behavior3`] — local
//!   deterministic boxes, the vertices every classical (LHV) bound is taken
//!   over.
//! * [`Behavior::mix_with_uniform`] — convex noise mixing.
//!
//! All behaviours can be checked for the no-signalling property exactly, and
//! sampled deterministically given an RNG stream.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerance for behaviour validation (masses, no-signalling).
pub const BEHAVIOR_TOL: f64 = 1e-9;

// ───────────────────────── behaviours ─────────────────────────

/// Conditional distribution p(outputs | inputs) for `parties` boxes with one
/// binary input and one binary output each.
///
/// Index convention: party p's input is bit p of the input index, and its
/// output is bit p of the output index; `probs[iv * 2^P + ov]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    parties: usize,
    probs: Vec<f64>,
}

impl Behavior {
    pub fn new(parties: usize, probs: Vec<f64>) -> Result<Self> {
        if !(parties == 2 || parties == 3) {
            return Err(Error::parameter(format!(
                "behaviours support 2 or 3 parties, got {parties}"
            )));
        }
        let side = 1usize << parties;
        if probs.len() != side * side {
            return Err(Error::validation(format!(
                "expected {} probabilities, got {}",
                side * side,
                probs.len()
            )));
        }
        if let Some(&bad) = probs.iter().find(|p| !p.is_finite() || **p < -BEHAVIOR_TOL) {
            return Err(Error::validation(format!(
                "probability {bad} negative or non-finite"
            )));
        }
        for iv in 0..side {
            let mass: f64 = probs[iv * side..(iv + 1) * side].iter().sum();
            if (mass - 1.0).abs() > BEHAVIOR_TOL {
                return Err(Error::validation(format!(
                    "conditional for input {iv:#b} sums to {mass}, not 1"
                )));
            }
        }
        Ok(Behavior { parties, probs })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    fn side(&self) -> usize {
        1 << self.parties
    }

    /// p(outputs | inputs) by packed indices (bit p ↔ party p).
    pub fn prob_packed(&self, iv: usize, ov: usize) -> f64 {
        self.probs[iv * self.side() + ov]
    }

    /// p(outputs | inputs) by explicit per-party bits.
    pub fn prob(&self, inputs: &[u8], outputs: &[u8]) -> Result<f64> {
        let iv = pack_bits(self.parties, inputs)?;
        let ov = pack_bits(self.parties, outputs)?;
        Ok(self.prob_packed(iv, ov))
    }

    /// Probability that the XOR of all outputs is 0 given packed inputs.
    pub fn even_parity_prob(&self, iv: usize) -> f64 {
        (0..self.side())
            .filter(|ov| ov.count_ones() % 2 == 0)
            .map(|ov| self.prob_packed(iv, ov))
            .sum()
    }

    /// Full-correlator ⟨(−1)^{⊕ outputs}⟩ given packed inputs.
    pub fn correlator(&self, iv: usize) -> f64 {
        2.0 * self.even_parity_prob(iv) - 1.0
    }

    /// Checks the no-signalling property exactly: for every strict non-empty
    /// subset S of parties, the marginal of S's outputs given S's inputs must
    /// not depend on the complement's inputs. Returns the largest deviation.
    pub fn signalling_deviation(&self) -> f64 {
        let p = self.parties;
        let side = self.side();
        let mut worst = 0.0f64;
        for subset in 1..(side - 1) {
            // Enumerate marginal tables over the subset's inputs/outputs.
            let sub_bits: Vec<usize> = (0..p).filter(|b| subset >> b & 1 == 1).collect();
            let env_bits: Vec<usize> = (0..p).filter(|b| subset >> b & 1 == 0).collect();
            for sub_in in 0..(1usize << sub_bits.len()) {
                for sub_out in 0..(1usize << sub_bits.len()) {
                    let mut reference = None;
                    for env_in in 0..(1usize << env_bits.len()) {
                        let mut iv = 0usize;
                        for (i, &b) in sub_bits.iter().enumerate() {
                            iv |= ((sub_in >> i) & 1) << b;
                        }
                        for (i, &b) in env_bits.iter().enumerate() {
                            iv |= ((env_in >> i) & 1) << b;
                        }
                        // Marginalize the complement's outputs.
                        let mut mass = 0.0;
                        for env_out in 0..(1usize << env_bits.len()) {
                            let mut ov = 0usize;
                            for (i, &b) in sub_bits.iter().enumerate() {
                                ov |= ((sub_out >> i) & 1) << b;
                            }
                            for (i, &b) in env_bits.iter().enumerate() {
                                ov |= ((env_out >> i) & 1) << b;
                            }
                            mass += self.prob_packed(iv, ov);
                        }
                        match reference {
                            None => reference = Some(mass),
                            Some(r) => worst = worst.max((mass - r).abs()),
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn is_non_signalling(&self, tol: f64) -> bool {
        self.signalling_deviation() <= tol
    }

    /// Convex mixture with the uniform behaviour: with probability `noise`
    /// the outputs are replaced by fresh fair coins.
    pub fn mix_with_uniform(&self, noise: f64) -> Result<Behavior> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::parameter(format!("noise {noise} outside [0, 1]")));
        }
        let side = self.side();
        let u = 1.0 / side as f64;
        let probs = self
            .probs
            .iter()
            .map(|p| (1.0 - noise) * p + noise * u)
            .collect();
        Behavior::new(self.parties, probs)
    }

    /// Samples the output bits for the given inputs (inverse CDF; consumes
    /// exactly one `f64` from the RNG).
    pub fn sample(&self, inputs: &[u8], rng: &mut impl Rng) -> Result<Vec<u8>> {
        let iv = pack_bits(self.parties, inputs)?;
        let side = self.side();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut ov = side - 1;
        for cand in 0..side {
            acc += self.prob_packed(iv, cand);
            if u < acc {
                ov = cand;
                break;
            }
        }
        Ok((0..self.parties).map(|p| ((ov >> p) & 1) as u8).collect())
    }

    /// CSV rendering: one row per (inputs, outputs) pair with the
    /// probability, e.g. `x,y,a,b,p` for two parties.
    pub fn to_csv(&self) -> String {
        let headers: &str = match self.parties {
            2 => "x,y,a,b,p",
            _ => "x,y,z,a,b,c,p",
        };
        let mut out = String::from(headers);
        out.push('\n');
        let side = self.side();
        for iv in 0..side {
            for ov in 0..side {
                for p in 0..self.parties {
                    out.push_str(&format!("{},", (iv >> p) & 1));
                }
                for p in 0..self.parties {
                    out.push_str(&format!("{},", (ov >> p) & 1));
                }
                out.push_str(&format!("{}\n", self.prob_packed(iv, ov)));
            }
        }
        out
    }

    /// Parses the [`Behavior::to_csv`] format (2 or 3 parties inferred from
    /// the header).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty behaviour CSV".to_string()))?;
        let parties = match header.trim() {
            "x,y,a,b,p" => 2usize,
            "x,y,z,a,b,c,p" => 3,
            other => {
                return Err(Error::validation(format!(
                    "unrecognized behaviour CSV header {other:?}"
                )))
            }
        };
        let side = 1usize << parties;
        let mut probs = vec![f64::NAN; side * side];
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * parties + 1 {
                return Err(Error::validation(format!(
                    "row {line:?} has {} fields, expected {}",
                    fields.len(),
                    2 * parties + 1
                )));
            }
            let mut bits = Vec::with_capacity(2 * parties);
            for f in &fields[..2 * parties] {
                bits.push(match f.trim() {
                    "0" => 0usize,
                    "1" => 1,
                    other => {
                        return Err(Error::validation(format!("bad bit {other:?}")))
                    }
                });
            }
            let iv = (0..parties).fold(0usize, |acc, p| acc | (bits[p] << p));
            let ov = (0..parties).fold(0usize, |acc, p| acc | (bits[parties + p] << p));
            let p: f64 = fields[2 * parties].trim().parse().map_err(|_| {
                Error::validation(format!("bad probability {:?}", fields[2 * parties]))
            })?;
            let slot = &mut probs[iv * side + ov];
            if !slot.is_nan() {
                return Err(Error::validation(format!("row {line:?} repeats an entry")));
            }
            *slot = p;
        }
        if probs.iter().any(|p| p.is_nan()) {
            return Err(Error::validation("behaviour CSV is missing entries".to_string()));
        }
        Behavior::new(parties, probs)
    }
}

fn pack_bits(parties: usize, bits: &[u8]) -> Result<usize> {
    if bits.len() != parties {
        return Err(Error::parameter(format!(
            "expected {parties} bits, got {}",
            bits.len()
        )));
    }
    let mut v = 0usize;
    for (p, &b) in bits.iter().enumerate() {
        if b > 1 {
            return Err(Error::parameter(format!("bit value {b} is neither 0 nor 1")));
        }
        v |= usize::from(b) << p;
    }
    Ok(v)
}

// ───────────────────────── quantum strategies ─────────────────────────

/// 2×2 complex matrix, row-major.
pub type Mat2 = [[Complex64; 2]; 2];

fn mat_identity() -> Mat2 {
    [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ]
}

fn mat_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = *a;
    for (row, brow) in out.iter_mut().zip(b.iter()) {
        for (x, y) in row.iter_mut().zip(brow.iter()) {
            *x -= y;
        }
    }
    out
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let z = Complex64::new(0.0, 0.0);
    let mut out = [[z; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_deviation(a: &Mat2, b: &Mat2) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((a[i][j] - b[i][j]).norm());
        }
    }
    worst
}

/// Rank-1 projector |v⟩⟨v| onto a (not necessarily normalized) 2-vector.
pub fn projector_onto(v: [Complex64; 2]) -> Mat2 {
    let norm2 = v[0].norm_sqr() + v[1].norm_sqr();
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = v[i] * v[j].conj() / norm2;
        }
    }
    out
}

/// An explicit quantum strategy: a shared pure state and, per party and
/// input, the projector for outcome 0 (outcome 1 gets the complement).
#[derive(Debug, Clone)]
pub struct QuantumStrategy {
    pub parties: usize,
    /// 2^parties amplitudes; party p's basis bit is bit p of the index.
    pub state: Vec<Complex64>,
    /// `projectors[p][x]` = outcome-0 projector of party p on input x.
    pub projectors: Vec<[Mat2; 2]>,
}

impl QuantumStrategy {
    /// Validates normalization and that every measurement operator is a
    /// Hermitian projector.
    pub fn validate(&self) -> Result<()> {
        if !(self.parties == 2 || self.parties == 3) {
            return Err(Error::parameter(format!(
                "strategies support 2 or 3 parties, got {}",
                self.parties
            )));
        }
        if self.state.len() != 1 << self.parties {
            return Err(Error::validation(format!(
                "state has {} amplitudes, expected {}",
                self.state.len(),
                1 << self.parties
            )));
        }
        let norm2: f64 = self.state.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > BEHAVIOR_TOL {
            return Err(Error::validation(format!(
                "state norm² = {norm2}, not 1"
            )));
        }
        if self.projectors.len() != self.parties {
            return Err(Error::validation(format!(
                "{} projector families for {} parties",
                self.projectors.len(),
                self.parties
            )));
        }
        for (p, family) in self.projectors.iter().enumerate() {
            for (x, proj) in family.iter().enumerate() {
                // Hermitian: P[i][j] = conj(P[j][i]).
                for i in 0..2 {
                    for j in 0..2 {
                        if (proj[i][j] - proj[j][i].conj()).norm() > BEHAVIOR_TOL {
                            return Err(Error::validation(format!(
                                "party {p} input {x}: operator not Hermitian"
                            )));
                        }
                    }
                }
                // Idempotent: P² = P.
                if mat_deviation(&mat_mul(proj, proj), proj) > BEHAVIOR_TOL {
                    return Err(Error::validation(format!(
                        "party {p} input {x}: operator not a projector"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies party p's 2×2 operator to the state vector.
    fn apply_single(&self, state: &[Complex64], p: usize, m: &Mat2) -> Vec<Complex64> {
        let dim = state.len();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        let bit = 1usize << p;
        for idx in 0..dim {
            let row = (idx >> p) & 1;
            let base = idx & !bit;
            for col in 0..2 {
                let src = base | (col << p);
                out[idx] += m[row][col] * state[src];
            }
        }
        out
    }

    /// The Born-rule behaviour of this strategy.
    pub fn behavior(&self) -> Result<Behavior> {
        self.validate()?;
        let side = 1usize << self.parties;
        let mut probs = Vec::with_capacity(side * side);
        for iv in 0..side {
            for ov in 0..side {
                let mut phi = self.state.clone();
                for p in 0..self.parties {
                    let x = (iv >> p) & 1;
                    let a = (ov >> p) & 1;
                    let proj = &self.projectors[p][x];
                    let m = if a == 0 {
                        *proj
                    } else {
                        mat_sub(&mat_identity(), proj)
                    };
                    phi = self.apply_single(&phi, p, &m);
                }
                let p: f64 = self
                    .state
                    .iter()
                    .zip(&phi)
                    .map(|(s, f)| (s.conj() * f).re)
                    .sum();
                // Born values can undershoot zero by rounding only.
                probs.push(p.max(0.0));
            }
        }
        Behavior::new(self.parties, probs)
    }
}

/// Two-party strategy realizing the Hardy-paradox constraints exactly.
///
/// With s² = (√5−1)/2 and c² = 1 − s², both parties measure, on input 0, the
/// basis containing w₀ = (c, s), and on input 1 the computational basis
/// (w₁ = (1, 0)); outcome 0 projects onto w₀ / w₁. The shared state is
///
/// ```text
///     ψ ∝ (0, −sc, −sc, c²),
/// ```
///
/// which makes p(00|11), p(01|01) and p(10|10) vanish identically while
/// p(00|00) = s⁴c²/(1+s²) = (5√5 − 11)/2 ≈ 0.0901699 stays positive — the
/// largest value this family of constraints admits.
pub fn hardy_strategy() -> QuantumStrategy {
    let s2 = (5.0f64.sqrt() - 1.0) / 2.0;
    let c2 = 1.0 - s2;
    let s = s2.sqrt();
    let c = c2.sqrt();
    let norm = (c2 * (1.0 + s2)).sqrt();
    let re = |v: f64| Complex64::new(v, 0.0);
    // Index bit 0 = party A, bit 1 = party B; the state is symmetric.
    let state = vec![
        re(0.0),
        re(-s * c / norm),
        re(-s * c / norm),
        re(c2 / norm),
    ];
    let w0 = projector_onto([re(c), re(s)]);
    let w1 = projector_onto([re(1.0), re(0.0)]);
    QuantumStrategy {
        parties: 2,
        state,
        projectors: vec![[w0, w1], [w0, w1]],
    }
}

/// Three-party strategy: GHZ state (|000⟩ + |111⟩)/√2 with σ_x (input 0) and
/// σ_y (input 1) measurements; outcome 0 is the +1 eigenvector. Reaches the
/// algebraic maximum of the three-party parity game: the 000 correlator is
/// +1 and the 011/101/110 correlators are −1.
pub fn ghz_strategy() -> QuantumStrategy {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let state = vec![h, z, z, z, z, z, z, h];
    let px = projector_onto([one, one]);
    let py = projector_onto([one, i]);
    QuantumStrategy {
        parties: 3,
        state,
        projectors: vec![[px, py], [px, py], [px, py]],
    }
}

// ───────────────────────── deterministic boxes ─────────────────────────

/// Two-party local deterministic box: party outputs are fixed functions of
/// their own inputs (`a0` = A's output on input 0, etc.).
pub fn deterministic_behavior2(a0: u8, a1: u8, b0: u8, b1: u8) -> Result<Behavior> {
    let a = [a0, a1];
    let b = [b0, b1];
    let mut probs = vec![0.0; 16];
    for iv in 0..4usize {
        let (x, y) = (iv & 1, (iv >> 1) & 1);
        let ov = usize::from(a[x]) | (usize::from(b[y]) << 1);
        probs[iv * 4 + ov] = 1.0;
    }
    Behavior::new(2, probs)
}

/// Three-party local deterministic box (`f[p][x]` = party p's output on x).
pub fn deterministic_behavior3(f: [[u8; 2]; 3]) -> Result<Behavior> {
    let mut probs = vec![0.0; 64];
    for iv in 0..8usize {
        let mut ov = 0usize;
        for (p, fp) in f.iter().enumerate() {
            let x = (iv >> p) & 1;
            ov |= usize::from(fp[x]) << p;
        }
        probs[iv * 8 + ov] = 1.0;
    }
    Behavior::new(3, probs)
}

/// All 16 two-party deterministic boxes.
pub fn all_deterministic2() -> Vec<Behavior> {
    let mut out = Vec::with_capacity(16);
    for code in 0..16u8 {
        let bit = |i: u8| (code >> i) & 1;
        out.push(
            deterministic_behavior2(bit(0), bit(1), bit(2), bit(3))
                .expect("deterministic boxes are valid"),
        );
    }
    out
}

/// All 64 three-party deterministic boxes.
pub fn all_deterministic3() -> Vec<Behavior> {
    let mut out = Vec::with_capacity(64);
    for code in 0..64u8 {
        let bit = |i: u8| (code >> i) & 1;
        out.push(
            deterministic_behavior3([
                [bit(0), bit(1)],
                [bit(2), bit(3)],
                [bit(4), bit(5)],
            ])
            .expect("deterministic boxes are valid"),
        );
    }
    out
}

// ───────────────────────── tests ─────────────────────────
