//! Two-source extraction: the cyclic inner-product kernel, its basic error
//! bound, the parameter gate for the stronger multi-bit composition, and the
//! conversions that adapt product-source guarantees to the protocol's
//! correlated setting.
//!
//! The kernel is
//!
//! ```text
//!     bit_i(x1, x2)  =  Σ_j  x1[j] · x2[(j + i) mod n2]   (mod 2),
//! ```
//!
//! i.e. inner products of the first source against cyclic shifts of the
//! second. For a single output bit and equal lengths n with independent
//! sources of min-entropy k1 and k2, the bias argument gives statistical
//! error at most `2^((n − k1 − k2)/2 − 1)` ([`ip_strong_error_bound`]).
//!
//! Multi-bit output at useful rates needs the stronger composition whose
//! parameter inequalities are collected in [`RazParams`]; they are evaluated
//! exactly and reported per inequality with margins, so a caller can see
//! which constraint blocks a configuration.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

// ───────────────────────── the kernel ─────────────────────────

/// Extracts `m` bits as inner products of `x1` against cyclic shifts of `x2`.
///
/// `x1` may be longer or shorter than `x2`; indices into `x2` wrap modulo its
/// length. `m` must not exceed the number of distinct shifts, `x2.len()`.
pub fn two_source_extract(x1: &BitString, x2: &BitString, m: usize) -> Result<BitString> {
    if x1.is_empty() || x2.is_empty() {
        return Err(Error::parameter("both sources must be non-empty".to_string()));
    }
    if m == 0 || m > x2.len() {
        return Err(Error::parameter(format!(
            "output length {m} outside 1..={}",
            x2.len()
        )));
    }
    let n2 = x2.len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut acc = 0u8;
        for (j, &b1) in x1.bits().iter().enumerate() {
            acc ^= b1 & x2.bit((j + i) % n2);
        }
        out.push(acc);
    }
    BitString::from_bits(out)
}

/// Strong one-bit error bound for the inner-product kernel on equal-length
/// independent sources: `2^((n − k1 − k2)/2 − 1)`.
pub fn ip_strong_error_bound(n: usize, k1: f64, k2: f64) -> f64 {
    ((n as f64 - k1 - k2) / 2.0 - 1.0).exp2()
}

// ───────────────────────── multi-bit parameter gate ─────────────────────────

/// Parameters for the stronger multi-bit two-source composition.
///
/// Conventions: source 1 has length `n1` and min-entropy `k1p`; source 2 has
/// length `n2` and min-entropy `k2p`; `m` output bits are requested; and
/// `delta_p` is the rate-slack parameter in (0, 19/32).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RazParams {
    pub n1: usize,
    pub n2: usize,
    pub k1p: f64,
    pub k2p: f64,
    pub m: usize,
    pub delta_p: f64,
}

/// One evaluated inequality: `lhs ≥ rhs` (or containment for the range
/// check), with the slack `lhs − rhs`.
#[derive(Debug, Clone, Serialize)]
pub struct Margin {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Full evaluation of the parameter gate.
#[derive(Debug, Clone, Serialize)]
pub struct RazCheck {
    pub margins: Vec<Margin>,
    pub all_satisfied: bool,
    /// Output error ε' = (√3/2) · 2^{−m/4} when the gate passes.
    pub eps_prime: f64,
}

impl RazParams {
    /// Output error of the composition at these parameters.
    pub fn eps_prime(&self) -> f64 {
        (3.0f64).sqrt() / 2.0 * (-(self.m as f64) / 4.0).exp2()
    }

    /// Evaluates all five parameter inequalities and returns their margins.
    pub fn evaluate(&self) -> Result<RazCheck> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::parameter(format!(
                "source lengths ({}, {}) must be at least 2",
                self.n1, self.n2
            )));
        }
        let n1 = self.n1 as f64;
        let n2 = self.n2 as f64;
        let dp = self.delta_p;
        let mut margins = Vec::with_capacity(5);

        margins.push(Margin {
            name: "delta_range",
            lhs: dp,
            rhs: 19.0 / 32.0,
            satisfied: dp > 0.0 && dp < 19.0 / 32.0,
        });

        // Source 1 must be long enough to absorb the log overheads.
        let rhs = 6.0 * n1.log2() + 2.0 * n2.log2();
        margins.push(Margin {
            name: "source_length",
            lhs: n1,
            rhs,
            satisfied: n1 >= rhs,
        });

        // Source 1 entropy: strictly more than half its length plus logs.
        let rhs = (0.5 + dp) * n1 + 3.0 * n1.log2() + n2.log2();
        margins.push(Margin {
            name: "first_entropy",
            lhs: self.k1p,
            rhs,
            satisfied: self.k1p >= rhs,
        });

        // Source 2 entropy: logarithmic in the slack source 1 leaves behind.
        let gap = (1.0 + 3.0 * dp / 19.0) * n1 - self.k1p;
        let rhs = if gap > 0.0 {
            163.0 / 32.0 * gap.log2()
        } else {
            // Source 1 already exceeds the usable range; no constraint left.
            f64::NEG_INFINITY
        };
        margins.push(Margin {
            name: "second_entropy",
            lhs: self.k2p,
            rhs,
            satisfied: self.k2p >= rhs,
        });

        // Output length.
        let rhs = 16.0 * dp / 19.0 * (n1 / 8.0).min(4.0 * self.k2p / 163.0) - 1.0;
        margins.push(Margin {
            name: "output_length",
            lhs: self.m as f64,
            rhs,
            satisfied: self.m >= 1 && (self.m as f64) <= rhs,
        });

        let all_satisfied = margins.iter().all(|c| c.satisfied);
        Ok(RazCheck {
            margins,
            all_satisfied,
            eps_prime: self.eps_prime(),
        })
    }

    /// Like [`RazParams::evaluate`] but errs (naming the failing
    /// inequalities) unless every constraint holds.
    pub fn require(&self) -> Result<RazCheck> {
        let check = self.evaluate()?;
        if check.all_satisfied {
            Ok(check)
        } else {
            let failing: Vec<&str> = check
                .margins
                .iter()
                .filter(|c| !c.satisfied)
                .map(|c| c.name)
                .collect();
            Err(Error::infeasible(format!(
                "two-source parameter gate failed: {}",
                failing.join(", ")
            )))
        }
    }

    /// Largest output length the gate admits at these parameters (0 if the
    /// other inequalities already fail at m = 1).
    pub fn max_output_bits(&self) -> usize {
        let dp = self.delta_p;
        let ceiling =
            16.0 * dp / 19.0 * ((self.n1 as f64) / 8.0).min(4.0 * self.k2p / 163.0) - 1.0;
        if ceiling < 1.0 {
            0
        } else {
            ceiling.floor() as usize
        }
    }
}

// ───────────────────────── model conversions ─────────────────────────

/// Result of converting a product-source extractor guarantee to the
/// correlated (Markov-chain) setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovConverted {
    /// Entropy the correlated setting must supply: k + log2(1/ε).
    pub k_required: f64,
    /// Error after conversion: √(3 · ε · 2^{m−2}).
    pub eps_markov: f64,
}

/// Converts a (k, ε) product-source guarantee for an m-bit extractor into
/// the correlated setting: the entropy requirement grows by log2(1/ε) and
/// the error becomes √(3 · ε · 2^{m−2}).
pub fn markov_convert(k: f64, eps: f64, m: usize) -> Result<MarkovConverted> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::parameter(format!("error {eps} outside (0, 1)")));
    }
    Ok(MarkovConverted {
        k_required: k + (1.0 / eps).log2(),
        eps_markov: (3.0 * eps * ((m as f64) - 2.0).exp2()).sqrt(),
    })
}

/// Distance of the final output from ideal uniform-and-independent, given
/// the seeded-table error ε_s and the fused-extraction error ε: capped at 1.
pub fn final_output_distance_bound(eps_s: f64, eps: f64) -> f64 {
    (6.0 * (eps_s + eps)).min(1.0)
}

// ───────────────────────── tests ─────────────────────────
