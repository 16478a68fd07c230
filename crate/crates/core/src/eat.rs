//! Entropy certificates for the round phase: converts a game score into a
//! per-round von-Neumann-entropy rate, accumulates that rate over a long run
//! of rounds with an explicit finite-size penalty, and assembles the final
//! smooth min-entropy bound.
//!
//! The central curve is
//!
//! ```text
//! g_ε(s) = 1 − h(1/2 + √(s(s+Q))/Q),   Q = (1/4 − ε²)²,
//! ```
//!
//! which rises from 0 at score 0, hits exactly 1 at s = Q(√2−1)/2 (the square
//! root simplifies to Q/2 there), and is clamped to 1 above. Because the EAT
//! wants an affine min-tradeoff function, [`min_tradeoff`] replaces the curve
//! above a cut point s_t by its tangent; [`accumulation_g`] then maximizes
//! the certified rate minus the second-order penalty over the cut point.
//!
//! A second route to per-round entropy, used by the three-party game, goes
//! through the guessing-probability bound [`ghz_guessing_bound`] on the
//! parity-correlator sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid size for the coarse scan of the cut point in [`accumulation_g`].
const CUT_GRID: usize = 1024;
/// Golden-section iterations refining the best coarse-grid bracket.
const GOLDEN_ITERS: usize = 200;
/// Validity floor of the three-party guessing bound: 2√2.
pub fn ghz_bound_floor() -> f64 {
    2.0 * std::f64::consts::SQRT_2
}

/// Shannon binary entropy in bits; 0 outside (0,1).
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!("input bias {eps} outside [0, 0.5)")));
    }
    Ok(())
}

/// Q = (1/4 − ε²)², the product of the two window vertex weights; the score
/// scale of the two-party game.
pub fn score_scale(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let q = 0.25 - eps * eps;
    Ok(q * q)
}

/// The score at which the per-round rate saturates at 1 bit:
/// Q·(√2−1)/2.
pub fn rate_threshold(eps: f64) -> Result<f64> {
    Ok(score_scale(eps)? * (std::f64::consts::SQRT_2 - 1.0) / 2.0)
}

/// Game score from the reward/penalty probabilities:
/// (1/2−ε)²·p_win − (1/2+ε)²·p_lose.
pub fn score_from_probs(p_win: f64, p_lose: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if p_win < 0.0 || p_lose < 0.0 || p_win + p_lose > 1.0 + 1e-12 {
        return Err(Error::validation(format!(
            "probabilities ({p_win}, {p_lose}) are not a sub-distribution"
        )));
    }
    let w_minus = (0.5 - eps) * (0.5 - eps);
    let w_plus = (0.5 + eps) * (0.5 + eps);
    Ok(w_minus * p_win - w_plus * p_lose)
}

/// Per-round entropy rate as a function of the score (strict domain): errors
/// unless s/Q ∈ [0, 1]. Returns 1 exactly at and above the saturation
/// threshold, and 1 − h(1/2 + √(s(s+Q))/Q) below it.
pub fn per_round_rate(s: f64, eps: f64) -> Result<f64> {
    let q = score_scale(eps)?;
    let u = s / q;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::parameter(format!(
            "normalized score {u} outside [0, 1]"
        )));
    }
    if u >= (std::f64::consts::SQRT_2 - 1.0) / 2.0 {
        return Ok(1.0);
    }
    Ok(1.0 - binary_entropy(0.5 + (s * (s + q)).sqrt() / q))
}

/// Per-round entropy with clamping semantics for estimated scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerRoundEntropy {
    /// Certified bits per round.
    pub bits: f64,
    /// True when the score certifies nothing (non-positive estimate).
    pub vacuous: bool,
}

/// Tolerant wrapper around [`per_round_rate`] for empirical scores: negative
/// scores certify 0 bits (flagged), scores at or above the threshold certify
/// exactly 1 bit.
pub fn per_round_entropy(m_eps: f64, eps: f64) -> Result<PerRoundEntropy> {
    let q = score_scale(eps)?;
    if m_eps < 0.0 {
        return Ok(PerRoundEntropy { bits: 0.0, vacuous: true });
    }
    let clamped = m_eps.min(q);
    Ok(PerRoundEntropy {
        bits: per_round_rate(clamped, eps)?,
        vacuous: m_eps == 0.0,
    })
}

/// Slope of the rate curve at a cut point s_t ∈ (0, threshold):
/// a(s_t) = log2(q/(1−q))·(2s_t+Q)/(2Q√(s_t(s_t+Q))) with
/// q = 1/2 + √(s_t(s_t+Q))/Q. Diverges at the threshold, tends to
/// 2/(Q·ln 2) at 0.
pub fn rate_slope(s_t: f64, eps: f64) -> Result<f64> {
    let q_scale = score_scale(eps)?;
    let hi = rate_threshold(eps)?;
    if !(s_t > 0.0 && s_t < hi) {
        return Err(Error::parameter(format!(
            "cut point {s_t} outside (0, {hi})"
        )));
    }
    let root = (s_t * (s_t + q_scale)).sqrt();
    let q = 0.5 + root / q_scale;
    Ok((q / (1.0 - q)).log2() * (2.0 * s_t + q_scale) / (2.0 * q_scale * root))
}

/// Affine-above-the-cut min-tradeoff function: the rate curve below s_t, its
/// tangent line above. Continuous at s_t by construction.
pub fn min_tradeoff(s: f64, s_t: f64, eps: f64) -> Result<f64> {
    if s <= s_t {
        return per_round_rate(s, eps);
    }
    let a = rate_slope(s_t, eps)?;
    let b = per_round_rate(s_t, eps)? - a * s_t;
    Ok(a * s + b)
}

// ───────────────────────── accumulation ─────────────────────────

/// Parameters of an accumulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EatConfig {
    /// Smoothing parameter γ ∈ (0, 1).
    pub gamma: f64,
    /// Accumulation error budget ε_EA ∈ (0, 1).
    pub eps_ea: f64,
    /// Abort threshold δ > 0 on the per-block empirical score.
    pub delta: f64,
    /// Number of game rounds (half the number of consumed input bits).
    pub half_block: u64,
    /// Input bias ε ∈ [0, 1/2).
    pub eps: f64,
}

impl EatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::parameter(format!("gamma {} outside (0,1)", self.gamma)));
        }
        if !(0.0 < self.eps_ea && self.eps_ea < 1.0) {
            return Err(Error::parameter(format!("eps_ea {} outside (0,1)", self.eps_ea)));
        }
        if self.delta <= 0.0 {
            return Err(Error::parameter(format!("delta {} must be positive", self.delta)));
        }
        if self.half_block == 0 {
            return Err(Error::parameter("half_block must be at least 1".to_string()));
        }
        check_eps(self.eps)
    }
}

fn accumulation_penalty(cfg: &EatConfig, slope_term: f64) -> f64 {
    let m_bits = 2.0 * cfg.half_block as f64;
    (2.0 / m_bits).sqrt()
        * 2.0
        * slope_term
        * (1.0 - 2.0 * (cfg.gamma * cfg.eps_ea).log2()).sqrt()
}

fn accumulation_objective(cfg: &EatConfig, s_t: f64, slope_term: impl Fn(f64) -> f64) -> Result<f64> {
    let a = rate_slope(s_t, cfg.eps)?;
    Ok(min_tradeoff(cfg.delta, s_t, cfg.eps)? - accumulation_penalty(cfg, slope_term(a)))
}

fn accumulate(cfg: &EatConfig, slope_term: impl Fn(f64) -> f64 + Copy) -> Result<f64> {
    cfg.validate()?;
    let hi = rate_threshold(cfg.eps)?;
    let (lo_end, hi_end) = (hi * 1e-9, hi * (1.0 - 1e-9));
    // Coarse log-spaced scan of the cut point.
    let grid = |i: usize, n: usize| -> f64 {
        let t = i as f64 / (n - 1) as f64;
        10f64.powf(lo_end.log10() * (1.0 - t) + hi_end.log10() * t)
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0usize;
    for i in 0..CUT_GRID {
        let v = accumulation_objective(cfg, grid(i, CUT_GRID), slope_term)?;
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // Golden-section refinement inside the bracketing grid cells.
    let mut a = grid(best_i.saturating_sub(1), CUT_GRID);
    let mut b = grid((best_i + 1).min(CUT_GRID - 1), CUT_GRID);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = accumulation_objective(cfg, c, slope_term)?;
    let mut fd = accumulation_objective(cfg, d, slope_term)?;
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() < 1e-18 * hi {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = accumulation_objective(cfg, c, slope_term)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = accumulation_objective(cfg, d, slope_term)?;
        }
    }
    Ok(best.max(fc).max(fd))
}

/// Certified entropy rate per round for the two-party game: the maximum over
/// the cut point s_t of
///
/// ```text
/// f_min(δ, s_t) − √(2/m')·2·(log2 9 + a(s_t)(1/2+ε)²)·√(1 − 2·log2(γ·ε_EA))
/// ```
///
/// with m' = 2·half_block. May be negative for small runs (the caller clamps
/// the resulting certificate at zero).
pub fn accumulation_g(cfg: &EatConfig) -> Result<f64> {
    let eps = cfg.eps;
    accumulate(cfg, move |a| 9f64.log2() + a * (0.5 + eps) * (0.5 + eps))
}

/// Three-party variant of [`accumulation_g`]: the per-step output alphabet is
/// the single parity bit, so the alphabet constant drops to log2(5), and the
/// gradient term enters through its integer ceiling.
pub fn accumulation_g_three_party(cfg: &EatConfig) -> Result<f64> {
    let eps = cfg.eps;
    accumulate(cfg, move |a| {
        5f64.log2() + (a * (0.5 + eps).powi(3)).ceil()
    })
}

/// The explicit chain-rule cost of splitting a smoothing budget γ:
/// log2(1/(1 − √(1 − γ²/16))).
pub fn chain_penalty(gamma: f64) -> Result<f64> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::parameter(format!("gamma {gamma} outside (0,1)")));
    }
    Ok((1.0 / (1.0 - (1.0 - gamma * gamma / 16.0).sqrt())).log2())
}

/// A finished accumulation claim: smooth min-entropy of the round outputs
/// given inputs and side information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyCertificate {
    /// Certified smooth min-entropy in bits, clamped at 0.
    pub hmin_bound: f64,
    /// Smoothing parameter the bound holds for.
    pub gamma: f64,
    /// Chain-rule cost already subtracted from the bound.
    pub chain_penalty: f64,
    /// Per-round rate g before multiplication.
    pub rate: f64,
    /// Rounds the rate was accumulated over.
    pub half_block: u64,
}

/// Assembles the accumulation rate into the final bound
/// hmin = max(0, half_block·g − chain_penalty).
pub fn certificate(cfg: &EatConfig) -> Result<EntropyCertificate> {
    let rate = accumulation_g(cfg)?;
    let penalty = chain_penalty(cfg.gamma)?;
    Ok(EntropyCertificate {
        hmin_bound: (cfg.half_block as f64 * rate - penalty).max(0.0),
        gamma: cfg.gamma,
        chain_penalty: penalty,
        rate,
        half_block: cfg.half_block,
    })
}

// ───────────────────────── three-party guessing bound ─────────────────────────

/// Adversarial guessing probability of one party's outcome as a function of
/// the parity-correlator sum M ∈ [2√2, 4]:
///
/// ```text
/// f(M) = 1 + 1/√2 − M/4          for 2√2 ≤ M ≤ 2+√2
/// f(M) = 1/2 + √(M(1−M/4))/2     for 2+√2 ≤ M ≤ 4
/// ```
///
/// Continuous at 2+√2 (the line is tangent to the curve there); equals 1 at
/// the classical-reachable floor 2√2 and 1/2 at the algebraic maximum 4.
pub fn ghz_guessing_bound(m: f64) -> Result<f64> {
    let floor = ghz_bound_floor();
    if !(floor - 1e-12..=4.0 + 1e-12).contains(&m) {
        return Err(Error::parameter(format!(
            "correlator sum {m} outside [{floor}, 4]"
        )));
    }
    let m = m.min(4.0);
    if m <= 2.0 + std::f64::consts::SQRT_2 {
        Ok(1.0 + std::f64::consts::FRAC_1_SQRT_2 - m / 4.0)
    } else {
        Ok(0.5 + (m * (1.0 - m / 4.0)).sqrt() / 2.0)
    }
}

/// Entropy certified for one party of the three-party game from a score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GhzEntropy {
    /// −log2 of the guessing bound, capped at 1 bit. Negative exactly when
    /// the bound is vacuous.
    pub bits: f64,
    /// Correlator sum the score maps to (clamped at 4).
    pub m: f64,
    /// True when m fell below the validity floor 2√2: the linear branch then
    /// exceeds 1 and certifies nothing.
    pub vacuous: bool,
}

/// Converts a three-party game score into a single-party min-entropy bound:
/// maps the score to a correlator sum via
/// [`crate::mdl::correlator_from_score`], then applies
/// −log2([`ghz_guessing_bound`]). Scores mapping above 4 (possible only
/// through sampling noise) are clamped to 4; scores mapping below 2√2 are
/// flagged vacuous and reported via the linear branch (a negative number of
/// bits).
pub fn ghz_entropy_from_mdl(mdl: f64, eps: f64) -> Result<GhzEntropy> {
    let m_raw = crate::mdl::correlator_from_score(mdl, eps)?;
    let m = m_raw.min(4.0);
    let floor = ghz_bound_floor();
    if m < floor {
        let f = 1.0 + std::f64::consts::FRAC_1_SQRT_2 - m / 4.0;
        return Ok(GhzEntropy { bits: -f.log2(), m, vacuous: true });
    }
    let bits = (-ghz_guessing_bound(m)?.log2()).min(1.0);
    Ok(GhzEntropy { bits, m, vacuous: false })
}

// ───────────────────────── tests ─────────────────────────
