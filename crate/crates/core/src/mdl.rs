//! Measurement-dependent locality games: scores that stay positive for the
//! bundled quantum devices even when the round inputs are only ε-close to
//! fair coins.
//!
//! Each game fixes a set of "reward" and "penalty" events and weights them by
//! the extreme input-distribution window vertices:
//!
//! * Two-party game (Hardy constraints), input pair distribution ν with
//!   ν(x,y) ∈ [(½−ε)², (½+ε)²]:
//!
//!   ```text
//!   score = (½−ε)²·ν(00)·p(00|00)
//!         − (½+ε)²·[ν(01)·p(01|01) + ν(10)·p(10|10) + ν(11)·p(00|11)]
//!   ```
//!
//! * Three-party parity game, ν(x,y,z) ∈ [(½−ε)³, (½+ε)³]:
//!
//!   ```text
//!   score = (½−ε)³·ν(000)·p_even(000)
//!         − (½+ε)³·[ν(011)·p_even(011) + ν(101)·p_even(101) + ν(110)·p_even(110)]
//!   ```
//!
//! The classical (local deterministic + worst window ν) maximum of both games
//! is exactly 0 — every deterministic box that triggers the reward also
//! triggers a penalty, and the vertex weights are arranged so the two cancel
//! exactly — while the bundled quantum strategies score strictly positive for
//! every ε < ½. [`lhv_max_two_party`] and [`lhv_max_three_party`] compute the
//! classical maxima exhaustively rather than assuming them.

use serde::{Deserialize, Serialize};

use crate::device::{all_deterministic2, all_deterministic3, Behavior};
use crate::error::{Error, Result};

/// Which scoring game a protocol instance plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Game {
    /// Two parties, Hardy-constraint reward/penalty events.
    #[default]
    TwoParty,
    /// Three parties, parity reward/penalty events.
    ThreeParty,
}

impl Game {
    pub fn parties(&self) -> usize {
        match self {
            Game::TwoParty => 2,
            Game::ThreeParty => 3,
        }
    }
}

/// The admissible window for a single input-tuple probability.
pub fn nu_window(game: Game, eps: f64) -> Result<(f64, f64)> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!("window radius {eps} outside [0, 0.5)")));
    }
    let p = game.parties() as i32;
    Ok(((0.5 - eps).powi(p), (0.5 + eps).powi(p)))
}

/// Uniform input distribution for a game.
pub fn uniform_nu(game: Game) -> Vec<f64> {
    let n = 1usize << game.parties();
    vec![1.0 / n as f64; n]
}

fn validate_nu(game: Game, nu: &[f64], eps: f64) -> Result<()> {
    let size = 1usize << game.parties();
    if nu.len() != size {
        return Err(Error::validation(format!(
            "input distribution has {} entries, expected {size}",
            nu.len()
        )));
    }
    let (lo, hi) = nu_window(game, eps)?;
    for (i, &p) in nu.iter().enumerate() {
        if !(lo - 1e-12..=hi + 1e-12).contains(&p) {
            return Err(Error::validation(format!(
                "ν({i:#b}) = {p} outside the window [{lo}, {hi}]"
            )));
        }
    }
    let mass: f64 = nu.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("ν sums to {mass}, not 1")));
    }
    Ok(())
}

/// Reward/penalty terms of a game as (packed input, packed output predicate)
/// pairs; the predicate is a set of packed outputs.
struct GameTerms {
    /// (input, outputs counted) for the reward.
    reward: (usize, Vec<usize>),
    /// (input, outputs counted) for each penalty.
    penalties: Vec<(usize, Vec<usize>)>,
}

fn terms(game: Game) -> GameTerms {
    match game {
        // Packed as bit0 = x (party A), bit1 = y (party B); outputs likewise.
        Game::TwoParty => GameTerms {
            reward: (0b00, vec![0b00]),
            penalties: vec![
                (0b10, vec![0b10]), // p(a=0, b=1 | x=0, y=1)
                (0b01, vec![0b01]), // p(a=1, b=0 | x=1, y=0)
                (0b11, vec![0b00]), // p(a=0, b=0 | x=1, y=1)
            ],
        },
        Game::ThreeParty => {
            let even: Vec<usize> = (0..8).filter(|ov: &usize| ov.count_ones() % 2 == 0).collect();
            GameTerms {
                reward: (0b000, even.clone()),
                penalties: vec![
                    (0b110, even.clone()), // inputs (x,y,z) = (0,1,1)
                    (0b101, even.clone()), // (1,0,1)
                    (0b011, even),         // (1,1,0)
                ],
            }
        }
    }
}

fn term_prob(b: &Behavior, input: usize, outputs: &[usize]) -> f64 {
    outputs.iter().map(|&ov| b.prob_packed(input, ov)).sum()
}

/// The game score of a behaviour under an explicit input distribution ν
/// (validated against the ε-window).
pub fn mdl_score(game: Game, b: &Behavior, nu: &[f64], eps: f64) -> Result<f64> {
    if b.parties() != game.parties() {
        return Err(Error::parameter(format!(
            "behaviour has {} parties, game needs {}",
            b.parties(),
            game.parties()
        )));
    }
    validate_nu(game, nu, eps)?;
    let (lo, hi) = nu_window(game, eps)?;
    let t = terms(game);
    let mut score = lo * nu[t.reward.0] * term_prob(b, t.reward.0, &t.reward.1);
    for (iv, outs) in &t.penalties {
        score -= hi * nu[*iv] * term_prob(b, *iv, outs);
    }
    Ok(score)
}

/// Maximizes (or minimizes) a linear functional over the window polytope
/// {ν : lo ≤ ν_i ≤ hi, Σν = 1} by the greedy water-filling rule, which is
/// exact for box-plus-simplex constraints.
fn optimize_nu(coeffs: &[f64], lo: f64, hi: f64, maximize: bool) -> f64 {
    let n = coeffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    if maximize {
        order.sort_by(|&i, &j| coeffs[j].total_cmp(&coeffs[i]));
    } else {
        order.sort_by(|&i, &j| coeffs[i].total_cmp(&coeffs[j]));
    }
    let mut nu = vec![lo; n];
    let mut budget = 1.0 - lo * n as f64;
    for &i in &order {
        let add = budget.min(hi - lo);
        nu[i] += add;
        budget -= add;
        if budget <= 0.0 {
            break;
        }
    }
    coeffs.iter().zip(&nu).map(|(c, v)| c * v).sum()
}

fn lhv_max(game: Game, eps: f64, boxes: &[Behavior]) -> Result<f64> {
    let (lo, hi) = nu_window(game, eps)?;
    let t = terms(game);
    let size = 1usize << game.parties();
    let mut best = f64::NEG_INFINITY;
    for b in boxes {
        // Linear coefficients of the score in ν.
        let mut coeffs = vec![0.0f64; size];
        coeffs[t.reward.0] += lo * term_prob(b, t.reward.0, &t.reward.1);
        for (iv, outs) in &t.penalties {
            coeffs[*iv] -= hi * term_prob(b, *iv, outs);
        }
        best = best.max(optimize_nu(&coeffs, lo, hi, true));
    }
    Ok(best)
}

/// Exact classical maximum of the two-party game: deterministic boxes ×
/// worst-case window distribution.
pub fn lhv_max_two_party(eps: f64) -> Result<f64> {
    lhv_max(Game::TwoParty, eps, &all_deterministic2())
}

/// Exact classical maximum of the three-party game.
pub fn lhv_max_three_party(eps: f64) -> Result<f64> {
    lhv_max(Game::ThreeParty, eps, &all_deterministic3())
}

/// Extremes of the score over the ν window for a fixed behaviour, as
/// (worst, best). The worst case is what honest-device completeness
/// planning must assume.
pub fn mdl_score_extremes(game: Game, b: &Behavior, eps: f64) -> Result<(f64, f64)> {
    if b.parties() != game.parties() {
        return Err(Error::parameter(format!(
            "behaviour has {} parties, game needs {}",
            b.parties(),
            game.parties()
        )));
    }
    let (lo, hi) = nu_window(game, eps)?;
    let t = terms(game);
    let size = 1usize << game.parties();
    let mut coeffs = vec![0.0f64; size];
    coeffs[t.reward.0] += lo * term_prob(b, t.reward.0, &t.reward.1);
    for (iv, outs) in &t.penalties {
        coeffs[*iv] -= hi * term_prob(b, *iv, outs);
    }
    Ok((
        optimize_nu(&coeffs, lo, hi, false),
        optimize_nu(&coeffs, lo, hi, true),
    ))
}

// ───────────────────────── per-round weights ─────────────────────────

/// Per-round score contribution for the two-party game. Averaged over rounds
/// with inputs drawn from ν, the empirical mean is an unbiased estimate of
/// [`mdl_score`].
pub fn round_weight_two_party(x: u8, y: u8, a: u8, b: u8, eps: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!("window radius {eps} outside [0, 0.5)")));
    }
    let w_minus = (0.5 - eps) * (0.5 - eps);
    let w_plus = (0.5 + eps) * (0.5 + eps);
    Ok(match (x, y, a, b) {
        (0, 0, 0, 0) => w_minus,
        (0, 1, 0, 1) | (1, 0, 1, 0) | (1, 1, 0, 0) => -w_plus,
        _ => 0.0,
    })
}

/// Per-round score contribution for the three-party game.
pub fn round_weight_three_party(
    x: u8,
    y: u8,
    z: u8,
    a: u8,
    b: u8,
    c: u8,
    eps: f64,
) -> Result<f64> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!("window radius {eps} outside [0, 0.5)")));
    }
    let w_minus = (0.5 - eps).powi(3);
    let w_plus = (0.5 + eps).powi(3);
    let even = a ^ b ^ c == 0;
    Ok(match (x, y, z) {
        (0, 0, 0) if even => w_minus,
        (0, 1, 1) | (1, 0, 1) | (1, 1, 0) if even => -w_plus,
        _ => 0.0,
    })
}

// ───────────────────────── parity-correlator conversions ─────────────────────────

/// Parity-game correlator sum of a three-party behaviour:
/// E(000) − E(011) − E(101) − E(110); classical boxes stay at ≤ 2, the
/// bundled three-party strategy reaches 4.
pub fn parity_correlator_sum(b: &Behavior) -> Result<f64> {
    if b.parties() != 3 {
        return Err(Error::parameter(format!(
            "parity correlator needs 3 parties, got {}",
            b.parties()
        )));
    }
    Ok(b.correlator(0b000) - b.correlator(0b110) - b.correlator(0b101) - b.correlator(0b011))
}

/// Lower bound on the parity-correlator sum implied by a three-party game
/// score: M ≥ 2·score/(¼ − ε²)³ + 2.
pub fn correlator_from_score(score: f64, eps: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!("window radius {eps} outside [0, 0.5)")));
    }
    let q = 0.25 - eps * eps;
    Ok(2.0 * score / (q * q * q) + 2.0)
}

// ───────────────────────── tests ─────────────────────────
